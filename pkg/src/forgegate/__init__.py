"""forgegate: GAN-synthesized training data and a grouped-convolution
classifier for detecting human-edited face images, with a Haar-cascade face
gate in between."""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]

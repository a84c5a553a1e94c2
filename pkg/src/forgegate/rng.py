"""Seeded random generators with serializable state.

Every stochastic choice in the toolkit (weight init, latent draws, shuffles,
flips) is drawn from a single ``numpy.random.Generator`` owned by the calling
driver, so a run is a pure function of its seed and its inputs. The state
round-trips through bytes for checkpointing.
"""

import json

import numpy as np


def make_rng(seed: int | None) -> np.random.Generator:
    return np.random.default_rng(seed)


def rng_state_bytes(rng: np.random.Generator) -> bytes:
    """Serialize the full generator state (bit-exact restore)."""
    return json.dumps(rng.bit_generator.state, sort_keys=True).encode("utf-8")


def rng_from_state_bytes(blob: bytes) -> np.random.Generator:
    state = json.loads(blob.decode("utf-8"))
    bitgen_cls = getattr(np.random, state["bit_generator"])
    bitgen = bitgen_cls()
    bitgen.state = state
    return np.random.Generator(bitgen)

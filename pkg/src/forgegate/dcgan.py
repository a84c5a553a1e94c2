"""Adapted DCGAN: generator/discriminator builders, the adversarial training
loop with BCE or weight-clipped Wasserstein losses, checkpointing, and the
generator-loss early-stopping rule.

Architecture arithmetic, shared by both networks: a resolution-R model has
L = log2(R/4) + 1 hidden layers (5 at 64, 6 at 128). The generator projects
the latent vector to a 4x4 grid and doubles the spatial extent per remaining
hidden layer, halving the feature maps; an output layer maps to 3 channels in
[0,1] (tanh remapped by (x+1)/2). The discriminator mirrors it: stride-2 4x4
convolutions that halve the extent and double the maps, the last hidden layer
collapsing 4x4 to the 1x1 head input. Hidden layers carry batchnorm and
leaky-ReLU activations, except no batchnorm on the generator output or the
discriminator input layer.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .autodiff import (
    Adam,
    BatchNorm2d,
    ConvTranspose2d,
    Conv2d,
    Linear,
    Tensor,
    add,
    affine,
    backward,
    bce_loss,
    leaky_relu,
    mean_all,
    neg,
    pack_tensors,
    reshape,
    sigmoid,
    sub,
    tanh,
    unpack_tensors,
)
from .curves import LossCurve
from .errors import (
    CheckpointFormatError,
    ConfigurationError,
    ContractError,
    DivergenceError,
)
from .ioutils import atomic_write_bytes

LEAKY_SLOPE = 0.2
EARLY_STOP_THRESHOLD = 1.0
OUTPUT_KERNEL = 3
CHECKPOINT_MAGIC = b"FGG1"

LOSS_MODES = ("bce", "wasserstein_clipped")
STOP_RULES = ("loss_threshold", "fixed_epochs")


@dataclass
class GanConfig:
    resolution: int = 64
    z_dim: int = 100
    gen_base_maps: int = 64
    disc_first_maps: int = 64
    kernel: int = 4
    stride: int = 2
    lr: float = 0.0002
    loss_mode: str = "bce"
    clip_limit: float = 0.01
    batch_size: int = 32
    max_epochs: int = 700
    stop_rule: str = "loss_threshold"
    label_smoothing: float = 0.0
    grad_clip_norm: float | None = None

    def __post_init__(self):
        r = self.resolution
        if r < 16 or r > 128 or r & (r - 1):
            raise ConfigurationError(f"resolution must be a power of two in [16, 128], got {r}")
        if self.kernel != 4 or self.stride != 2:
            raise ConfigurationError("hidden layers use a fixed 4x4 kernel with stride 2")
        if self.z_dim < 1:
            raise ConfigurationError(f"z_dim must be positive, got {self.z_dim}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigurationError(f"loss_mode must be one of {LOSS_MODES}")
        if self.stop_rule not in STOP_RULES:
            raise ConfigurationError(f"stop_rule must be one of {STOP_RULES}")
        if self.loss_mode == "wasserstein_clipped" and self.clip_limit <= 0:
            raise ConfigurationError(f"clip_limit must be positive, got {self.clip_limit}")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be at least 2 (batch statistics)")
        last = self.gen_base_maps >> (self.hidden_layers - 1)
        if last < 1:
            raise ConfigurationError(
                f"gen_base_maps={self.gen_base_maps} too small to halve across "
                f"{self.hidden_layers} hidden layers"
            )

    @property
    def hidden_layers(self) -> int:
        return int(math.log2(self.resolution // 4)) + 1

    def generator_maps(self) -> list[int]:
        return [self.gen_base_maps >> i for i in range(self.hidden_layers)]

    def discriminator_maps(self) -> list[int]:
        return [self.disc_first_maps << i for i in range(self.hidden_layers)]


def should_early_stop(g_loss: float) -> bool:
    """Stop as soon as the generator loss falls strictly below 1.0."""
    if not math.isfinite(g_loss):
        raise ContractError(f"early-stop check on non-finite loss {g_loss}")
    return g_loss < EARLY_STOP_THRESHOLD


class Generator:
    def __init__(self, config: GanConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        self.epochs_trained = 0
        maps = config.generator_maps()
        self.hidden: list[tuple[ConvTranspose2d, BatchNorm2d]] = []
        in_ch = config.z_dim
        for i, out_ch in enumerate(maps):
            stride = 1 if i == 0 else config.stride
            padding = 0 if i == 0 else 1
            conv = ConvTranspose2d(in_ch, out_ch, config.kernel, stride, padding, rng=rng, dtype=dtype)
            bn = BatchNorm2d(out_ch, rng=rng, dtype=dtype)
            self.hidden.append((conv, bn))
            in_ch = out_ch
        # output layer: 3 channels, spatial extent preserved, no batchnorm
        self.out = ConvTranspose2d(in_ch, 3, OUTPUT_KERNEL, 1, 1, rng=rng, dtype=dtype)

    @property
    def is_trained(self) -> bool:
        return self.epochs_trained > 0

    def forward(self, z: Tensor) -> Tensor:
        n = z.shape[0]
        x = reshape(z, (n, self.config.z_dim, 1, 1))
        for conv, bn in self.hidden:
            x = leaky_relu(bn(conv(x)), LEAKY_SLOPE)
        return affine(tanh(self.out(x)), 0.5, 0.5)

    def __call__(self, z: Tensor) -> Tensor:
        return self.forward(z)

    def set_mode(self, mode: str) -> None:
        for _, bn in self.hidden:
            bn.mode = mode

    def params(self) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for i, (conv, bn) in enumerate(self.hidden):
            named.update(conv.params(f"gen/hidden{i}"))
            named.update(bn.params(f"gen/hidden{i}/bn"))
        named.update(self.out.params("gen/out"))
        return named

    def buffers(self) -> dict[str, np.ndarray]:
        named: dict[str, np.ndarray] = {}
        for i, (_, bn) in enumerate(self.hidden):
            named.update(bn.buffers(f"gen/hidden{i}/bn"))
        return named


class Discriminator:
    def __init__(self, config: GanConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        maps = config.discriminator_maps()
        layers = config.hidden_layers
        self.hidden: list[tuple[Conv2d, BatchNorm2d | None]] = []
        in_ch = 3
        for i, out_ch in enumerate(maps):
            padding = 1 if i < layers - 1 else 0  # final hidden layer maps 4x4 -> 1x1
            conv = Conv2d(in_ch, out_ch, config.kernel, config.stride, padding, rng=rng, dtype=dtype)
            bn = BatchNorm2d(out_ch, rng=rng, dtype=dtype) if i > 0 else None
            self.hidden.append((conv, bn))
            in_ch = out_ch
        self.head = Linear(in_ch, 1, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        for conv, bn in self.hidden:
            x = conv(x)
            if bn is not None:
                x = bn(x)
            x = leaky_relu(x, LEAKY_SLOPE)
        n, c = x.shape[0], x.shape[1]
        score = self.head(reshape(x, (n, c)))
        if self.config.loss_mode == "bce":
            return sigmoid(score)
        return score

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def set_mode(self, mode: str) -> None:
        for _, bn in self.hidden:
            if bn is not None:
                bn.mode = mode

    def params(self) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for i, (conv, bn) in enumerate(self.hidden):
            named.update(conv.params(f"disc/hidden{i}"))
            if bn is not None:
                named.update(bn.params(f"disc/hidden{i}/bn"))
        named.update(self.head.params("disc/head"))
        return named

    def buffers(self) -> dict[str, np.ndarray]:
        named: dict[str, np.ndarray] = {}
        for i, (_, bn) in enumerate(self.hidden):
            if bn is not None:
                named.update(bn.buffers(f"disc/hidden{i}/bn"))
        return named


def build_generator(config: GanConfig, rng: np.random.Generator, dtype=np.float32) -> Generator:
    return Generator(config, rng, dtype=dtype)


def build_discriminator(config: GanConfig, rng: np.random.Generator, dtype=np.float32) -> Discriminator:
    return Discriminator(config, rng, dtype=dtype)


def _clip_global_grad_norm(params: dict[str, Tensor], limit: float) -> None:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > limit and norm > 0.0:
        scale = np.float32(limit / norm)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale


def _check_finite(g_loss: float, d_loss: float, epoch: int) -> None:
    if not (math.isfinite(g_loss) and math.isfinite(d_loss)):
        raise DivergenceError("non-finite loss", epoch, g_loss, d_loss)


def gan_train_step(
    real_batch: Tensor,
    gen: Generator,
    disc: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
    rng: np.random.Generator,
    epoch: int = 0,
) -> tuple[float, float]:
    """One discriminator update followed by one generator update.

    BCE mode labels real as 1 and fake as 0 and trains the generator against
    the real label; Wasserstein mode trains a clipped critic on raw scores.
    Returns (g_loss, d_loss).
    """
    config = gen.config
    n = real_batch.shape[0]
    if n < 2:
        raise ContractError(f"gan_train_step needs a batch of at least 2, got {n}")
    lo, hi = float(real_batch.data.min()), float(real_batch.data.max())
    if lo < 0.0 or hi > 1.0:
        raise ContractError(f"real batch values must lie in [0, 1], got [{lo}, {hi}]")

    dtype = real_batch.dtype
    z = Tensor(rng.standard_normal((n, config.z_dim)).astype(dtype), dtype=dtype)
    fake = gen.forward(z)

    disc_params = opt_d.params
    gen_params = opt_g.params

    if config.loss_mode == "bce":
        real_label = dtype.type(1.0 - config.label_smoothing)
        ones = Tensor(np.full((n, 1), real_label, dtype=dtype))
        zeros = Tensor(np.zeros((n, 1), dtype=dtype))

        opt_d.zero_grad()
        # the real and fake halves are averaged so maximal uncertainty reads ln 2
        loss_real = bce_loss(disc(real_batch), ones)
        loss_fake = bce_loss(disc(fake.detach()), zeros)
        d_total = affine(add(loss_real, loss_fake), 0.5, 0.0)
        backward(d_total)
        if config.grad_clip_norm is not None:
            _clip_global_grad_norm(disc_params, config.grad_clip_norm)
        opt_d.step()

        opt_g.zero_grad()
        opt_d.zero_grad()  # generator backward flows through shared critic subgraph
        full = Tensor(np.ones((n, 1), dtype=dtype))
        g_total = bce_loss(disc(fake), full)
        backward(g_total)
        if config.grad_clip_norm is not None:
            _clip_global_grad_norm(gen_params, config.grad_clip_norm)
        opt_g.step()
        g_loss, d_loss = g_total.item(), d_total.item()
    else:
        opt_d.zero_grad()
        critic_loss = sub(mean_all(disc(fake.detach())), mean_all(disc(real_batch)))
        backward(critic_loss)
        if config.grad_clip_norm is not None:
            _clip_global_grad_norm(disc_params, config.grad_clip_norm)
        opt_d.step()
        limit = dtype.type(config.clip_limit)
        for p in disc_params.values():
            np.clip(p.data, -limit, limit, out=p.data)

        opt_g.zero_grad()
        opt_d.zero_grad()
        g_total = neg(mean_all(disc(fake)))
        backward(g_total)
        if config.grad_clip_norm is not None:
            _clip_global_grad_norm(gen_params, config.grad_clip_norm)
        opt_g.step()
        g_loss, d_loss = g_total.item(), critic_loss.item()

    _check_finite(g_loss, d_loss, epoch)
    return g_loss, d_loss


# ---------------------------------------------------------------------------
# checkpointing


@dataclass
class GanCheckpoint:
    config: GanConfig
    tensors: dict[str, np.ndarray]  # params, batchnorm buffers, optimizer moments
    epoch: int
    g_loss: float
    d_loss: float
    rng_state: bytes
    opt_g_step: int
    opt_d_step: int
    epochs_trained: int = 0

    def __post_init__(self):
        if self.epoch < 0:
            raise CheckpointFormatError(f"epoch must be non-negative, got {self.epoch}")


_CONFIG_FIELDS = (
    ("resolution", int),
    ("z_dim", int),
    ("gen_base_maps", int),
    ("disc_first_maps", int),
    ("kernel", int),
    ("stride", int),
    ("lr", float),
    ("loss_mode", str),
    ("clip_limit", float),
    ("batch_size", int),
    ("max_epochs", int),
    ("stop_rule", str),
    ("label_smoothing", float),
)


def _header_text(ckpt: GanCheckpoint) -> str:
    lines = []
    for name, kind in _CONFIG_FIELDS:
        value = getattr(ckpt.config, name)
        lines.append(f"config.{name}={value!r}" if kind is str else f"config.{name}={value}")
    if ckpt.config.grad_clip_norm is not None:
        lines.append(f"config.grad_clip_norm={ckpt.config.grad_clip_norm}")
    lines.append(f"epoch={ckpt.epoch}")
    lines.append(f"epochs_trained={ckpt.epochs_trained}")
    lines.append(f"g_loss={ckpt.g_loss!r}")
    lines.append(f"d_loss={ckpt.d_loss!r}")
    lines.append(f"opt_g_step={ckpt.opt_g_step}")
    lines.append(f"opt_d_step={ckpt.opt_d_step}")
    return "\n".join(lines)


def _parse_header(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise CheckpointFormatError(f"header line {lineno} is not key=value: {line!r}")
        key, value = line.split("=", 1)
        entries[key] = value
    return entries


def expected_checkpoint_tensors(config: GanConfig) -> dict[str, tuple[int, ...]]:
    """Names and shapes a checkpoint must carry for this config."""
    shapes: dict[str, tuple[int, ...]] = {}
    maps = config.generator_maps()
    in_ch = config.z_dim
    for i, out_ch in enumerate(maps):
        shapes[f"gen/hidden{i}/weight"] = (in_ch, out_ch, config.kernel, config.kernel)
        shapes[f"gen/hidden{i}/bn/gamma"] = (out_ch,)
        shapes[f"gen/hidden{i}/bn/beta"] = (out_ch,)
        in_ch = out_ch
    shapes["gen/out/weight"] = (in_ch, 3, OUTPUT_KERNEL, OUTPUT_KERNEL)
    dmaps = config.discriminator_maps()
    in_ch = 3
    for i, out_ch in enumerate(dmaps):
        shapes[f"disc/hidden{i}/weight"] = (out_ch, in_ch, config.kernel, config.kernel)
        if i > 0:
            shapes[f"disc/hidden{i}/bn/gamma"] = (out_ch,)
            shapes[f"disc/hidden{i}/bn/beta"] = (out_ch,)
        in_ch = out_ch
    shapes["disc/head/weight"] = (in_ch, 1)
    shapes["disc/head/bias"] = (1,)
    # batchnorm running statistics
    for i, out_ch in enumerate(maps):
        shapes[f"gen/hidden{i}/bn/running_mean"] = (out_ch,)
        shapes[f"gen/hidden{i}/bn/running_var"] = (out_ch,)
    for i, out_ch in enumerate(dmaps):
        if i > 0:
            shapes[f"disc/hidden{i}/bn/running_mean"] = (out_ch,)
            shapes[f"disc/hidden{i}/bn/running_var"] = (out_ch,)
    # Adam moments for every trainable parameter
    for name in list(shapes):
        if name.endswith(("running_mean", "running_var")):
            continue
        prefix = "opt_g" if name.startswith("gen/") else "opt_d"
        shapes[f"{prefix}/{name}/m"] = shapes[name]
        shapes[f"{prefix}/{name}/v"] = shapes[name]
    return shapes


def make_checkpoint(
    gen: Generator,
    disc: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
    epoch: int,
    g_loss: float,
    d_loss: float,
    rng: np.random.Generator,
) -> GanCheckpoint:
    tensors: dict[str, np.ndarray] = {}
    for name, p in {**gen.params(), **disc.params()}.items():
        tensors[name] = p.data
    for name, buf in {**gen.buffers(), **disc.buffers()}.items():
        tensors[name] = buf
    opt_g_step = opt_d_step = 0
    for prefix, opt in (("opt_g", opt_g), ("opt_d", opt_d)):
        for name, state in opt.states.items():
            tensors[f"{prefix}/{name}/m"] = state.m
            tensors[f"{prefix}/{name}/v"] = state.v
            if prefix == "opt_g":
                opt_g_step = state.step
            else:
                opt_d_step = state.step
    return GanCheckpoint(
        config=gen.config,
        tensors=tensors,
        epoch=epoch,
        g_loss=g_loss,
        d_loss=d_loss,
        rng_state=rng_mod.rng_state_bytes(rng),
        opt_g_step=opt_g_step,
        opt_d_step=opt_d_step,
        epochs_trained=gen.epochs_trained,
    )


def save_checkpoint(ckpt: GanCheckpoint, path: str) -> None:
    header = _header_text(ckpt).encode("utf-8")
    blob = pack_tensors(ckpt.tensors)
    payload = b"".join(
        [
            CHECKPOINT_MAGIC,
            struct.pack("<I", len(header)),
            header,
            struct.pack("<I", len(ckpt.rng_state)),
            ckpt.rng_state,
            blob,
        ]
    )
    atomic_write_bytes(path, payload)


def load_checkpoint(path: str) -> GanCheckpoint:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad magic bytes: not a GAN checkpoint")
    pos = 4
    if pos + 4 > len(buf):
        raise CheckpointFormatError("truncated checkpoint: header length")
    (header_len,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if pos + header_len > len(buf):
        raise CheckpointFormatError("truncated checkpoint: header")
    entries = _parse_header(buf[pos : pos + header_len].decode("utf-8"))
    pos += header_len
    if pos + 4 > len(buf):
        raise CheckpointFormatError("truncated checkpoint: rng state length")
    (rng_len,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if pos + rng_len > len(buf):
        raise CheckpointFormatError("truncated checkpoint: rng state")
    rng_state = buf[pos : pos + rng_len]
    pos += rng_len

    kwargs: dict = {}
    for name, kind in _CONFIG_FIELDS:
        key = f"config.{name}"
        if key not in entries:
            raise CheckpointFormatError(f"missing header field {key}")
        raw = entries[key]
        kwargs[name] = raw.strip("'") if kind is str else kind(raw)
    if "config.grad_clip_norm" in entries:
        kwargs["grad_clip_norm"] = float(entries["config.grad_clip_norm"])
    try:
        config = GanConfig(**kwargs)
    except ConfigurationError as exc:
        raise CheckpointFormatError(f"invalid config in checkpoint header: {exc}") from exc

    try:
        tensors, end = unpack_tensors(buf, pos)
    except Exception as exc:
        raise CheckpointFormatError(str(exc)) from exc
    if end != len(buf):
        raise CheckpointFormatError("trailing bytes after tensor block")

    expected = expected_checkpoint_tensors(config)
    for name, shape in expected.items():
        if name not in tensors:
            raise CheckpointFormatError(f"missing tensor {name!r}")
        if tensors[name].shape != shape:
            raise CheckpointFormatError(
                f"tensor {name!r} has shape {tensors[name].shape}, config requires {shape}"
            )
    for name in tensors:
        if name not in expected:
            raise CheckpointFormatError(f"unexpected tensor {name!r} for this config")

    try:
        return GanCheckpoint(
            config=config,
            tensors=tensors,
            epoch=int(entries["epoch"]),
            g_loss=float(entries["g_loss"]),
            d_loss=float(entries["d_loss"]),
            rng_state=rng_state,
            opt_g_step=int(entries["opt_g_step"]),
            opt_d_step=int(entries["opt_d_step"]),
            epochs_trained=int(entries.get("epochs_trained", entries["epoch"])),
        )
    except (KeyError, ValueError) as exc:
        raise CheckpointFormatError(f"bad header field: {exc}") from exc


def restore_training_state(
    ckpt: GanCheckpoint,
) -> tuple[Generator, Discriminator, Adam, Adam, np.random.Generator]:
    """Rebuild models and optimizers exactly as they were at checkpoint time."""
    throwaway = np.random.default_rng(0)
    gen = build_generator(ckpt.config, throwaway)
    disc = build_discriminator(ckpt.config, throwaway)
    gen.epochs_trained = ckpt.epochs_trained
    for name, p in {**gen.params(), **disc.params()}.items():
        p.data[...] = ckpt.tensors[name]
    for name, buf in {**gen.buffers(), **disc.buffers()}.items():
        buf[...] = ckpt.tensors[name]
    opt_g = Adam(gen.params(), lr=ckpt.config.lr)
    opt_d = Adam(disc.params(), lr=ckpt.config.lr)
    for prefix, opt, step in (("opt_g", opt_g, ckpt.opt_g_step), ("opt_d", opt_d, ckpt.opt_d_step)):
        for name, state in opt.states.items():
            state.m[...] = ckpt.tensors[f"{prefix}/{name}/m"]
            state.v[...] = ckpt.tensors[f"{prefix}/{name}/v"]
            state.step = step
    return gen, disc, opt_g, opt_d, rng_mod.rng_from_state_bytes(ckpt.rng_state)


def generator_from_checkpoint(ckpt: GanCheckpoint) -> Generator:
    """Just the generator, with parameters and running stats restored."""
    gen = build_generator(ckpt.config, np.random.default_rng(0))
    gen.epochs_trained = ckpt.epochs_trained
    for name, p in gen.params().items():
        p.data[...] = ckpt.tensors[name]
    for name, buf in gen.buffers().items():
        buf[...] = ckpt.tensors[name]
    return gen


# ---------------------------------------------------------------------------
# training driver


def train_gan(
    images: np.ndarray,
    config: GanConfig,
    seed: int | None = None,
    epochs: int | None = None,
    resume: GanCheckpoint | None = None,
    checkpoint_path: str | None = None,
    checkpoint_every: int | None = None,
) -> tuple[GanCheckpoint, LossCurve]:
    """Train on a (M, 3, R, R) float array in [0, 1].

    Runs until the stop rule fires or the epoch budget is exhausted. With the
    loss-threshold rule, training halts at the first epoch whose mean
    generator loss drops below 1.0; the fixed-epochs rule just runs out the
    budget. Fully deterministic given (seed, config, images); ``resume``
    continues a run bitwise-identically to one that never stopped.
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[1] != 3 or images.shape[2] != config.resolution:
        raise ContractError(
            f"expected (M, 3, {config.resolution}, {config.resolution}) images, got {images.shape}"
        )
    if images.shape[0] < config.batch_size:
        raise ContractError(
            f"dataset of {images.shape[0]} images is smaller than one batch ({config.batch_size})"
        )

    if resume is not None:
        gen, disc, opt_g, opt_d, rng = restore_training_state(resume)
        start_epoch = resume.epoch
        last = (resume.g_loss, resume.d_loss)
    else:
        rng = rng_mod.make_rng(seed)
        gen = build_generator(config, rng)
        disc = build_discriminator(config, rng)
        opt_g = Adam(gen.params(), lr=config.lr)
        opt_d = Adam(disc.params(), lr=config.lr)
        start_epoch = 0
        last = (math.inf, math.inf)

    budget = config.max_epochs if epochs is None else start_epoch + epochs
    curve = LossCurve.gan(origin=start_epoch + 1)
    m = images.shape[0]
    steps = m // config.batch_size
    ckpt: GanCheckpoint | None = None

    for epoch in range(start_epoch + 1, budget + 1):
        perm = rng.permutation(m)
        g_sum = d_sum = 0.0
        for s in range(steps):
            batch = images[perm[s * config.batch_size : (s + 1) * config.batch_size]]
            g_loss, d_loss = gan_train_step(
                Tensor(batch), gen, disc, opt_g, opt_d, rng, epoch=epoch
            )
            g_sum += g_loss
            d_sum += d_loss
        epoch_g, epoch_d = g_sum / steps, d_sum / steps
        gen.epochs_trained = epoch
        curve.append(epoch, epoch_g, epoch_d)
        stop = config.stop_rule == "loss_threshold" and should_early_stop(epoch_g)
        ckpt = make_checkpoint(gen, disc, opt_g, opt_d, epoch, epoch_g, epoch_d, rng)
        if checkpoint_path and (
            stop
            or epoch == budget
            or (checkpoint_every is not None and epoch % checkpoint_every == 0)
        ):
            save_checkpoint(ckpt, checkpoint_path)
        if stop:
            break

    if ckpt is None:  # zero-epoch budget
        ckpt = make_checkpoint(gen, disc, opt_g, opt_d, start_epoch, *last, rng)
        if checkpoint_path:
            save_checkpoint(ckpt, checkpoint_path)
    return ckpt, curve


# ---------------------------------------------------------------------------
# sampling and diagnostics


def sample_images(gen: Generator, count: int, rng: np.random.Generator, batch: int = 64) -> Tensor:
    """Draw ``count`` images deterministically under the given generator state."""
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    gen.set_mode("eval")
    try:
        pieces = []
        done = 0
        while done < count:
            take = min(batch, count - done)
            z = Tensor(rng.standard_normal((take, gen.config.z_dim)).astype(np.float32))
            pieces.append(gen.forward(z).data)
            done += take
        return Tensor(np.concatenate(pieces, axis=0))
    finally:
        gen.set_mode("train")


@dataclass
class CollapseReport:
    mean_pairwise_distance: float
    per_pixel_variance: float
    duplicate_fraction: float
    collapsed: bool
    threshold: float


def collapse_diagnostics(samples, threshold: float = 0.05) -> CollapseReport:
    """Flag mode collapse when per-element-normalized pairwise L2 falls below threshold.

    duplicate_fraction is the share of the batch occupied by the most common
    exact sample (1.0 when all samples are identical).
    """
    data = samples.data if isinstance(samples, Tensor) else np.asarray(samples)
    n = data.shape[0]
    if n < 2:
        raise ContractError(f"collapse diagnostics need at least 2 samples, got {n}")
    flat = data.reshape(n, -1).astype(np.float64)
    d = flat.shape[1]
    # direct differences, so identical samples give exactly zero distance
    total = 0.0
    for i in range(n - 1):
        diff = flat[i + 1 :] - flat[i]
        total += float(np.sqrt((diff * diff).sum(axis=1)).sum())
    mean_distance = total / (n * (n - 1) / 2) / math.sqrt(d)
    per_pixel_var = float(data.var(axis=0).mean())
    counts: dict[bytes, int] = {}
    for i in range(n):
        key = flat[i].tobytes()
        counts[key] = counts.get(key, 0) + 1
    duplicate_fraction = max(counts.values()) / n
    return CollapseReport(
        mean_pairwise_distance=mean_distance,
        per_pixel_variance=per_pixel_var,
        duplicate_fraction=duplicate_fraction,
        collapsed=mean_distance < threshold,
        threshold=threshold,
    )

"""Binary real-vs-edited classifier: grouped-convolution residual network
with a replaceable 2-way head.

Blocks follow the split-transform-merge recipe: a 1x1 reduction into a
grouped 3x3 convolution of ``cardinality`` parallel groups, then a 1x1
expansion, with a projection shortcut whenever the shape changes. Stage
widths double per stage and blocks expand width -> 2*width. The head is a
single linear layer over globally averaged features; fine-tuning can freeze
everything below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Adam,
    BatchNorm2d,
    Conv2d,
    Linear,
    Tensor,
    add,
    backward,
    global_avg_pool2d,
    relu,
    softmax,
    softmax_cross_entropy,
)
from .autodiff.snapshot import load_tensors, save_tensors
from .curves import LossCurve
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    DivergenceError,
    WeightLoadError,
)

HEAD_PREFIX = "head/"
META_NAME = "meta/classifier_config"
BLOCK_EXPANSION = 2

PRESETS = ("desk", "paper")


@dataclass
class ResNeXtBlockConfig:
    in_channels: int
    bottleneck_width: int  # total channels of the grouped 3x3 layer
    cardinality: int
    out_channels: int
    stride: int

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise ConfigurationError(f"block stride must be 1 or 2, got {self.stride}")
        if self.bottleneck_width % self.cardinality:
            raise ConfigurationError(
                f"cardinality {self.cardinality} must divide the grouped width "
                f"{self.bottleneck_width}"
            )

    @property
    def needs_projection(self) -> bool:
        return self.stride != 1 or self.in_channels != self.out_channels


@dataclass
class ClassifierConfig:
    preset: str = "desk"
    stage_blocks: list[int] = field(default_factory=lambda: [1, 1, 1])
    cardinality: int = 8
    base_width: int = 16
    stem_maps: int = 16
    stem_kernel: int = 3
    stem_stride: int = 1
    input_resolution: int = 32
    num_classes: int = 2
    lr: float = 0.01
    epochs: int = 50
    batch_size: int = 64
    head_only_finetune: bool = False

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigurationError(f"preset must be one of {PRESETS}")
        if self.num_classes != 2:
            raise ConfigurationError("this is a binary classifier; num_classes must be 2")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be non-negative, got {self.epochs}")
        if not self.stage_blocks or any(b < 1 for b in self.stage_blocks):
            raise ConfigurationError(f"stage_blocks must be positive, got {self.stage_blocks}")
        if self.base_width % self.cardinality:
            raise ConfigurationError(
                f"cardinality {self.cardinality} must divide base_width {self.base_width}"
            )

    @classmethod
    def desk(cls, input_resolution: int = 32, **overrides) -> "ClassifierConfig":
        """Small enough to train from scratch in seconds."""
        return cls(preset="desk", input_resolution=input_resolution, **overrides)

    @classmethod
    def paper(cls, input_resolution: int = 64, **overrides) -> "ClassifierConfig":
        """50-layer 32x4d layout (stage list stays configurable)."""
        defaults = dict(
            preset="paper",
            stage_blocks=[3, 4, 6, 3],
            cardinality=32,
            base_width=128,
            stem_maps=64,
            stem_kernel=7,
            stem_stride=2,
            input_resolution=input_resolution,
        )
        defaults.update(overrides)
        return cls(**defaults)

    def block_configs(self) -> list[list[ResNeXtBlockConfig]]:
        stages = []
        in_ch = self.stem_maps
        for i, blocks in enumerate(self.stage_blocks):
            width = self.base_width * (2**i)
            out_ch = BLOCK_EXPANSION * width
            stage = []
            for j in range(blocks):
                stride = 2 if (i > 0 and j == 0) else 1
                stage.append(
                    ResNeXtBlockConfig(
                        in_channels=in_ch,
                        bottleneck_width=width,
                        cardinality=self.cardinality,
                        out_channels=out_ch,
                        stride=stride,
                    )
                )
                in_ch = out_ch
            stages.append(stage)
        return stages


class ResNeXtBlock:
    def __init__(self, cfg: ResNeXtBlockConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        width, out = cfg.bottleneck_width, cfg.out_channels
        self.conv1 = Conv2d(cfg.in_channels, width, 1, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(width, rng=rng, dtype=dtype)
        self.conv2 = Conv2d(
            width, width, 3, stride=cfg.stride, padding=1, groups=cfg.cardinality,
            rng=rng, dtype=dtype,
        )
        self.bn2 = BatchNorm2d(width, rng=rng, dtype=dtype)
        self.conv3 = Conv2d(width, out, 1, rng=rng, dtype=dtype)
        self.bn3 = BatchNorm2d(out, rng=rng, dtype=dtype)
        if cfg.needs_projection:
            self.proj = Conv2d(cfg.in_channels, out, 1, stride=cfg.stride, rng=rng, dtype=dtype)
            self.proj_bn = BatchNorm2d(out, rng=rng, dtype=dtype)
        else:
            self.proj = None
            self.proj_bn = None

    def __call__(self, x: Tensor) -> Tensor:
        out = relu(self.bn1(self.conv1(x)))
        out = relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        shortcut = x if self.proj is None else self.proj_bn(self.proj(x))
        return relu(add(out, shortcut))

    def _pieces(self):
        pieces = [("conv1", self.conv1), ("bn1", self.bn1), ("conv2", self.conv2),
                  ("bn2", self.bn2), ("conv3", self.conv3), ("bn3", self.bn3)]
        if self.proj is not None:
            pieces += [("proj", self.proj), ("proj_bn", self.proj_bn)]
        return pieces

    def params(self, prefix: str) -> dict[str, Tensor]:
        named = {}
        for name, piece in self._pieces():
            named.update(piece.params(f"{prefix}/{name}"))
        return named

    def buffers(self, prefix: str) -> dict[str, np.ndarray]:
        named = {}
        for name, piece in self._pieces():
            named.update(piece.buffers(f"{prefix}/{name}"))
        return named

    def batchnorms(self):
        bns = [self.bn1, self.bn2, self.bn3]
        if self.proj_bn is not None:
            bns.append(self.proj_bn)
        return bns

    def conv_layer_count(self) -> int:
        return 3 + (1 if self.proj is not None else 0)


class Classifier:
    def __init__(self, config: ClassifierConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        pad = config.stem_kernel // 2
        self.stem = Conv2d(
            3, config.stem_maps, config.stem_kernel, stride=config.stem_stride, padding=pad,
            rng=rng, dtype=dtype,
        )
        self.stem_bn = BatchNorm2d(config.stem_maps, rng=rng, dtype=dtype)
        self.stages: list[list[ResNeXtBlock]] = [
            [ResNeXtBlock(bc, rng, dtype=dtype) for bc in stage]
            for stage in config.block_configs()
        ]
        final_ch = BLOCK_EXPANSION * config.base_width * (2 ** (len(config.stage_blocks) - 1))
        self.head = Linear(final_ch, config.num_classes, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        out = relu(self.stem_bn(self.stem(x)))
        for stage in self.stages:
            for block in stage:
                out = block(out)
        pooled = global_avg_pool2d(out)
        return self.head(pooled)

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def features_spatial_extent(self, x: Tensor) -> tuple[int, int]:
        """Spatial size feeding the global average pool (shape-audit helper)."""
        out = relu(self.stem_bn(self.stem(x)))
        for stage in self.stages:
            for block in stage:
                out = block(out)
        return out.shape[2], out.shape[3]

    def set_mode(self, mode: str) -> None:
        self.stem_bn.mode = mode
        for stage in self.stages:
            for block in stage:
                for bn in block.batchnorms():
                    bn.mode = mode

    def params(self) -> dict[str, Tensor]:
        named = {}
        named.update(self.stem.params("stem/conv"))
        named.update(self.stem_bn.params("stem/bn"))
        for i, stage in enumerate(self.stages):
            for j, block in enumerate(stage):
                named.update(block.params(f"stage{i}/block{j}"))
        named.update(self.head.params("head"))
        return named

    def buffers(self) -> dict[str, np.ndarray]:
        named = {}
        named.update(self.stem_bn.buffers("stem/bn"))
        for i, stage in enumerate(self.stages):
            for j, block in enumerate(stage):
                named.update(block.buffers(f"stage{i}/block{j}"))
        return named

    def backbone_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params().items() if not k.startswith(HEAD_PREFIX)}

    def head_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params().items() if k.startswith(HEAD_PREFIX)}

    def trainable_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params().items() if v.requires_grad}

    def freeze_backbone(self) -> None:
        for p in self.backbone_params().values():
            p.requires_grad = False

    def conv_layer_count(self) -> int:
        total = 1  # stem
        for stage in self.stages:
            for block in stage:
                total += block.conv_layer_count()
        return total

    def summary(self) -> dict:
        return {
            "preset": self.config.preset,
            "stage_blocks": list(self.config.stage_blocks),
            "conv_layers": self.conv_layer_count(),
            "parameters": int(sum(p.size for p in self.params().values())),
        }


def build_classifier(
    config: ClassifierConfig, rng: np.random.Generator, dtype=np.float32
) -> Classifier:
    return Classifier(config, rng, dtype=dtype)


# ---------------------------------------------------------------------------
# weight bundles (shared snapshot format, head/ name prefix convention)


def _config_meta(config: ClassifierConfig) -> np.ndarray:
    # every entry must survive the float32 snapshot exactly, so the learning
    # rate rides as an integer count of 1e-6 units
    values = [
        1.0,  # meta version
        float(PRESETS.index(config.preset)),
        float(config.input_resolution),
        float(config.cardinality),
        float(config.base_width),
        float(config.stem_maps),
        float(config.stem_kernel),
        float(config.stem_stride),
        float(config.num_classes),
        float(round(config.lr * 1e6)),
        float(config.epochs),
        float(config.batch_size),
        1.0 if config.head_only_finetune else 0.0,
        float(len(config.stage_blocks)),
        *[float(b) for b in config.stage_blocks],
    ]
    return np.asarray(values, dtype=np.float32)


def _config_from_meta(meta: np.ndarray) -> ClassifierConfig:
    if meta.ndim != 1 or meta.size < 15 or int(meta[0]) != 1:
        raise WeightLoadError(f"unrecognized {META_NAME} layout")
    n_stages = int(meta[13])
    return ClassifierConfig(
        preset=PRESETS[int(meta[1])],
        input_resolution=int(meta[2]),
        cardinality=int(meta[3]),
        base_width=int(meta[4]),
        stem_maps=int(meta[5]),
        stem_kernel=int(meta[6]),
        stem_stride=int(meta[7]),
        num_classes=int(meta[8]),
        lr=round(float(meta[9])) / 1e6,
        epochs=int(meta[10]),
        batch_size=int(meta[11]),
        head_only_finetune=bool(meta[12]),
        stage_blocks=[int(b) for b in meta[14 : 14 + n_stages]],
    )


def save_classifier(model: Classifier, path: str) -> None:
    named: dict[str, np.ndarray] = {META_NAME: _config_meta(model.config)}
    for name, p in model.params().items():
        named[name] = p.data
    named.update(model.buffers())
    save_tensors(named, path)


def load_classifier(path: str) -> Classifier:
    bundle = load_tensors(path)
    if META_NAME not in bundle:
        raise WeightLoadError(f"model file lacks {META_NAME}")
    config = _config_from_meta(bundle[META_NAME])
    model = build_classifier(config, np.random.default_rng(0))
    load_weights(model, {k: v for k, v in bundle.items() if k != META_NAME}, head_policy="keep")
    return model


def load_weights(
    model: Classifier,
    bundle: dict[str, np.ndarray],
    head_policy: str = "keep",
    rng: np.random.Generator | None = None,
) -> Classifier:
    """Copy backbone weights in; keep or reinitialize the head.

    The bundle may omit head tensors (a fresh head is initialized). Under
    ``head_only_finetune`` the backbone is frozen afterwards.
    """
    if head_policy not in ("keep", "reinitialize"):
        raise ContractError(f"head_policy must be keep or reinitialize, got {head_policy}")
    targets = {**model.params(), **{k: None for k in model.buffers()}}
    buffers = model.buffers()
    for name, value in bundle.items():
        if name.startswith(HEAD_PREFIX):
            continue
        if name not in targets:
            raise WeightLoadError(f"bundle tensor {name!r} does not exist in the model")
        expected = buffers[name].shape if name in buffers else model.params()[name].shape
        if value.shape != expected:
            raise WeightLoadError(
                f"tensor {name!r} has shape {value.shape}, model expects {expected}"
            )
    for name, p in model.params().items():
        if name.startswith(HEAD_PREFIX):
            continue
        if name not in bundle:
            raise WeightLoadError(f"bundle is missing backbone tensor {name!r}")
        p.data[...] = bundle[name]
    for name, buf in buffers.items():
        if name in bundle:
            buf[...] = bundle[name]

    head_names = [k for k in bundle if k.startswith(HEAD_PREFIX)]
    if head_policy == "keep" and head_names:
        for name, p in model.head_params().items():
            if name not in bundle:
                raise WeightLoadError(f"bundle is missing head tensor {name!r}")
            if bundle[name].shape != p.shape:
                raise WeightLoadError(
                    f"tensor {name!r} has shape {bundle[name].shape}, model expects {p.shape}"
                )
            p.data[...] = bundle[name]
    else:
        rng = rng or np.random.default_rng(0)
        fresh = Linear(model.head.weight.shape[0], model.config.num_classes, rng=rng)
        model.head.weight.data[...] = fresh.weight.data
        model.head.bias.data[...] = fresh.bias.data

    if model.config.head_only_finetune:
        model.freeze_backbone()
    return model


# ---------------------------------------------------------------------------
# training and inference


def _as_batches(images: np.ndarray, labels: np.ndarray, batch_size: int, order: np.ndarray):
    m = images.shape[0]
    for start in range(0, m, batch_size):
        idx = order[start : start + batch_size]
        if idx.size < 2:  # batch statistics need at least 2 samples
            continue
        yield images[idx], labels[idx]


def _validation_loss(model: Classifier, images: np.ndarray, labels: np.ndarray, batch: int) -> float:
    model.set_mode("eval")
    try:
        total, count = 0.0, 0
        for start in range(0, images.shape[0], batch):
            xs = images[start : start + batch]
            ys = labels[start : start + batch]
            loss = softmax_cross_entropy(model.forward(Tensor(xs)), ys)
            total += loss.item() * xs.shape[0]
            count += xs.shape[0]
        return total / count
    finally:
        model.set_mode("train")


def train_classifier(
    model: Classifier,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    config: ClassifierConfig,
    rng: np.random.Generator,
) -> tuple[Classifier, LossCurve]:
    """Minimize softmax cross entropy with Adam; keep the best-validation
    parameters. Returns the model (restored to its best epoch) and the
    per-epoch validation-loss curve."""
    train_x, train_y = np.asarray(train_set[0], dtype=np.float32), np.asarray(train_set[1])
    val_x, val_y = np.asarray(val_set[0], dtype=np.float32), np.asarray(val_set[1])
    if train_x.shape[0] == 0 or val_x.shape[0] == 0:
        raise ContractError("training and validation sets must be non-empty")

    curve = LossCurve.validation()
    if config.epochs == 0:
        return model, curve

    if config.head_only_finetune:
        model.freeze_backbone()
    optimizer = Adam(model.trainable_params(), lr=config.lr)
    best_loss = math.inf
    best_state: dict[str, np.ndarray] | None = None

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(train_x.shape[0])
        for xs, ys in _as_batches(train_x, train_y, config.batch_size, order):
            optimizer.zero_grad()
            loss = softmax_cross_entropy(model.forward(Tensor(xs)), ys)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError("classifier loss diverged", epoch, value, value)
            backward(loss)
            optimizer.step()
        val_loss = _validation_loss(model, val_x, val_y, config.batch_size)
        if not math.isfinite(val_loss):
            raise DivergenceError("validation loss diverged", epoch, val_loss, val_loss)
        curve.append(epoch, val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = {name: p.data.copy() for name, p in model.params().items()}
            best_state.update({name: b.copy() for name, b in model.buffers().items()})

    if best_state is not None:
        for name, p in model.params().items():
            p.data[...] = best_state[name]
        for name, b in model.buffers().items():
            b[...] = best_state[name]
    return model, curve


def predict(model: Classifier, images) -> list[tuple[float, int]]:
    """Per image: (probability the image is edited, hard label).

    Label is 1 iff the edited-class probability strictly exceeds 0.5; an
    exact tie predicts unedited.
    """
    data = np.asarray(images.data if isinstance(images, Tensor) else images, dtype=np.float32)
    if data.ndim != 4 or data.shape[1] != 3:
        raise DimensionError(f"expected (N, 3, R, R) images, got {data.shape}")
    r = model.config.input_resolution
    if data.shape[2] != r or data.shape[3] != r:
        raise DimensionError(f"model expects {r}x{r} input, got {data.shape[2]}x{data.shape[3]}")
    model.set_mode("eval")
    try:
        out = []
        for start in range(0, data.shape[0], 256):
            logits = model.forward(Tensor(data[start : start + 256])).data
            probs = softmax(logits.astype(np.float64))
            for p_edited in probs[:, 1]:
                out.append((float(p_edited), 1 if p_edited > 0.5 else 0))
        return out
    finally:
        model.set_mode("train")


def accuracy_from_predictions(predictions: list[tuple[float, int]], labels) -> float:
    labels = np.asarray(labels)
    hits = sum(1 for (_, lab), truth in zip(predictions, labels) if lab == int(truth))
    return hits / len(predictions)

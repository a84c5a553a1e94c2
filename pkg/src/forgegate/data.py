"""Dataset ingestion, normalization, augmentation, GAN-driven synthesis, and
split management.

Images flow through as (3, R, R) float32 arrays in [0, 1], RGB channel
order. Records carry a label (edited/unedited) and a provenance
(real/generated); the test split is drawn exclusively from real records so a
classifier trained downstream cannot score real-vs-fake by accident.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .dcgan import Generator, sample_images
from .errors import ContractError, DecodeError, ManifestError, SplitError
from .ioutils import atomic_write_bytes, atomic_write_text

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("count", "source", "editing_software", "edits_performed", "directory", "label")
LABELS = ("edited", "unedited")
PROVENANCES = ("real", "generated")
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


@dataclass
class ImageRecord:
    pixels: np.ndarray  # (3, R, R) float32 in [0, 1]
    label: str
    provenance: str
    source_tag: str
    path: str | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ContractError(f"label must be edited or unedited, got {self.label!r}")
        if self.provenance not in PROVENANCES:
            raise ContractError(f"provenance must be real or generated, got {self.provenance!r}")
        pix = np.asarray(self.pixels, dtype=np.float32)
        if pix.ndim != 3 or pix.shape[0] != 3:
            raise ContractError(f"pixels must be (3, R, R), got {pix.shape}")
        if pix.min() < 0.0 or pix.max() > 1.0:
            raise ContractError("pixel values must lie in [0, 1]")
        self.pixels = pix

    @property
    def class_index(self) -> int:
        return 1 if self.label == "edited" else 0


@dataclass
class ManifestRow:
    count: int
    source: str
    editing_software: str
    edits_performed: str
    directory: str
    label: str


@dataclass
class SourceManifest:
    rows: list[ManifestRow]
    warnings: list[str] = field(default_factory=list)

    @property
    def total_count(self) -> int:
        return sum(row.count for row in self.rows)


def list_image_files(directory: str) -> list[str]:
    names = [
        n for n in sorted(os.listdir(directory)) if n.lower().endswith(IMAGE_EXTENSIONS)
    ]
    return [os.path.join(directory, n) for n in names]


def load_manifest(path: str, expected_total: int | None = None) -> SourceManifest:
    """Parse a source manifest CSV and validate row counts against the files
    actually present (mismatches warn rather than fail)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = [row for row in reader if row and not row[0].lstrip().startswith("#")]
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not rows:
        raise ManifestError(f"manifest {path} is empty")
    header = [h.strip() for h in rows[0]]
    if header != list(MANIFEST_COLUMNS):
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        raise ManifestError(
            f"manifest header must be {','.join(MANIFEST_COLUMNS)}; missing {missing}"
        )
    base = os.path.dirname(os.path.abspath(path))
    parsed: list[ManifestRow] = []
    warnings: list[str] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(MANIFEST_COLUMNS):
            raise ManifestError(f"row {lineno}: expected {len(MANIFEST_COLUMNS)} columns, got {len(row)}")
        raw_count, source, software, edits, directory, label = [v.strip() for v in row]
        try:
            count = int(raw_count)
        except ValueError as exc:
            raise ManifestError(f"row {lineno}: unparsable count {raw_count!r}") from exc
        if count < 0:
            raise ManifestError(f"row {lineno}: count must be non-negative, got {count}")
        if label not in LABELS:
            raise ManifestError(f"row {lineno}: label must be edited or unedited, got {label!r}")
        resolved = directory if os.path.isabs(directory) else os.path.join(base, directory)
        if not os.path.isdir(resolved):
            raise ManifestError(f"row {lineno}: directory {directory!r} does not exist")
        actual = len(list_image_files(resolved))
        if actual != count:
            warnings.append(
                f"row {lineno} ({source}): manifest says {count} images, directory holds {actual}"
            )
        parsed.append(
            ManifestRow(
                count=count,
                source=source,
                editing_software=software,
                edits_performed=edits,
                directory=resolved,
                label=label,
            )
        )
    manifest = SourceManifest(rows=parsed, warnings=warnings)
    logger.info("manifest %s: %d rows, counts sum to %d", path, len(parsed), manifest.total_count)
    for message in warnings:
        logger.warning("%s", message)
    if expected_total is not None and manifest.total_count != expected_total:
        message = (
            f"manifest counts sum to {manifest.total_count}, which conflicts with the "
            f"expected total of {expected_total}; neither figure is asserted"
        )
        manifest.warnings.append(message)
        logger.warning("%s", message)
    return manifest


# ---------------------------------------------------------------------------
# decoding


def decode_and_normalize(
    path: str, resolution: int | None, resize_mode: str = "stretch"
) -> np.ndarray:
    """Decode a PNG/JPEG into a (3, R, R) float32 array in [0, 1].

    ``stretch`` resizes bilinearly ignoring aspect ratio; ``center_crop``
    first crops the largest centered square. ``resolution=None`` keeps the
    native size.
    """
    if resize_mode not in ("stretch", "center_crop"):
        raise ContractError(f"resize_mode must be stretch or center_crop, got {resize_mode!r}")
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if resize_mode == "center_crop" and img.width != img.height:
                side = min(img.width, img.height)
                left = (img.width - side) // 2
                top = (img.height - side) // 2
                img = img.crop((left, top, left + side, top + side))
            if resolution is not None and (img.width, img.height) != (resolution, resolution):
                img = img.resize((resolution, resolution), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except ContractError:
        raise
    except Exception as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def write_png(pixels: np.ndarray, path: str) -> None:
    """(3, H, W) floats in [0, 1] -> 8-bit PNG (deterministic bytes)."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ContractError(f"expected (3, H, W) pixels, got {arr.shape}")
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    buf = io.BytesIO()
    Image.fromarray(quantized, mode="RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def load_records_from_manifest(manifest: SourceManifest, resolution: int,
                               resize_mode: str = "stretch") -> list[ImageRecord]:
    """Decode every image referenced by the manifest, in manifest/file order."""
    records = []
    for row in manifest.rows:
        for file_path in list_image_files(row.directory):
            records.append(
                ImageRecord(
                    pixels=decode_and_normalize(file_path, resolution, resize_mode),
                    label=row.label,
                    provenance="real",
                    source_tag=row.source,
                    path=file_path,
                )
            )
    return records


# ---------------------------------------------------------------------------
# augmentation


def random_hflip(record: ImageRecord, p: float, rng: np.random.Generator) -> ImageRecord:
    """Mirror the width axis with probability p; label and provenance stay."""
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"flip probability must lie in [0, 1], got {p}")
    pixels = record.pixels
    if p > 0.0 and rng.random() < p:
        pixels = np.ascontiguousarray(pixels[:, :, ::-1])
    return ImageRecord(
        pixels=pixels,
        label=record.label,
        provenance=record.provenance,
        source_tag=record.source_tag,
        path=record.path,
    )


# ---------------------------------------------------------------------------
# synthesis


def synthesize_dataset(
    gen_edited: Generator,
    gen_unedited: Generator,
    total: int,
    rng: np.random.Generator,
    flip_probability: float = 0.5,
) -> list[ImageRecord]:
    """Draw total/2 samples from each trained generator (odd totals give the
    extra image to the unedited side), label them by source generator, and
    apply random horizontal mirrors."""
    if total < 0:
        raise ContractError(f"total must be non-negative, got {total}")
    for name, gen in (("edited", gen_edited), ("unedited", gen_unedited)):
        if not gen.is_trained:
            raise ContractError(f"the {name}-face generator has not been trained")
    n_edited = total // 2
    n_unedited = total - n_edited
    records: list[ImageRecord] = []
    for label, gen, count in (
        ("edited", gen_edited, n_edited),
        ("unedited", gen_unedited, n_unedited),
    ):
        if count == 0:
            continue
        batch = sample_images(gen, count, rng).data
        np.clip(batch, 0.0, 1.0, out=batch)
        for i in range(count):
            record = ImageRecord(
                pixels=batch[i],
                label=label,
                provenance="generated",
                source_tag=f"gan:{label}",
            )
            records.append(random_hflip(record, flip_probability, rng))
    return records


# ---------------------------------------------------------------------------
# splits


@dataclass
class DatasetSplit:
    train: list[ImageRecord]
    val: list[ImageRecord]
    test: list[ImageRecord]
    seed: int

    def all_disjoint(self) -> bool:
        ids = [id(r) for part in (self.train, self.val, self.test) for r in part]
        return len(ids) == len(set(ids))


def split_dataset(
    records: list[ImageRecord],
    test_per_class: int = 333,
    val_fraction: float = 0.2,
    seed: int = 0,
    mix_real: list[ImageRecord] | None = None,
    mix_real_count: int = 0,
) -> DatasetSplit:
    """Reserve a real-only test set, then split the rest train/val stratified.

    The test set takes ``test_per_class`` real records per class; real
    records beyond the reservation are left out of training entirely unless
    injected explicitly (``mix_real``) or drawn from the unreserved leftovers
    (``mix_real_count``).
    """
    if not 0.0 <= val_fraction < 1.0:
        raise ContractError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    test: list[ImageRecord] = []
    leftovers: list[ImageRecord] = []
    for label in ("edited", "unedited"):
        pool = [r for r in records if r.provenance == "real" and r.label == label]
        if len(pool) < test_per_class:
            raise SplitError(
                f"need {test_per_class} real {label} records for the test reservation, "
                f"have {len(pool)} (short by {test_per_class - len(pool)})"
            )
        order = rng.permutation(len(pool))
        test.extend(pool[i] for i in order[:test_per_class])
        leftovers.extend(pool[i] for i in order[test_per_class:])

    train: list[ImageRecord] = []
    val: list[ImageRecord] = []
    trainable = [r for r in records if r.provenance == "generated"]
    if mix_real_count:
        if mix_real_count > len(leftovers):
            raise SplitError(
                f"mix_real_count={mix_real_count} exceeds the {len(leftovers)} real records "
                "left after the test reservation"
            )
        order = rng.permutation(len(leftovers))
        trainable = trainable + [leftovers[i] for i in order[:mix_real_count]]
    if mix_real:
        trainable = trainable + list(mix_real)
    for label in ("edited", "unedited"):
        pool = [r for r in trainable if r.label == label]
        order = rng.permutation(len(pool))
        n_val = int(round(val_fraction * len(pool)))
        val.extend(pool[i] for i in order[:n_val])
        train.extend(pool[i] for i in order[n_val:])
    return DatasetSplit(train=train, val=val, test=test, seed=seed)


def records_to_arrays(records: list[ImageRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Stack records into (images, integer labels) training arrays."""
    if not records:
        raise ContractError("cannot stack an empty record list")
    images = np.stack([r.pixels for r in records]).astype(np.float32)
    labels = np.asarray([r.class_index for r in records], dtype=np.int64)
    return images, labels


def save_split(split: DatasetSplit, path: str) -> None:
    """Persist record paths and assignments as JSON for exact re-runs.

    Paths are stored relative to the JSON file, so a whole run directory
    relocates (and reproduces byte-identically) as a unit.
    """
    base = os.path.dirname(os.path.abspath(path))
    payload = {"seed": split.seed, "records": []}
    for part_name, part in (("train", split.train), ("val", split.val), ("test", split.test)):
        for record in part:
            if record.path is None:
                raise ContractError(
                    f"record from {record.source_tag!r} has no file path; persist images first"
                )
            payload["records"].append(
                {
                    "path": os.path.relpath(record.path, base),
                    "label": record.label,
                    "provenance": record.provenance,
                    "source_tag": record.source_tag,
                    "split": part_name,
                }
            )
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_split(path: str, resolution: int) -> DatasetSplit:
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    parts: dict[str, list[ImageRecord]] = {"train": [], "val": [], "test": []}
    for entry in payload["records"]:
        resolved = os.path.normpath(os.path.join(base, entry["path"]))
        record = ImageRecord(
            pixels=decode_and_normalize(resolved, resolution),
            label=entry["label"],
            provenance=entry["provenance"],
            source_tag=entry["source_tag"],
            path=resolved,
        )
        parts[entry["split"]].append(record)
    return DatasetSplit(seed=int(payload["seed"]), **parts)


# ---------------------------------------------------------------------------
# synthetic desk corpus


def make_blob_faces(count: int, resolution: int, edited: bool, rng: np.random.Generator) -> np.ndarray:
    """Two-blob toy faces: dark eyes and a mouth bar over a noisy background.

    The edited variant smooths the skin, brightens a cheek patch, and widens
    the eyes, mimicking beautify-style retouching at desk scale.
    """
    if count < 1 or resolution < 8:
        raise ContractError(f"need count >= 1 and resolution >= 8, got {count}, {resolution}")
    r = resolution
    noise_scale = 0.02 if edited else 0.06
    images = np.empty((count, 3, r, r), dtype=np.float32)
    for i in range(count):
        base = 0.45 + rng.normal(0.0, noise_scale, size=(3, r, r))
        eye_y = r * 5 // 16 + int(rng.integers(-1, 2))
        eye_half = max(1, r // 16) + (1 if edited else 0)
        lx = r * 5 // 16 + int(rng.integers(-1, 2))
        rx = r * 11 // 16 + int(rng.integers(-1, 2))
        for ex in (lx, rx):
            base[:, eye_y - eye_half : eye_y + eye_half, ex - eye_half : ex + eye_half] = 0.08
        mouth_y = r * 11 // 16 + int(rng.integers(-1, 2))
        base[:, mouth_y : mouth_y + max(1, r // 16), r * 5 // 16 : r * 11 // 16] = 0.15
        if edited:
            cheek_y = (eye_y + mouth_y) // 2
            base[:, cheek_y - 1 : cheek_y + 2, lx - 1 : rx + 2] += 0.18
        images[i] = np.clip(base, 0.0, 1.0)
    return images


def make_blob_corpus(
    out_dir: str, count_per_class: int, resolution: int, seed: int
) -> tuple[str, int]:
    """Materialize a blob-face corpus on disk with a loadable manifest.

    Returns (manifest path, total image count).
    """
    rng = np.random.default_rng(seed)
    rows = []
    for label in ("edited", "unedited"):
        directory = os.path.join(out_dir, label)
        os.makedirs(directory, exist_ok=True)
        images = make_blob_faces(count_per_class, resolution, edited=label == "edited", rng=rng)
        for i in range(count_per_class):
            write_png(images[i], os.path.join(directory, f"{label}_{i:05d}.png"))
        rows.append((count_per_class, "synthetic-blobs", "synthetic",
                     "eye widening, skin smoothing, cheek brightening" if label == "edited" else "none",
                     label, label))
    manifest_path = os.path.join(out_dir, "manifest.csv")
    lines = [",".join(MANIFEST_COLUMNS)]
    for count, source, software, edits, directory, label in rows:
        lines.append(f'{count},{source},{software},"{edits}",{directory},{label}')
    atomic_write_text(manifest_path, "\n".join(lines) + "\n")
    return manifest_path, count_per_class * 2

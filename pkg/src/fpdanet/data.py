"""Class taxonomy, dataset manifests, preprocessing, and the synthetic generator.

The 21-class taxonomy fixes label indices.  Datasets live on disk as
``<root>/<ABBREV>/*.png`` and are indexed into a manifest of
(path, label, split) records; splitting is per-class stratified with
largest-remainder apportionment.  A deterministic synthetic generator
renders one distinct geometric composition per class under multiplicative
speckle, standing in for clinical data that is not distributable.
"""

from __future__ import annotations

import csv
import importlib.resources
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, InputError

log = logging.getLogger(__name__)

# (abbreviation, full name); order defines the label index.
CLASS_TAXONOMY: list[tuple[str, str]] = [
    ("3VT", "Three Vessel Tracheal View"),
    ("BL", "Bladder Axial View"),
    ("4C", "Four-Chamber View"),
    ("TV", "Transventricular View"),
    ("UR", "Ulna and Radius Coronal View"),
    ("HL", "Humerus Long Axis View"),
    ("ICO", "Internal Cervical Os Sagittal View"),
    ("FL", "Femur Long Axis View"),
    ("CTSP", "Cervicothoracic Spine Sagittal View"),
    ("TF", "Tibia and Fibula Coronal View"),
    ("CI", "Cord Insertion Abdominal Axial View"),
    ("TTV", "Transthalamic View"),
    ("DI", "Diaphragm Coronal View"),
    ("Ab", "Upper Abdomen Axial View"),
    ("LVOT", "Left Ventricular Outflow Tract"),
    ("Kidneys", "Kidneys Axial View"),
    ("Eyes", "Eye Axial View"),
    ("TCV", "Transcerebellar View"),
    ("MFP", "Median Sagittal Facial Profile View"),
    ("LSSP", "Lumbosacral Spine Sagittal View"),
    ("RVOT", "Right Ventricular Outflow Tract"),
]

ABBREVIATIONS = [a for a, _ in CLASS_TAXONOMY]
NUM_CLASSES = len(CLASS_TAXONOMY)
LABEL_OF = {a: i for i, (a, _) in enumerate(CLASS_TAXONOMY)}

SPLITS = ("train", "val", "test")
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass
class ManifestRecord:
    path: str
    label: int
    split: str = "unassigned"


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)
    source: str = "folder"
    unknown_directories: list[str] = field(default_factory=list)

    def by_split(self, split: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == split]

    def class_counts(self, split: str | None = None) -> list[int]:
        counts = [0] * NUM_CLASSES
        for r in self.records:
            if split is None or r.split == split:
                counts[r.label] += 1
        return counts

    def save(self, path):
        """Tab-separated lines: path, label, split (documented field order)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write(f"# source={self.source}\n")
            for r in self.records:
                f.write(f"{r.path}\t{r.label}\t{r.split}\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        records = []
        source = "folder"
        with open(path) as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#"):
                    if "source=" in line:
                        source = line.split("source=", 1)[1].strip()
                    continue
                p, label, split = line.split("\t")
                records.append(ManifestRecord(p, int(label), split))
        return cls(records=records, source=source)


def load_reference_split_counts():
    """Published per-class train/val/test counts shipped as a bookkeeping fixture."""
    ref = importlib.resources.files("fpdanet.resources") / "clinical_split_counts.csv"
    rows = {}
    with ref.open() as f:
        for row in csv.DictReader(f):
            rows[row["abbreviation"]] = (
                int(row["train"]), int(row["val"]), int(row["test"])
            )
    return rows


def reference_manifest() -> DatasetManifest:
    """Bookkeeping manifest with placeholder paths matching the fixture counts."""
    counts = load_reference_split_counts()
    manifest = DatasetManifest(source="fixture")
    for abbrev, per_split in counts.items():
        label = LABEL_OF[abbrev]
        for split, n in zip(SPLITS, per_split):
            for i in range(n):
                manifest.records.append(ManifestRecord(
                    f"fixture://{abbrev}/{split}/{i}", label, split))
    return manifest


def scan_dataset(root) -> DatasetManifest:
    """Index <root>/<ABBREV>/* images; labels follow taxonomy order."""
    root = Path(root)
    manifest = DatasetManifest()
    if not root.is_dir():
        raise InputError(f"dataset root {root} is not a directory")
    known = set(ABBREVIATIONS)
    for sub in sorted(p.name for p in root.iterdir() if p.is_dir()):
        if sub not in known:
            manifest.unknown_directories.append(sub)
    for abbrev in ABBREVIATIONS:
        class_dir = root / abbrev
        if not class_dir.is_dir():
            log.warning("missing class directory %s", class_dir)
            continue
        for p in sorted(class_dir.iterdir()):
            if p.suffix.lower() in _IMAGE_SUFFIXES:
                manifest.records.append(
                    ManifestRecord(str(p), LABEL_OF[abbrev])
                )
    if manifest.unknown_directories:
        log.warning("ignoring unknown directories: %s", manifest.unknown_directories)
    if not manifest.records:
        raise InputError(f"no images found under {root}")
    return manifest


def largest_remainder(n: int, ratios) -> list[int]:
    """Apportion n items to len(ratios) buckets, remainders to largest fractions."""
    total = sum(ratios)
    quotas = [n * r / total for r in ratios]
    counts = [math.floor(q) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(
        range(len(ratios)), key=lambda i: (quotas[i] - counts[i], -i), reverse=True
    )
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def split_manifest(manifest: DatasetManifest, ratios=(7, 2, 1), seed: int = 0
                   ) -> DatasetManifest:
    """Per-class stratified shuffle into train/val/test by largest remainder."""
    if any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise InputError(f"ratios must be positive, got {ratios}")
    rng = np.random.default_rng(seed)
    out = DatasetManifest(source=manifest.source,
                          unknown_directories=list(manifest.unknown_directories))
    for label in range(NUM_CLASSES):
        recs = [r for r in manifest.records if r.label == label]
        if not recs:
            continue
        counts = largest_remainder(len(recs), ratios)
        if len(recs) < sum(1 for c in counts if c > 0):
            log.warning("class %s has only %d images; some splits empty",
                        ABBREVIATIONS[label], len(recs))
        perm = rng.permutation(len(recs))
        cursor = 0
        for split, count in zip(SPLITS, counts):
            for i in perm[cursor:cursor + count]:
                out.records.append(ManifestRecord(recs[i].path, label, split))
            cursor += count
    out.records.sort(key=lambda r: (r.label, r.path))
    return out


@dataclass
class PreprocessStats:
    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    std: tuple[float, float, float] = (1.0, 1.0, 1.0)


def load_image(path, input_size) -> np.ndarray:
    """Decode, bilinear-resize, replicate grayscale to 3 channels, scale to [0,1]."""
    with Image.open(path) as im:
        im = im.convert("RGB").resize(
            (input_size[1], input_size[0]), Image.BILINEAR
        )
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def preprocess(image, input_size, stats: PreprocessStats | None = None) -> np.ndarray:
    """(3, H, W) float32 array, standardized by dataset-level stats when given."""
    if isinstance(image, (str, Path)):
        arr = load_image(image, input_size)
    else:
        arr = np.asarray(image, dtype=np.float32)
    if stats is not None:
        mean = np.asarray(stats.mean, dtype=np.float32).reshape(3, 1, 1)
        std = np.asarray(stats.std, dtype=np.float32).reshape(3, 1, 1)
        arr = (arr - mean) / std
    return arr


def compute_split_stats(manifest: DatasetManifest, input_size,
                        split: str = "train") -> PreprocessStats:
    """Per-channel mean/std over every pixel of the given split."""
    recs = manifest.by_split(split)
    if not recs:
        raise InputError(f"split {split!r} is empty")
    total = np.zeros(3, dtype=np.float64)
    total_sq = np.zeros(3, dtype=np.float64)
    n = 0
    for r in recs:
        arr = load_image(r.path, input_size).astype(np.float64)
        total += arr.sum(axis=(1, 2))
        total_sq += (arr ** 2).sum(axis=(1, 2))
        n += arr.shape[1] * arr.shape[2]
    mean = total / n
    var = np.maximum(total_sq / n - mean ** 2, 1e-12)
    return PreprocessStats(mean=tuple(mean), std=tuple(np.sqrt(var)))


# --- synthetic dataset -------------------------------------------------------

@dataclass
class SynthSpec:
    per_class: int = 10
    image_size: int = 64
    noise_level: float = 0.35
    seed: int = 0
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        if not 1 <= self.num_classes <= NUM_CLASSES:
            raise ConfigError(
                f"num_classes must be in [1, {NUM_CLASSES}], got {self.num_classes}"
            )
        if self.per_class < 1:
            raise ConfigError("per_class must be >= 1")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")


def class_geometry(label: int) -> dict:
    """Distinct parametric composition per class (ellipse + strokes)."""
    return {
        "ellipse_a": 0.18 + 0.022 * (label % 7),
        "ellipse_b": 0.10 + 0.030 * (label % 5),
        "angle": (label * 37.0) % 180.0,
        "n_strokes": label % 4,
        "ring": label % 3 == 0,
        "offset_x": 0.12 * ((label % 3) - 1),
        "offset_y": 0.10 * ((label // 7) - 1),
    }


def _render_class(label: int, size: int, rng: np.random.Generator,
                  noise_level: float) -> np.ndarray:
    g = class_geometry(label)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    yy = yy / size - 0.5
    xx = xx / size - 0.5
    # Small per-image jitter so images within a class are not identical.
    jx = rng.uniform(-0.03, 0.03)
    jy = rng.uniform(-0.03, 0.03)
    scale = rng.uniform(0.93, 1.07)
    cx, cy = g["offset_x"] + jx, g["offset_y"] + jy
    theta = math.radians(g["angle"])
    u = (xx - cx) * math.cos(theta) + (yy - cy) * math.sin(theta)
    v = -(xx - cx) * math.sin(theta) + (yy - cy) * math.cos(theta)
    r = np.sqrt((u / (g["ellipse_a"] * scale)) ** 2
                + (v / (g["ellipse_b"] * scale)) ** 2)
    img = np.full((size, size), 0.06)
    img[r < 1.0] = 0.30
    img[np.abs(r - 1.0) < 0.18] = 0.85
    for k in range(g["n_strokes"]):
        phi = math.radians(g["angle"] + 45.0 * (k + 1))
        d = np.abs((xx - cx) * math.sin(phi) - (yy - cy) * math.cos(phi))
        along = (xx - cx) * math.cos(phi) + (yy - cy) * math.sin(phi)
        img[(d < 0.02) & (np.abs(along) < 0.38)] = 0.75
    if g["ring"]:
        r2 = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        img[np.abs(r2 - 0.40) < 0.025] = 0.65
    if noise_level > 0:
        # Unit-mean multiplicative speckle, gamma with variance noise_level^2.
        shape = 1.0 / (noise_level ** 2)
        img = img * rng.gamma(shape, 1.0 / shape, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synth_generate(spec: SynthSpec, out_dir=None):
    """Render the synthetic dataset; returns (images, manifest).

    images is a (n, size, size) float array in class-major order.  With
    out_dir set, 8-bit PNGs are written in the <ABBREV>/ folder layout and
    manifest paths point at them; otherwise paths are synthetic ids.
    """
    geoms = [tuple(sorted(class_geometry(c).items()))
             for c in range(spec.num_classes)]
    if len(set(geoms)) != len(geoms):
        raise ConfigError("class geometries are not pairwise distinct")
    rng = np.random.default_rng(spec.seed)
    images = []
    manifest = DatasetManifest(source="synthetic")
    for label in range(spec.num_classes):
        abbrev = ABBREVIATIONS[label]
        if out_dir is not None:
            (Path(out_dir) / abbrev).mkdir(parents=True, exist_ok=True)
        for i in range(spec.per_class):
            img = _render_class(label, spec.image_size, rng, spec.noise_level)
            images.append(img)
            if out_dir is not None:
                path = Path(out_dir) / abbrev / f"{abbrev}_{i:04d}.png"
                Image.fromarray(
                    (img * 255.0).round().astype(np.uint8)
                ).save(path)
                rec_path = str(path)
            else:
                rec_path = f"synthetic://{abbrev}/{i}"
            manifest.records.append(ManifestRecord(rec_path, label))
    return np.stack(images), manifest

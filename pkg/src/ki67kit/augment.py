"""Deterministic, annotation-preserving image augmentation.

The catalogue: horizontal and vertical flips, 90-degree rotations both ways,
180-degree rotation, per-side random cropping of 0 to 8 percent, and
brightness shifts of -24 to +24 percent. Geometric transforms are exact
pixel-index permutations with matching box remaps, so round trips are
bit-identical and testable against a per-pixel oracle.

Plans are sampled from numpy's PCG64 generator (a named, portable algorithm)
and persisted with explicit per-entry parameters, so executing a saved plan
never re-samples anything.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .core import BoundingBox, GroundTruth
from .dataset import AnnotationSet, DatasetManifest, ImageRecord
from .errors import DuplicateIdError, EmptyResultError, TargetTooLargeError

CROP_FRAC_MAX = 0.08
BRIGHTNESS_DELTA_MAX = 0.24

# Boxes keeping less than this fraction of their area after a crop are
# dropped; partially visible nuclei above it survive.
DEFAULT_MIN_BOX_VISIBILITY = 0.30


@dataclass(frozen=True)
class RasterImage:
    """RGB raster backed by a read-only uint8 array of shape (h, w, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) array, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {px.dtype}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise ValueError("image must have positive dimensions")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @classmethod
    def load(cls, path: str | Path) -> "RasterImage":
        with Image.open(path) as im:
            return cls(np.asarray(im.convert("RGB"), dtype=np.uint8))

    def save(self, path: str | Path) -> None:
        Image.fromarray(np.asarray(self.pixels)).save(path, format="PNG")


@dataclass(frozen=True)
class HFlip:
    pass


@dataclass(frozen=True)
class VFlip:
    pass


@dataclass(frozen=True)
class Rot90CW:
    pass


@dataclass(frozen=True)
class Rot90CCW:
    pass


@dataclass(frozen=True)
class Rot180:
    pass


@dataclass(frozen=True)
class Crop:
    """Per-side crop fractions, each within [0, 0.08]."""

    left_frac: float
    top_frac: float
    right_frac: float
    bottom_frac: float

    def __post_init__(self) -> None:
        for name, f in (
            ("left_frac", self.left_frac),
            ("top_frac", self.top_frac),
            ("right_frac", self.right_frac),
            ("bottom_frac", self.bottom_frac),
        ):
            if not (0.0 <= f <= CROP_FRAC_MAX):
                raise ValueError(f"{name}={f} outside [0, {CROP_FRAC_MAX}]")


@dataclass(frozen=True)
class Brightness:
    """Multiplicative intensity shift: channel * (1 + delta), clamped.

    Additive mode (channel + 255 * delta) is available behind the flag.
    """

    delta: float
    additive: bool = False

    def __post_init__(self) -> None:
        if not (-BRIGHTNESS_DELTA_MAX <= self.delta <= BRIGHTNESS_DELTA_MAX):
            raise ValueError(f"delta={self.delta} outside [-{BRIGHTNESS_DELTA_MAX}, {BRIGHTNESS_DELTA_MAX}]")


Transform = Union[HFlip, VFlip, Rot90CW, Rot90CCW, Rot180, Crop, Brightness]

_GEOMETRIC_KINDS: tuple[type, ...] = (HFlip, VFlip, Rot90CW, Rot90CCW, Rot180)

_KIND_NAMES = {
    HFlip: "hflip",
    VFlip: "vflip",
    Rot90CW: "rot90cw",
    Rot90CCW: "rot90ccw",
    Rot180: "rot180",
    Crop: "crop",
    Brightness: "brightness",
}
_NAME_KINDS = {v: k for k, v in _KIND_NAMES.items()}


def transform_to_dict(t: Transform) -> dict:
    d: dict = {"kind": _KIND_NAMES[type(t)]}
    if isinstance(t, Crop):
        d.update(
            left_frac=t.left_frac, top_frac=t.top_frac,
            right_frac=t.right_frac, bottom_frac=t.bottom_frac,
        )
    elif isinstance(t, Brightness):
        d.update(delta=t.delta, additive=t.additive)
    return d


def transform_from_dict(d: dict) -> Transform:
    kind = _NAME_KINDS[d["kind"]]
    if kind is Crop:
        return Crop(d["left_frac"], d["top_frac"], d["right_frac"], d["bottom_frac"])
    if kind is Brightness:
        return Brightness(d["delta"], d.get("additive", False))
    return kind()


def _remap_box_hflip(b: BoundingBox, width: int, height: int) -> BoundingBox:
    return BoundingBox(width - b.x_max, b.y_min, width - b.x_min, b.y_max)


def _remap_box_vflip(b: BoundingBox, width: int, height: int) -> BoundingBox:
    return BoundingBox(b.x_min, height - b.y_max, b.x_max, height - b.y_min)


def _remap_box_rot180(b: BoundingBox, width: int, height: int) -> BoundingBox:
    return BoundingBox(width - b.x_max, height - b.y_max, width - b.x_min, height - b.y_min)


def _remap_box_rot90cw(b: BoundingBox, width: int, height: int) -> BoundingBox:
    # (x, y) -> (height - y, x); the new frame is height x width.
    return BoundingBox(height - b.y_max, b.x_min, height - b.y_min, b.x_max)


def _remap_box_rot90ccw(b: BoundingBox, width: int, height: int) -> BoundingBox:
    # (x, y) -> (y, width - x)
    return BoundingBox(b.y_min, width - b.x_max, b.y_max, width - b.x_min)


def apply_transform(
    img: RasterImage,
    truths: list[GroundTruth],
    t: Transform,
    min_box_visibility: float = DEFAULT_MIN_BOX_VISIBILITY,
) -> tuple[RasterImage, list[GroundTruth]]:
    """Apply one transform to an image and its boxes.

    Flips and rotations permute pixel indices exactly and remap boxes with
    the matching corner formulas. Crop removes integer pixel margins,
    translates boxes, clips them to the new frame, and drops boxes whose
    clipped area falls below ``min_box_visibility`` of the original.
    Brightness changes pixels only.
    """
    px = img.pixels
    w, h = img.width, img.height

    if isinstance(t, HFlip):
        out = px[:, ::-1]
        boxes = [GroundTruth(_remap_box_hflip(g.box, w, h), g.cls) for g in truths]
    elif isinstance(t, VFlip):
        out = px[::-1]
        boxes = [GroundTruth(_remap_box_vflip(g.box, w, h), g.cls) for g in truths]
    elif isinstance(t, Rot180):
        out = px[::-1, ::-1]
        boxes = [GroundTruth(_remap_box_rot180(g.box, w, h), g.cls) for g in truths]
    elif isinstance(t, Rot90CW):
        out = np.rot90(px, k=-1)
        boxes = [GroundTruth(_remap_box_rot90cw(g.box, w, h), g.cls) for g in truths]
    elif isinstance(t, Rot90CCW):
        out = np.rot90(px, k=1)
        boxes = [GroundTruth(_remap_box_rot90ccw(g.box, w, h), g.cls) for g in truths]
    elif isinstance(t, Crop):
        left = round(t.left_frac * w)
        top = round(t.top_frac * h)
        right = round(t.right_frac * w)
        bottom = round(t.bottom_frac * h)
        new_w = w - left - right
        new_h = h - top - bottom
        if new_w <= 0 or new_h <= 0:
            raise EmptyResultError(f"crop of {w}x{h} image leaves {new_w}x{new_h}")
        out = px[top : h - bottom, left : w - right]
        boxes = []
        for g in truths:
            b = g.box
            x_min = max(b.x_min - left, 0.0)
            y_min = max(b.y_min - top, 0.0)
            x_max = min(b.x_max - left, float(new_w))
            y_max = min(b.y_max - top, float(new_h))
            if x_max <= x_min or y_max <= y_min:
                continue
            clipped_area = (x_max - x_min) * (y_max - y_min)
            if clipped_area < min_box_visibility * b.area:
                continue
            boxes.append(GroundTruth(BoundingBox(x_min, y_min, x_max, y_max), g.cls))
    elif isinstance(t, Brightness):
        values = px.astype(np.float64)
        if t.additive:
            values = values + 255.0 * t.delta
        else:
            values = values * (1.0 + t.delta)
        out = np.clip(np.rint(values), 0, 255).astype(np.uint8)
        boxes = list(truths)
    else:
        raise TypeError(f"unknown transform: {t!r}")

    return RasterImage(np.ascontiguousarray(out)), boxes


def apply_chain(
    img: RasterImage,
    truths: list[GroundTruth],
    chain: tuple[Transform, ...],
    min_box_visibility: float = DEFAULT_MIN_BOX_VISIBILITY,
) -> tuple[RasterImage, list[GroundTruth]]:
    for t in chain:
        img, truths = apply_transform(img, truths, t, min_box_visibility)
    return img, truths


@dataclass(frozen=True)
class PlanEntry:
    source_id: str
    transforms: tuple[Transform, ...]
    new_id: str


@dataclass(frozen=True)
class AugmentPlan:
    seed: int
    entries: tuple[PlanEntry, ...]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "entries": [
                {
                    "source_id": e.source_id,
                    "new_id": e.new_id,
                    "transforms": [transform_to_dict(t) for t in e.transforms],
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AugmentPlan":
        return cls(
            seed=doc["seed"],
            entries=tuple(
                PlanEntry(
                    source_id=e["source_id"],
                    transforms=tuple(transform_from_dict(t) for t in e["transforms"]),
                    new_id=e["new_id"],
                )
                for e in doc["entries"]
            ),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AugmentPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _sample_chain(rng: np.random.Generator) -> tuple[Transform, ...]:
    # Draw order is fixed (geometric, crop flag, crop params, brightness
    # flag, delta) so plans reproduce for a given seed.
    while True:
        chain: list[Transform] = []
        geom_idx = int(rng.integers(0, len(_GEOMETRIC_KINDS) + 1))
        if geom_idx < len(_GEOMETRIC_KINDS):
            chain.append(_GEOMETRIC_KINDS[geom_idx]())
        if rng.integers(0, 2):
            fracs = rng.uniform(0.0, CROP_FRAC_MAX, size=4)
            chain.append(Crop(*(float(f) for f in fracs)))
        if rng.integers(0, 2):
            chain.append(Brightness(float(rng.uniform(-BRIGHTNESS_DELTA_MAX, BRIGHTNESS_DELTA_MAX))))
        if chain:
            return tuple(chain)


def generate_plan(m: DatasetManifest, seed: int, target_total: int) -> AugmentPlan:
    """Sample a balanced augmentation plan growing the base set to target_total.

    Every base image receives either floor(extra / n_base) or one more chain,
    chains within an image are distinct, and identity chains never occur.
    """
    base = sorted(m.base_records(), key=lambda r: r.image_id)
    n_base = len(base)
    if n_base == 0:
        raise ValueError("manifest has no base images")
    if target_total < n_base:
        raise ValueError(f"target_total {target_total} below base image count {n_base}")
    n_extra = target_total - n_base

    rng = np.random.default_rng(seed)
    per_image = [n_extra // n_base] * n_base
    extra_slots = rng.permutation(n_base)[: n_extra % n_base]
    for i in extra_slots:
        per_image[i] += 1

    existing_ids = set(m.image_ids())
    entries: list[PlanEntry] = []
    for record, count in zip(base, per_image):
        seen: set[tuple[Transform, ...]] = set()
        attempts = 0
        while len(seen) < count:
            attempts += 1
            if attempts > 100 * count + 100:
                raise TargetTooLargeError(
                    f"could not find {count} distinct chains for {record.image_id}"
                )
            chain = _sample_chain(rng)
            if chain in seen:
                continue
            seen.add(chain)
            k = len(seen)
            new_id = f"{record.image_id}_aug{k:03d}"
            while new_id in existing_ids:
                k += 1
                new_id = f"{record.image_id}_aug{k:03d}"
            existing_ids.add(new_id)
            entries.append(PlanEntry(record.image_id, chain, new_id))
    return AugmentPlan(seed=seed, entries=tuple(entries))


@dataclass(frozen=True)
class ExecutionIssue:
    new_id: str
    message: str


def execute_plan(
    m: DatasetManifest,
    plan: AugmentPlan,
    out_dir: str | Path,
    overwrite: bool = False,
    min_box_visibility: float = DEFAULT_MIN_BOX_VISIBILITY,
) -> tuple[DatasetManifest, list[ExecutionIssue]]:
    """Apply every plan entry, writing PNGs and extending the manifest.

    Per-entry I/O failures are collected rather than aborting the run; id
    collisions with the manifest are a contract violation and raise.
    """
    existing = set(m.image_ids())
    if not overwrite:
        clashes = [e.new_id for e in plan.entries if e.new_id in existing]
        if clashes:
            raise DuplicateIdError(f"plan output ids already in manifest: {clashes[:5]}")

    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)

    records = list(m.records)
    annotations = dict(m.annotations)
    split = dict(m.split)
    issues: list[ExecutionIssue] = []

    for entry in plan.entries:
        if overwrite and entry.new_id in existing:
            records = [r for r in records if r.image_id != entry.new_id]
            annotations.pop(entry.new_id, None)
            split.pop(entry.new_id, None)
        try:
            source = m.record_by_id(entry.source_id)
            img = RasterImage.load(source.source_path)
            truths = list(m.truths_for(entry.source_id))
            img, truths = apply_chain(img, truths, entry.transforms, min_box_visibility)
            dest = out_path / f"{entry.new_id}.png"
            img.save(dest)
        except (OSError, KeyError, EmptyResultError) as exc:
            issues.append(ExecutionIssue(entry.new_id, str(exc)))
            continue
        records.append(
            ImageRecord(
                image_id=entry.new_id,
                case_id=source.case_id,
                width=img.width,
                height=img.height,
                source_path=str(dest),
                parent_id=entry.source_id,
            )
        )
        annotations[entry.new_id] = AnnotationSet(image_id=entry.new_id, truths=tuple(truths))
        if split and entry.source_id in split:
            split[entry.new_id] = split[entry.source_id]

    return DatasetManifest(records=records, annotations=annotations, split=split), issues

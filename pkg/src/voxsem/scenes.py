"""Scene types and the procedural room generator.

Conventions used everywhere downstream:

* volumes are indexed (x, y, z): x horizontal, y vertical (0 is the
  floor), z pointing away from the camera into the room;
* depth images are indexed (horizontal, vertical) so image axis 0 lines
  up with volume x and image axis 1 with volume y;
* category 0 is empty space, categories 1.. follow CATEGORY_NAMES.

Rooms are a hollow shell (floor, ceiling, four walls) with door and
window patches carved into the walls, axis-aligned furniture on the
floor, and small objects resting on furniture or floor. Everything is
drawn from one seeded generator, so a (config, seed) pair names the
scene exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import PlacementError, ShapeError

CATEGORY_NAMES = (
    "empty",
    "ceiling",
    "floor",
    "wall",
    "window",
    "door",
    "chair",
    "bed",
    "sofa",
    "table",
    "furniture",
    "objects",
)

EMPTY, CEILING, FLOOR, WALL, WINDOW, DOOR, CHAIR, BED, SOFA, TABLE, FURNITURE, OBJECTS = range(12)

Array = np.ndarray


def default_names(num_categories: int) -> tuple[str, ...]:
    if num_categories == len(CATEGORY_NAMES):
        return CATEGORY_NAMES
    return tuple(f"category_{i}" for i in range(num_categories))


@dataclass
class SemanticVolume:
    """Dense uint8 category labels over an (x, y, z) grid."""

    labels: Array
    num_categories: int = 12
    names: tuple[str, ...] = ()

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 3:
            raise ShapeError(f"volume labels must be 3D, got shape {self.labels.shape}")
        if self.labels.dtype != np.uint8:
            if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) > 255:
                raise ShapeError("labels do not fit in uint8")
            self.labels = self.labels.astype(np.uint8)
        if self.num_categories < 2 or self.num_categories > 256:
            raise ShapeError(f"num_categories must lie in [2, 256], got {self.num_categories}")
        if self.labels.size and int(self.labels.max()) >= self.num_categories:
            raise ShapeError(
                f"label {int(self.labels.max())} out of range for "
                f"{self.num_categories} categories"
            )
        if not self.names:
            self.names = default_names(self.num_categories)
        if len(self.names) != self.num_categories:
            raise ShapeError(
                f"{len(self.names)} names for {self.num_categories} categories"
            )

    @property
    def extents(self) -> tuple[int, int, int]:
        return self.labels.shape

    def empty_fraction(self) -> float:
        return float((self.labels == EMPTY).mean())

    def category_counts(self) -> Array:
        return np.bincount(self.labels.reshape(-1), minlength=self.num_categories)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SemanticVolume)
            and self.num_categories == other.num_categories
            and self.names == other.names
            and np.array_equal(self.labels, other.labels)
        )


@dataclass
class DepthImage:
    """Per-pixel depth in world units; invalid pixels carry NaN.

    ``values`` is float32 indexed (horizontal, vertical). The validity
    mask is explicit so a missing return is never mistaken for zero
    depth.
    """

    values: Array
    valid: Array | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ShapeError(f"depth image must be 2D, got shape {self.values.shape}")
        finite = np.isfinite(self.values)
        if self.valid is None:
            self.valid = finite
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.values.shape:
                raise ShapeError("validity mask shape differs from the depth values")
            self.valid = self.valid & finite
        self.values = np.where(self.valid, self.values, np.float32(np.nan))
        if self.valid.any() and float(self.values[self.valid].min()) < 0:
            raise ShapeError("valid depths must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def filled(self, fill: float = 0.0) -> Array:
        return np.where(self.valid, self.values, np.float32(fill))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DepthImage)
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass(frozen=True)
class CameraModel:
    """Pinhole (or orthographic) camera looking along +z.

    Intrinsics are in pixel units against the (horizontal, vertical)
    image grid; ``origin`` is in voxel coordinates. Reported depth is
    distance along the camera axis in world units (voxels scaled by
    ``voxel_size``), not along the ray.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    origin: tuple[float, float, float]
    voxel_size: float = 1.0
    orthographic: bool = False

    @staticmethod
    def facing(
        volume_extents: tuple[int, int, int],
        image_shape: tuple[int, int],
        vertical_fov_deg: float = 60.0,
        voxel_size: float = 1.0,
        front_offset: float = 1.0,
    ) -> "CameraModel":
        """Camera centered on the viewing face, just inside the front wall."""
        nx, ny = image_shape
        fy = (ny / 2.0) / math.tan(math.radians(vertical_fov_deg) / 2.0)
        return CameraModel(
            fx=fy,
            fy=fy,
            cx=nx / 2.0,
            cy=ny / 2.0,
            origin=(volume_extents[0] / 2.0, volume_extents[1] / 2.0, front_offset),
            voxel_size=voxel_size,
        )


@dataclass(frozen=True)
class SceneConfig:
    """Counts and extents for the room generator."""

    extents: tuple[int, int, int] = (80, 48, 80)
    chairs: int = 2
    beds: int = 1
    sofas: int = 1
    tables: int = 1
    cabinets: int = 1
    objects: int = 3
    doors: int = 1
    windows: int = 1
    max_attempts: int = 64


# per-category size rules: extent // lo .. extent // hi along each axis
_FURNITURE_SIZES = {
    CHAIR: ((18, 12), (12, 9), (18, 12)),
    BED: ((8, 6), (12, 9), (9, 7)),
    SOFA: ((10, 8), (10, 8), (13, 10)),
    TABLE: ((12, 9), (10, 8), (12, 9)),
    FURNITURE: ((14, 11), (6, 4), (16, 12)),
}


def _sample_span(rng: np.random.Generator, extent: int, divisors: tuple[int, int]) -> int:
    lo = max(1, extent // divisors[0])
    hi = max(lo, extent // divisors[1])
    return int(rng.integers(lo, hi + 1))


def _carve_aperture(rng, labels, kind, width_div, y_lo, height, max_attempts):
    """Relabel a rectangular wall patch as a door or window."""
    x_max, y_max, z_max = labels.shape
    for _ in range(max_attempts):
        wall = int(rng.integers(0, 4))  # x=0, x=max, z=0, z=max
        horiz = z_max if wall < 2 else x_max
        w = max(2, horiz // width_div)
        if w > horiz - 2:
            w = horiz - 2
        a = int(rng.integers(1, horiz - 1 - w + 1))
        h = min(height, y_max - 1 - y_lo)
        if h < 1:
            raise PlacementError(f"room too low for a {CATEGORY_NAMES[kind]}")
        if wall == 0:
            region = labels[0, y_lo : y_lo + h, a : a + w]
        elif wall == 1:
            region = labels[x_max - 1, y_lo : y_lo + h, a : a + w]
        elif wall == 2:
            region = labels[a : a + w, y_lo : y_lo + h, 0]
        else:
            region = labels[a : a + w, y_lo : y_lo + h, z_max - 1]
        if (region == WALL).all():
            region[...] = kind
            return
    raise PlacementError(
        f"could not place a {CATEGORY_NAMES[kind]} on any wall after {max_attempts} attempts"
    )


def _place_box(rng, labels, category, size_rule, max_attempts, boxes):
    x_max, y_max, z_max = labels.shape
    for _ in range(max_attempts):
        sx = _sample_span(rng, x_max, size_rule[0])
        sy = _sample_span(rng, y_max, size_rule[1])
        sz = _sample_span(rng, z_max, size_rule[2])
        # interior only; z starts at 2 to keep the camera voxel clear
        if x_max - 1 - sx < 1 or z_max - 1 - sz < 2 or 1 + sy > y_max - 1:
            continue
        x0 = int(rng.integers(1, x_max - 1 - sx + 1))
        z0 = int(rng.integers(2, z_max - 1 - sz + 1))
        region = labels[x0 : x0 + sx, 1 : 1 + sy, z0 : z0 + sz]
        if (region == EMPTY).all():
            region[...] = category
            boxes.append((x0, x0 + sx, 1 + sy, z0, z0 + sz))
            return
    raise PlacementError(
        f"could not place a {CATEGORY_NAMES[category]} after {max_attempts} attempts; "
        "the room is too small or too full"
    )


def _place_object(rng, labels, max_attempts, boxes):
    """A 1- or 2-voxel cube resting on the floor or on a furniture top."""
    x_max, y_max, z_max = labels.shape
    for _ in range(max_attempts):
        s = int(rng.integers(1, 3))
        supports = len(boxes) + 1
        pick = int(rng.integers(0, supports))
        if pick == len(boxes):  # the floor
            y0 = 1
            if x_max - 1 - s < 1 or z_max - 1 - s < 2:
                continue
            x0 = int(rng.integers(1, x_max - 1 - s + 1))
            z0 = int(rng.integers(2, z_max - 1 - s + 1))
        else:
            bx0, bx1, btop, bz0, bz1 = boxes[pick]
            y0 = btop
            if bx1 - bx0 < s or bz1 - bz0 < s:
                continue
            x0 = int(rng.integers(bx0, bx1 - s + 1))
            z0 = int(rng.integers(bz0, bz1 - s + 1))
        if y0 + s > y_max - 1:
            continue
        region = labels[x0 : x0 + s, y0 : y0 + s, z0 : z0 + s]
        if (region == EMPTY).all():
            region[...] = OBJECTS
            return
    raise PlacementError(
        f"could not place a small object after {max_attempts} attempts"
    )


def generate_scene(config: SceneConfig = SceneConfig(), seed: int = 0) -> SemanticVolume:
    """Build one room. The same (config, seed) always gives the same room."""
    x_max, y_max, z_max = config.extents
    if min(config.extents) < 8:
        raise ShapeError(f"scene extents must be at least 8, got {config.extents}")
    rng = np.random.default_rng(seed)
    labels = np.zeros(config.extents, dtype=np.uint8)

    # shell: walls first, then floor/ceiling own their full slabs
    labels[0, :, :] = WALL
    labels[x_max - 1, :, :] = WALL
    labels[:, :, 0] = WALL
    labels[:, :, z_max - 1] = WALL
    labels[:, 0, :] = FLOOR
    labels[:, y_max - 1, :] = CEILING

    door_height = max(3, (2 * (y_max - 2)) // 3)
    for _ in range(config.doors):
        _carve_aperture(rng, labels, DOOR, 6, 1, door_height, config.max_attempts)
    window_y = max(2, y_max // 3)
    window_height = max(2, (y_max - 2) // 5)
    for _ in range(config.windows):
        _carve_aperture(rng, labels, WINDOW, 5, window_y, window_height, config.max_attempts)

    boxes: list[tuple[int, int, int, int, int]] = []
    for category, count in (
        (BED, config.beds),
        (SOFA, config.sofas),
        (TABLE, config.tables),
        (FURNITURE, config.cabinets),
        (CHAIR, config.chairs),
    ):
        for _ in range(count):
            _place_box(rng, labels, category, _FURNITURE_SIZES[category], config.max_attempts, boxes)
    for _ in range(config.objects):
        _place_object(rng, labels, config.max_attempts, boxes)

    return SemanticVolume(labels, len(CATEGORY_NAMES), CATEGORY_NAMES)

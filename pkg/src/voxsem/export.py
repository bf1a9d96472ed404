"""Wavefront OBJ export of labeled voxels.

Every occupied voxel becomes an axis-aligned unit cube (8 vertices, 12
triangles) in a group named after its category; the empty category is
left out. Vertices are not shared between cubes, which keeps the file
trivially parseable at the cost of size.
"""

from __future__ import annotations

import numpy as np

from .scenes import SemanticVolume

_CORNERS = [
    (0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1),
    (1, 0, 0), (1, 0, 1), (1, 1, 0), (1, 1, 1),
]
# two triangles per face, outward winding, indices into _CORNERS
_TRIANGLES = [
    (0, 1, 3), (0, 3, 2),  # -x
    (4, 6, 7), (4, 7, 5),  # +x
    (0, 4, 5), (0, 5, 1),  # -y
    (2, 3, 7), (2, 7, 6),  # +y
    (0, 2, 6), (0, 6, 4),  # -z
    (1, 5, 7), (1, 7, 3),  # +z
]


def export_geometry(volume: SemanticVolume, path, scale: float = 1.0) -> int:
    """Write the volume as OBJ text; returns the number of cubes."""
    cubes = 0
    with open(path, "w") as fh:
        fh.write(f"# {volume.labels.size} voxels, categories: {', '.join(volume.names)}\n")
        base = 1  # OBJ indices are 1-based
        for c in range(1, volume.num_categories):
            coords = np.argwhere(volume.labels == c)
            if len(coords) == 0:
                continue
            name = volume.names[c]
            fh.write(f"g {name}\nusemtl {name}\n")
            for x, y, z in coords:
                for dx, dy, dz in _CORNERS:
                    fh.write(
                        f"v {(x + dx) * scale:g} {(y + dy) * scale:g} {(z + dz) * scale:g}\n"
                    )
                for a, b, d in _TRIANGLES:
                    fh.write(f"f {base + a} {base + b} {base + d}\n")
                base += 8
                cubes += 1
    return cubes

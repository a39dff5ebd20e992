"""Procedural tetrahedral meshes for boxes and slabs.

Each hexahedral cell is split into five tets; neighbouring cells use the
mirrored split so shared faces agree, which keeps the mesh conforming.
"""

import numpy as np

from .scene import TetMesh

# Five-tet split of the unit cube with corners indexed by (ix, iy, iz) bits:
# four corner tets around the even vertices plus the central octahedral tet.
_TETS_EVEN = np.array([
    [0, 1, 2, 5],
    [0, 2, 3, 7],
    [0, 4, 5, 7],
    [2, 5, 6, 7],
    [0, 2, 5, 7],
])
# Mirror image (x flipped) used on odd-parity cells.
_TETS_ODD = np.array([
    [1, 0, 3, 4],
    [1, 3, 2, 6],
    [1, 5, 4, 6],
    [3, 4, 7, 6],
    [1, 3, 4, 6],
])

_CORNER_BITS = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
])


def box_mesh(size, cells, origin=(0.0, 0.0, 0.0)) -> TetMesh:
    """Tetrahedralized axis-aligned box.

    size: extents (sx, sy, sz); cells: grid resolution (nx, ny, nz);
    origin: minimum corner.  Produces 5 * nx * ny * nz tets.
    """
    size = np.asarray(size, dtype=np.float64)
    nx, ny, nz = (int(c) for c in cells)
    if min(nx, ny, nz) < 1 or np.any(size <= 0):
        raise ValueError("box_mesh needs positive size and at least one cell per axis")
    origin = np.asarray(origin, dtype=np.float64)
    step = size / np.array([nx, ny, nz], dtype=np.float64)

    ii, jj, kk = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1),
                             indexing="ij")
    verts = origin + np.stack([ii, jj, kk], axis=-1).reshape(-1, 3) * step

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                corners = np.array([
                    vid(i + b[0], j + b[1], k + b[2]) for b in _CORNER_BITS
                ])
                pattern = _TETS_EVEN if (i + j + k) % 2 == 0 else _TETS_ODD
                tets.extend(corners[pattern])
    return TetMesh(verts, np.array(tets, dtype=np.int64))


def rotated(mesh: TetMesh, rotation: np.ndarray, pivot=(0.0, 0.0, 0.0)) -> TetMesh:
    """Rigidly rotate a mesh about a pivot point."""
    rotation = np.asarray(rotation, dtype=np.float64)
    pivot = np.asarray(pivot, dtype=np.float64)
    verts = (mesh.vertices - pivot) @ rotation.T + pivot
    return TetMesh(verts, mesh.tets.copy())


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])

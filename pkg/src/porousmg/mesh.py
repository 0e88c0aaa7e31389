"""Nested Cartesian mesh hierarchies with face and vertex-patch topology.

Levels are uniform tensor grids of quadrilaterals (2D) or hexahedra (3D).
Level j+1 is obtained from level j by splitting every cell into 2^d children.
All numberings (cells, vertices, faces) are lexicographic with the x index
running fastest; faces are grouped by normal axis.  Every face carries the
fixed global orientation +e_axis, so an interior face points from its
lower-indexed cell to its higher-indexed one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Guard against index overflow on absurd refinement requests.
_MAX_TOTAL_CELLS = 2**40


@dataclass(frozen=True)
class Box:
    """Axis-aligned domain box."""

    origin: tuple[float, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        if len(self.origin) != len(self.lengths):
            raise ValueError("origin and lengths must have the same dimension")
        if any(ell <= 0 for ell in self.lengths):
            raise ValueError("box extents must be positive")


def unit_box(dim: int) -> Box:
    return Box(origin=(0.0,) * dim, lengths=(1.0,) * dim)


@dataclass(frozen=True)
class MeshLevel:
    """One uniform grid of the hierarchy."""

    dim: int
    index: int
    cells_per_axis: tuple[int, ...]
    origin: tuple[float, ...]
    cell_size: tuple[float, ...]

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def n_vertices(self) -> int:
        return int(np.prod([n + 1 for n in self.cells_per_axis]))

    @property
    def h(self) -> float:
        """Mesh size: the largest cell extent over all axes."""
        return float(max(self.cell_size))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_size))

    # Faces normal to axis a form a grid with one extra layer along a.
    def faces_per_axis_shape(self, axis: int) -> tuple[int, ...]:
        shape = list(self.cells_per_axis)
        shape[axis] += 1
        return tuple(shape)

    def n_faces(self, axis: int) -> int:
        return int(np.prod(self.faces_per_axis_shape(axis)))

    @property
    def face_offsets(self) -> tuple[int, ...]:
        offs = [0]
        for a in range(self.dim):
            offs.append(offs[-1] + self.n_faces(a))
        return tuple(offs)

    @property
    def n_faces_total(self) -> int:
        return self.face_offsets[-1]

    def cell_strides(self) -> tuple[int, ...]:
        strides = [1]
        for n in self.cells_per_axis[:-1]:
            strides.append(strides[-1] * n)
        return tuple(strides)

    def cell_index(self, multi: np.ndarray) -> np.ndarray:
        """Lexicographic cell id from integer multi-indices (..., dim)."""
        multi = np.asarray(multi)
        strides = np.array(self.cell_strides(), dtype=np.int64)
        return (multi * strides).sum(axis=-1)

    def cell_multi(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        out = np.empty(ids.shape + (self.dim,), dtype=np.int64)
        rem = ids
        for a, n in enumerate(self.cells_per_axis):
            out[..., a] = rem % n
            rem = rem // n
        return out

    def face_index(self, axis: int, multi: np.ndarray) -> np.ndarray:
        """Global face id from multi-indices on the axis-`axis` face grid."""
        multi = np.asarray(multi)
        shape = self.faces_per_axis_shape(axis)
        strides = [1]
        for n in shape[:-1]:
            strides.append(strides[-1] * n)
        strides = np.array(strides, dtype=np.int64)
        return self.face_offsets[axis] + (multi * strides).sum(axis=-1)

    def cell_centers(self) -> np.ndarray:
        """(n_cells, dim) array of cell midpoints, lexicographic order."""
        axes = [
            self.origin[a] + (np.arange(self.cells_per_axis[a]) + 0.5) * self.cell_size[a]
            for a in range(self.dim)
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        # meshgrid 'ij' puts axis 0 slowest; transpose so x runs fastest.
        pts = np.stack([g.transpose(*range(self.dim - 1, -1, -1)).ravel() for g in grids], axis=-1)
        return pts


@dataclass(frozen=True)
class FaceSet:
    """Interior and boundary faces of one level.

    interior: (cell_lo, cell_hi, axis) per face, oriented lo -> hi (+e_axis).
    boundary: (cell, axis, side) per face, side 0 = lower end of the axis.
    Outward normals on the boundary are -e_axis for side 0, +e_axis for side 1.
    """

    interior_faces: np.ndarray  # (N, 3) int64
    boundary_faces: np.ndarray  # (M, 3) int64
    interior_face_ids: np.ndarray  # (N,) global face id
    boundary_face_ids: np.ndarray  # (M,)


def _face_grid_multis(shape: tuple[int, ...]) -> np.ndarray:
    """All multi-indices of a tensor grid, lexicographic with x fastest."""
    axes = [np.arange(n, dtype=np.int64) for n in shape]
    grids = np.meshgrid(*axes, indexing="ij")
    d = len(shape)
    cols = [g.transpose(*range(d - 1, -1, -1)).ravel() for g in grids]
    return np.stack(cols, axis=-1)


def build_face_set(level: MeshLevel) -> FaceSet:
    interior = []
    interior_ids = []
    boundary = []
    boundary_ids = []
    for a in range(level.dim):
        shape = level.faces_per_axis_shape(a)
        multis = _face_grid_multis(shape)
        pos = multis[:, a]
        is_lo = pos == 0
        is_hi = pos == shape[a] - 1
        inner = ~(is_lo | is_hi)

        cell_hi = multis.copy()
        cell_lo = multis.copy()
        cell_lo[:, a] -= 1

        ids = level.face_index(a, multis)

        m = multis[inner]
        lo = level.cell_index(cell_lo[inner])
        hi = level.cell_index(cell_hi[inner])
        interior.append(np.stack([lo, hi, np.full(len(lo), a, dtype=np.int64)], axis=-1))
        interior_ids.append(ids[inner])

        for side, mask, cells in ((0, is_lo, cell_hi), (1, is_hi, cell_lo)):
            c = level.cell_index(cells[mask])
            boundary.append(
                np.stack(
                    [c, np.full(len(c), a, dtype=np.int64), np.full(len(c), side, dtype=np.int64)],
                    axis=-1,
                )
            )
            boundary_ids.append(ids[mask])

    return FaceSet(
        interior_faces=np.concatenate(interior, axis=0),
        boundary_faces=np.concatenate(boundary, axis=0),
        interior_face_ids=np.concatenate(interior_ids),
        boundary_face_ids=np.concatenate(boundary_ids),
    )


@dataclass(frozen=True)
class VertexPatch:
    """The 2^d cells sharing one interior mesh vertex."""

    vertex_id: int
    vertex_multi: tuple[int, ...]
    cells: np.ndarray  # (2^d,) cell ids
    interior_face_ids: np.ndarray  # faces strictly inside the patch
    boundary_face_ids: np.ndarray  # faces on the patch boundary


class PatchCollection:
    """Vertex patches of a level, lexicographic by vertex.

    Sequence-like: len(), indexing and iteration yield VertexPatch objects.
    The vectorized index arrays (`cells`, `interior_face_ids`) back the
    batched smoother setup.
    """

    def __init__(self, level: MeshLevel):
        self.level = level
        d = level.dim
        n = level.cells_per_axis
        if any(c < 2 for c in n):
            raise ValueError("vertex patches need at least 2 cells per axis")
        # Interior vertices have multi-index 1..n-1 along each axis.
        self.vertex_multis = _face_grid_multis(tuple(c - 1 for c in n)) + 1
        self.n_patches = len(self.vertex_multis)

        # Cells around each vertex: offsets in {-1,0}^d relative to the vertex.
        offsets = _face_grid_multis((2,) * d) - 1
        cell_multis = self.vertex_multis[:, None, :] + offsets[None, :, :]
        self.cells = level.cell_index(cell_multis)  # (N, 2^d)

        # Faces strictly inside a patch are those incident to its vertex:
        # for axis a, the 2^(d-1) faces whose a-position equals the vertex's.
        inner = []
        for a in range(d):
            toffs = _face_grid_multis(tuple(2 for t in range(d) if t != a)) - 1
            fm = np.empty((self.n_patches, len(toffs), d), dtype=np.int64)
            fm[:, :, a] = self.vertex_multis[:, None, a]
            t = 0
            for ax in range(d):
                if ax == a:
                    continue
                fm[:, :, ax] = self.vertex_multis[:, None, ax] + toffs[None, :, t]
                t += 1
            inner.append(level.face_index(a, fm))
        self.interior_face_ids = np.concatenate(inner, axis=1)  # (N, d*2^(d-1))

    def __len__(self) -> int:
        return self.n_patches

    def _patch_boundary_faces(self, i: int) -> np.ndarray:
        # All faces of the patch cells except the interior ones.
        level = self.level
        cells = self.level.cell_multi(self.cells[i])
        ids = []
        for a in range(level.dim):
            for side in (0, 1):
                fm = cells.copy()
                fm[:, a] += side
                ids.append(level.face_index(a, fm))
        all_ids = np.unique(np.concatenate(ids))
        return np.setdiff1d(all_ids, self.interior_face_ids[i])

    def __getitem__(self, i: int) -> VertexPatch:
        if not 0 <= i < self.n_patches:
            raise IndexError(i)
        vm = tuple(int(v) for v in self.vertex_multis[i])
        strides = [1]
        for c in self.level.cells_per_axis[:-1]:
            strides.append(strides[-1] * (c + 1))
        vid = int(sum(v * s for v, s in zip(vm, strides)))
        return VertexPatch(
            vertex_id=vid,
            vertex_multi=vm,
            cells=self.cells[i],
            interior_face_ids=np.sort(self.interior_face_ids[i]),
            boundary_face_ids=self._patch_boundary_faces(i),
        )

    def __iter__(self):
        for i in range(self.n_patches):
            yield self[i]


@dataclass
class MeshHierarchy:
    """Nested uniform grids, level 0 coarsest to level J finest."""

    dim: int
    domain: Box
    coarse_cells: tuple[int, ...]
    levels: list[MeshLevel] = field(default_factory=list)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def finest(self) -> MeshLevel:
        return self.levels[-1]

    def face_set(self, level: int) -> FaceSet:
        return build_face_set(self.levels[level])


def build_hierarchy(
    dim: int,
    coarse_cells_per_axis,
    num_refinements: int,
    domain: Box | None = None,
) -> MeshHierarchy:
    """Build a hierarchy of num_refinements+1 nested uniform grids.

    Each coarse axis count must be at least 2 so that interior-vertex
    patches cover every cell on every level.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if isinstance(coarse_cells_per_axis, int):
        coarse_cells_per_axis = (coarse_cells_per_axis,) * dim
    coarse = tuple(int(c) for c in coarse_cells_per_axis)
    if len(coarse) != dim:
        raise ValueError("coarse cell counts must match the dimension")
    if any(c < 2 for c in coarse):
        raise ValueError("need at least 2 coarse cells per axis (patch covering)")
    if num_refinements < 0:
        raise ValueError("number of refinements must be >= 0")
    if domain is None:
        domain = unit_box(dim)
    if len(domain.origin) != dim:
        raise ValueError("domain dimension mismatch")

    finest_total = int(np.prod([c << num_refinements for c in coarse], dtype=np.float64))
    if np.prod([float(c << num_refinements) for c in coarse]) > _MAX_TOTAL_CELLS:
        raise ValueError("refinement would overflow the cell index range")

    levels = []
    for j in range(num_refinements + 1):
        cells = tuple(c * 2**j for c in coarse)
        size = tuple(L / n for L, n in zip(domain.lengths, cells))
        levels.append(
            MeshLevel(dim=dim, index=j, cells_per_axis=cells, origin=domain.origin, cell_size=size)
        )
    del finest_total
    return MeshHierarchy(dim=dim, domain=domain, coarse_cells=coarse, levels=levels)


def vertex_patches(hierarchy: MeshHierarchy, level: int) -> PatchCollection:
    """Overlapping vertex patches of one level, lexicographic by vertex."""
    if not 0 <= level < hierarchy.num_levels:
        raise ValueError(f"level {level} out of range")
    return PatchCollection(hierarchy.levels[level])


def parent_child_map(hierarchy: MeshHierarchy, level: int) -> np.ndarray:
    """(n_coarse_cells, 2^d) children of every level-`level` cell on level+1."""
    if not 0 <= level < hierarchy.num_levels - 1:
        raise ValueError("parent level must be below the finest level")
    coarse = hierarchy.levels[level]
    fine = hierarchy.levels[level + 1]
    d = coarse.dim
    parents = coarse.cell_multi(np.arange(coarse.n_cells))
    offsets = _face_grid_multis((2,) * d)
    children_multi = 2 * parents[:, None, :] + offsets[None, :, :]
    return fine.cell_index(children_multi)

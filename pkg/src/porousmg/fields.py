"""Permeability field synthesis, file I/O, and per-level coarsening.

Fields store the scaled inverse permeability kappa cellwise on the finest
grid, flat with the x index running fastest (matching the mesh cell
numbering).  Generators emit two-valued fields: morphological features
(blocks, walls, inclusions, strips) carry `kappa_low`, the background
`kappa_high`; swapping the two values reverses the roles of the high- and
low-permeability regions.

File formats:
  raw_binary: magic "PFK1", u32 little-endian dimension d, d u64
      per-axis cell counts, then prod(dims) f64 values row-major (x fastest).
  ascii_list: whitespace-separated decimal values; the cell counts must be
      supplied by the caller and the value count must match exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from porousmg.mesh import MeshHierarchy, parent_child_map

_MAGIC = b"PFK1"


class FieldError(ValueError):
    """Base class for permeability-field failures."""


class FieldFormatError(FieldError):
    """Malformed header or unknown format."""


class FieldCountError(FieldError):
    """Value count does not match the declared cell counts."""


class FieldValueError(FieldError):
    """Non-positive or non-finite permeability values."""


@dataclass
class PermeabilityField:
    """Cellwise kappa values on a tensor grid, flat, x fastest."""

    dims: tuple[int, ...]
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        self.values = np.asarray(self.values, dtype=float).ravel()
        if len(self.dims) not in (2, 3):
            raise FieldFormatError(f"field must be 2D or 3D, got {len(self.dims)} axes")
        if any(n < 1 for n in self.dims):
            raise FieldFormatError("cell counts must be positive")
        if self.values.size != int(np.prod(self.dims)):
            raise FieldCountError(
                f"{self.values.size} values for dims {self.dims} "
                f"(expected {int(np.prod(self.dims))})"
            )
        if not np.all(np.isfinite(self.values)) or np.any(self.values <= 0):
            raise FieldValueError("non-positive permeability value in field")

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    def as_grid(self) -> np.ndarray:
        """Values as an array indexed [z,]y,x (C order of the flat layout)."""
        return self.values.reshape(self.dims[::-1])


def contrast(fld: PermeabilityField) -> float:
    """max(kappa) / min(kappa), identical to the permeability ratio."""
    return float(fld.values.max() / fld.values.min())


# -------------------------------------------------------------------- generators
def _check_two_values(kappa_high: float, kappa_low: float) -> None:
    if not (kappa_high >= kappa_low > 0):
        raise FieldError("need kappa_high >= kappa_low > 0")


def _check_dims(dims, minimum=8) -> tuple[int, ...]:
    dims = tuple(int(n) for n in dims)
    if len(dims) not in (2, 3):
        raise FieldError("generators support 2 or 3 axes")
    if any(n < minimum for n in dims):
        raise FieldError(f"generator fields need at least {minimum} cells per axis")
    return dims


def _cell_center_grid(dims) -> np.ndarray:
    axes = [np.arange(n) + 0.5 for n in dims]
    grids = np.meshgrid(*axes, indexing="ij")
    d = len(dims)
    rev = tuple(range(d - 1, -1, -1))
    return np.stack([g.transpose(rev).ravel() for g in grids], axis=-1)


def _checkerboard(dims, rng, block=1, **_):
    idx = _cell_center_grid(dims).astype(int)
    parity = (idx // int(block)).sum(axis=1) % 2
    return parity == 1  # mask of low-kappa cells


def _open_foam(dims, rng, n_seeds=None, wall_width=1.2, open_fraction=0.25, **_):
    n_cells = int(np.prod(dims))
    if n_seeds is None:
        n_seeds = max(10, n_cells // 170)
    seeds = rng.uniform(0.0, 1.0, size=(n_seeds, len(dims))) * np.array(dims)
    centers = _cell_center_grid(dims)
    d2 = ((centers[:, None, :] - seeds[None, :, :]) ** 2).sum(axis=2)
    two = np.sqrt(np.partition(d2, 1, axis=1)[:, :2])
    wall = (two[:, 1] - two[:, 0]) < wall_width
    # Punch holes so the walls are mostly disconnected.
    widx = np.nonzero(wall)[0]
    drop = rng.choice(widx, size=int(open_fraction * len(widx)), replace=False)
    wall[drop] = False
    return wall


def _place_boxes(dims, rng, count, min_size, max_size, max_tries=None):
    d = len(dims)
    occupied = np.zeros(dims[::-1], dtype=bool)
    boxes = []
    tries = 0
    budget = max_tries if max_tries is not None else 200 * max(count, 1)
    while len(boxes) < count and tries < budget:
        tries += 1
        size = rng.integers(min_size, max_size + 1, size=d)
        lo = np.array([rng.integers(0, dims[a] - size[a] + 1) for a in range(d)])
        sl = tuple(slice(lo[a], lo[a] + size[a]) for a in reversed(range(d)))
        if occupied[sl].any():
            continue
        occupied[sl] = True
        boxes.append((lo, size))
    return occupied, boxes


def _inclusions(dims, rng, count=24, min_size=None, max_size=None, **_):
    d = len(dims)
    if min_size is None:
        min_size = max(2, min(dims) // 16)
    if max_size is None:
        max_size = max(int(min_size) + 1, min(dims) // 6)
    occupied, _boxes = _place_boxes(dims, rng, int(count), int(min_size), int(max_size))
    return occupied.ravel()


def _connected_inclusions(
    dims, rng, count=24, min_size=None, max_size=None, strip_width=2, n_connections=None, **_
):
    d = len(dims)
    if min_size is None:
        min_size = max(2, min(dims) // 16)
    if max_size is None:
        max_size = max(int(min_size) + 1, min(dims) // 6)
    occupied, boxes = _place_boxes(dims, rng, int(count), int(min_size), int(max_size))
    if n_connections is None:
        n_connections = max(1, len(boxes) // 2)
    # Random-walk strips between centers of consecutive inclusions.
    for c in range(min(int(n_connections), max(len(boxes) - 1, 0))):
        a = boxes[c][0] + boxes[c][1] // 2
        btarget = boxes[c + 1][0] + boxes[c + 1][1] // 2
        pos = a.astype(np.int64)
        guard = 4 * int(np.sum(dims))
        while np.any(pos != btarget) and guard > 0:
            guard -= 1
            delta = btarget - pos
            axes = np.nonzero(delta)[0]
            weights = np.abs(delta[axes]).astype(float)
            ax = axes[rng.choice(len(axes), p=weights / weights.sum())]
            pos[ax] += np.sign(delta[ax])
            sl = tuple(
                slice(
                    max(0, pos[t] - strip_width // 2),
                    min(dims[t], pos[t] + (strip_width + 1) // 2),
                )
                for t in reversed(range(d))
            )
            occupied[sl] = True
    return occupied.ravel()


_GENERATORS = {
    "checkerboard": _checkerboard,
    "open_foam": _open_foam,
    "inclusions": _inclusions,
    "connected_inclusions": _connected_inclusions,
}


def generate_field(
    kind: str,
    dims,
    kappa_high: float,
    kappa_low: float,
    seed: int = 0,
    **kind_params,
) -> PermeabilityField:
    """Deterministic synthetic field; feature cells carry kappa_low."""
    if kind == "constant":
        dims = tuple(int(n) for n in dims)
        vals = np.full(int(np.prod(dims)), float(kappa_high))
        return PermeabilityField(dims, vals, provenance={"kind": "constant"})
    if kind not in _GENERATORS:
        raise FieldError(f"unknown field kind {kind!r}")
    _check_two_values(kappa_high, kappa_low)
    dims = _check_dims(dims)
    rng = np.random.default_rng(seed)
    low_mask = _GENERATORS[kind](dims, rng, **kind_params)
    vals = np.full(int(np.prod(dims)), float(kappa_high))
    vals[low_mask] = float(kappa_low)
    return PermeabilityField(
        dims,
        vals,
        provenance={"kind": kind, "seed": seed, **kind_params},
    )


# ------------------------------------------------------------------------ files
def write_field(fld: PermeabilityField, path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", fld.dim))
        for n in fld.dims:
            f.write(struct.pack("<Q", n))
        f.write(fld.values.astype("<f8").tobytes())


def load_field(path, fmt: str = "raw_binary", dims=None) -> PermeabilityField:
    if fmt == "raw_binary":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != _MAGIC:
                raise FieldFormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
            (d,) = struct.unpack("<I", f.read(4))
            if d not in (2, 3):
                raise FieldFormatError(f"unsupported dimension {d}")
            file_dims = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(d))
            payload = f.read()
        expected = int(np.prod(file_dims))
        if len(payload) != 8 * expected:
            raise FieldCountError(
                f"payload holds {len(payload) // 8} values, dims need {expected}"
            )
        vals = np.frombuffer(payload, dtype="<f8").astype(float)
        return PermeabilityField(file_dims, vals, provenance={"source": str(path)})
    if fmt == "ascii_list":
        if dims is None:
            raise FieldFormatError("ascii_list requires explicit cell counts")
        with open(path) as f:
            vals = np.array(f.read().split(), dtype=float)
        return PermeabilityField(tuple(dims), vals, provenance={"source": str(path)})
    raise FieldFormatError(f"unknown field format {fmt!r}")


def invert_permeability(fld: PermeabilityField, scale: float = 1.0) -> PermeabilityField:
    """Map raw permeability K to kappa = scale / K."""
    return PermeabilityField(
        fld.dims, scale / fld.values, provenance={**fld.provenance, "inverted": scale}
    )


# --------------------------------------------------------------------- reshaping
def _overlap_matrix(n_src: int, n_dst: int) -> np.ndarray:
    """Rows: destination cells; columns: overlap fractions of source cells."""
    i = np.arange(n_dst)[:, None]
    j = np.arange(n_src)[None, :]
    lo = np.maximum(i / n_dst, j / n_src)
    hi = np.minimum((i + 1) / n_dst, (j + 1) / n_src)
    return np.clip(hi - lo, 0.0, None) * n_dst


def rescale_field(fld: PermeabilityField, new_dims) -> PermeabilityField:
    """Overlap-volume-weighted averaging onto a new cell grid (mean-exact)."""
    new_dims = tuple(int(n) for n in new_dims)
    if len(new_dims) != fld.dim:
        raise FieldError("rescale cannot change the dimension")
    if any(n < 1 for n in new_dims):
        raise FieldError("cell counts must be positive")
    if new_dims == fld.dims:
        return PermeabilityField(fld.dims, fld.values.copy(), provenance=dict(fld.provenance))
    arr = fld.as_grid()
    for a in range(fld.dim):  # axis a is array dimension dim-1-a
        R = _overlap_matrix(fld.dims[a], new_dims[a])
        arr = np.moveaxis(np.tensordot(R, np.moveaxis(arr, fld.dim - 1 - a, 0), axes=(1, 0)), 0, fld.dim - 1 - a)
    return PermeabilityField(
        new_dims, arr.ravel(), provenance={**fld.provenance, "rescaled_to": new_dims}
    )


def replicate_field(fld: PermeabilityField, factor: int) -> PermeabilityField:
    """Voxel replication onto a 2^t-finer grid (nearest-voxel sampling)."""
    arr = fld.as_grid()
    for axis in range(arr.ndim):
        arr = np.repeat(arr, factor, axis=axis)
    dims = tuple(n * factor for n in fld.dims)
    return PermeabilityField(dims, arr.ravel(), provenance=dict(fld.provenance))


def resample_to_grid(fld: PermeabilityField, grid_dims) -> PermeabilityField:
    """Match a field to a mesh: replicate when the grid is a 2^t refinement
    of the field voxels, otherwise overlap-average."""
    grid_dims = tuple(int(n) for n in grid_dims)
    if grid_dims == fld.dims:
        return fld
    ratios = [g / n for g, n in zip(grid_dims, fld.dims)]
    r = ratios[0]
    if r > 1 and all(abs(q - r) < 1e-12 for q in ratios) and float(r).is_integer():
        return replicate_field(fld, int(r))
    return rescale_field(fld, grid_dims)


def slice_field(fld: PermeabilityField, axis: int, index: int) -> PermeabilityField:
    """Extract one 2D plane of a 3D field."""
    if fld.dim != 3:
        raise FieldError("slicing needs a 3D field")
    if not 0 <= axis < 3:
        raise FieldError("axis must be 0, 1, or 2")
    if not 0 <= index < fld.dims[axis]:
        raise FieldError(f"slice index {index} out of range for axis {axis}")
    arr = fld.as_grid()  # (z, y, x)
    plane = np.take(arr, index, axis=2 - axis)
    new_dims = tuple(n for a, n in enumerate(fld.dims) if a != axis)
    return PermeabilityField(
        new_dims, plane.ravel(), provenance={**fld.provenance, "slice": (axis, index)}
    )


# ------------------------------------------------------------------- coarsening
@dataclass
class FieldLevels:
    """Cellwise kappa per mesh level, finest last."""

    per_level: list[np.ndarray]

    def __getitem__(self, j: int) -> np.ndarray:
        return self.per_level[j]

    def __len__(self) -> int:
        return len(self.per_level)


def coarsen_levels(fld: PermeabilityField, hierarchy: MeshHierarchy) -> FieldLevels:
    """Arithmetic averaging of the 2^d children down the hierarchy."""
    finest = hierarchy.finest
    if fld.dims != finest.cells_per_axis:
        raise FieldError(
            f"field dims {fld.dims} do not match the finest level {finest.cells_per_axis}"
        )
    levels = [None] * hierarchy.num_levels
    levels[-1] = fld.values.copy()
    for j in range(hierarchy.num_levels - 2, -1, -1):
        pc = parent_child_map(hierarchy, j)
        levels[j] = levels[j + 1][pc].mean(axis=1)
    return FieldLevels(per_level=levels)

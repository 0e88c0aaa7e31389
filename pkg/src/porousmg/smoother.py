"""Symmetric multiplicative overlapping Schwarz smoother on vertex patches.

Each patch solves the local saddle-point problem restricted to the velocity
DoFs strictly inside the patch (patch-boundary normal traces are frozen,
which realizes homogeneous slip conditions) and the pressures of its cells,
with the local pressure mean pinned to zero through a single Lagrange
multiplier.  One smoother application sweeps the patches in lexicographic
vertex order and then in reverse, always using the freshest state; the
reverse pass makes the error propagation operator self-adjoint in the
energy pairing of the level operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from porousmg._kernels import gather_and_invert, multiplicative_sweep
from porousmg.discretization import SystemOperator
from porousmg.mesh import PatchCollection


class SmootherError(RuntimeError):
    pass


@dataclass(frozen=True)
class PatchSolver:
    """One patch's index sets and factorized local solve (a view)."""

    index: int
    vertex_id: int
    velocity_dofs: np.ndarray
    pressure_dofs: np.ndarray
    inverse: np.ndarray  # (n+1, n+1), last row/column is the mean multiplier

    @property
    def size(self) -> int:
        """Local system size including the multiplier."""
        return self.inverse.shape[0]

    def solve(self, residual: np.ndarray) -> np.ndarray:
        """Correction for a local residual (velocity part then pressure part)."""
        rhs = np.append(residual, 0.0)
        return (self.inverse @ rhs)[:-1]


class SchwarzSmoother:
    """Factorized vertex-patch solvers for one level, in sweep order."""

    def __init__(self, op: SystemOperator, patches: PatchCollection, pivot_tol: float = 1e-14):
        self.op = op
        self.patches = patches
        layout = op.layout
        nfm = layout.n_face_moments
        n_patches = len(patches)

        face_dofs = (
            patches.interior_face_ids[:, :, None] * nfm + np.arange(nfm)
        ).reshape(n_patches, -1)
        blocks = [face_dofs]
        if layout.n_cell_interior:
            interior = (
                layout.n_face_dofs
                + patches.cells[:, :, None] * layout.n_cell_interior
                + np.arange(layout.n_cell_interior)
            ).reshape(n_patches, -1)
            blocks.append(interior)
        self.n_velocity_local = sum(b.shape[1] for b in blocks)

        npm = layout.pressure_modes
        pdofs = (
            layout.n_velocity + patches.cells[:, :, None] * npm + np.arange(npm)
        ).reshape(n_patches, -1)
        self.n_pressure_local = pdofs.shape[1]
        self.dofs = np.ascontiguousarray(
            np.concatenate(blocks + [pdofs], axis=1), dtype=np.int64
        )

        border = np.zeros(self.dofs.shape[1])
        vol = layout.level.cell_volume
        border[self.n_velocity_local :: npm] = vol
        self.border = border

        S = op.combined()
        self._S_data = S.data
        self._S_indices = S.indices
        self._S_indptr = S.indptr
        self.inverses, bad = gather_and_invert(
            S.data, S.indices, S.indptr, self.dofs, border, pivot_tol
        )
        if bad >= 0:
            kap = op.kappa[patches.cells[bad]]
            raise SmootherError(
                f"singular local matrix on patch {bad} "
                f"(vertex {tuple(patches.vertex_multis[bad])}, kappa={kap})"
            )
        self._forward = np.arange(n_patches, dtype=np.int64)
        self._reverse = self._forward[::-1].copy()

    def __len__(self) -> int:
        return len(self.patches)

    def __getitem__(self, i: int) -> PatchSolver:
        return PatchSolver(
            index=i,
            vertex_id=self.patches[i].vertex_id,
            velocity_dofs=self.dofs[i, : self.n_velocity_local],
            pressure_dofs=self.dofs[i, self.n_velocity_local :] - self.op.layout.n_velocity,
            inverse=self.inverses[i],
        )

    def sweep(self, x: np.ndarray, b: np.ndarray, order: np.ndarray) -> None:
        multiplicative_sweep(
            x, b, self._S_data, self._S_indices, self._S_indptr, self.dofs, self.inverses, order
        )

    def apply_symmetric(self, x: np.ndarray, b: np.ndarray) -> None:
        """One smoother application x <- x + R (b - A x), in place."""
        self.sweep(x, b, self._forward)
        self.sweep(x, b, self._reverse)


def build_patch_solvers(
    op: SystemOperator, patches: PatchCollection, pivot_tol: float = 1e-14
) -> SchwarzSmoother:
    """Factorize all vertex-patch saddle problems of a level."""
    return SchwarzSmoother(op, patches, pivot_tol=pivot_tol)


def apply_smoother(smoother: SchwarzSmoother, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return x after one symmetric multiplicative sweep for A x = b."""
    if x.shape != (smoother.op.n_total,) or b.shape != (smoother.op.n_total,):
        raise ValueError("state and right-hand side must match the level size")
    out = x.astype(float, copy=True)
    smoother.apply_symmetric(out, b)
    return out

"""Grid transfer between consecutive levels.

Prolongation is the natural injection of the nested spaces: a coarse
function is re-expressed exactly on the fine grid by applying the fine
degree-of-freedom functionals to it, so embedding preserves point values,
divergence-freedom, and the pressure mean.  Residual (functional)
restriction is the plain transpose; restriction of primal functions is the
L2 projection realized with the level mass matrices.

Stencils are computed once per (degree, dimension) on a reference parent
cell; all moments are taken in reference coordinates, which makes the
entries independent of the level's cell size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from porousmg.elements import element_pair, shifted_legendre
from porousmg.mesh import MeshHierarchy, _face_grid_multis
from porousmg.discretization import DofLayout, assemble_operator


# ------------------------------------------------------------- reference stencils
@lru_cache(maxsize=None)
def _pressure_child_matrices(degree: int, dim: int) -> np.ndarray:
    """(2^d, np, np): child modal coefficients of each coarse mode."""
    _, press = element_pair(degree, dim)
    offsets = _face_grid_multis((2,) * dim)
    pts = press._cell_pts  # reference child quadrature
    out = np.empty((len(offsets), press.n_dofs, press.n_dofs))
    for ci, o in enumerate(offsets):
        parent_pts = (pts + o) / 2.0
        vals = press.eval_values(parent_pts)  # coarse modes at child points
        out[ci] = press.project_values(vals)  # (n_modes_coarse, n_modes_child)
    # project_values returns coefficients along the last axis; transpose so
    # out[ci][child_mode, coarse_mode].
    return out.transpose(0, 2, 1)


@lru_cache(maxsize=None)
def _velocity_parent_stencil(degree: int, dim: int):
    """Fine DoF values of every coarse shape within one parent cell.

    Returns (face_stencil, interior_stencil):
      face_stencil[(b, plane, t_offset)] : (nu, nfm) moments on the fine face
        of axis b at parent plane 0, 1, 2 (low, middle, high) and transverse
        child offset t_offset;
      interior_stencil[child] : (nu, n_cell_interior) fine interior moments.
    """
    el, _ = element_pair(degree, dim)
    nu = el.n_dofs
    nfm = el.n_face_moments
    face_stencil = {}
    for b in range(dim):
        mw = el.face_moment_weights(b)  # (nfm, nqf) reference-face weights
        rule = el.face_rule(b, 0)
        toffsets = _face_grid_multis((2,) * (dim - 1))
        for plane in (0, 1, 2):
            for ti, t in enumerate(toffsets):
                pts = np.empty((len(rule.weights), dim))
                pts[:, b] = plane / 2.0
                for t_i, t_ax in enumerate(el.transverse_axes(b)):
                    pts[:, t_ax] = (rule.transverse_points[:, t_i] + t[t_i]) / 2.0
                vals = el.eval_values(pts)  # (nu, nqf), own component each
                moments = vals @ mw.T  # (nu, nfm)
                moments[el.comp != b] = 0.0
                face_stencil[(b, plane, ti)] = moments
    interior_stencil = {}
    n_int = dim * el.n_interior_per_comp
    if n_int:
        cq, cw = el.cell_rule()
        offsets = _face_grid_multis((2,) * dim)
        # Weight rows turning child-quad samples of component a into moments.
        int_weights = []
        for dof in el.dofs:
            if dof[0] != "interior":
                continue
            _, a, r, m = dof
            leg = shifted_legendre(r)(cq[:, a])
            scale = 2 * r + 1
            for t_i, t_ax in enumerate(el.transverse_axes(a)):
                leg = leg * shifted_legendre(m[t_i])(cq[:, t_ax])
                scale *= 2 * m[t_i] + 1
            int_weights.append((a, scale * leg * cw))
        for ci, o in enumerate(offsets):
            parent_pts = (cq + o) / 2.0
            vals = el.eval_values(parent_pts)  # (nu, nq)
            st = np.zeros((nu, n_int))
            for j, (a, wrow) in enumerate(int_weights):
                st[:, j] = vals @ wrow
                st[el.comp != a, j] = 0.0
            interior_stencil[ci] = st
    return face_stencil, interior_stencil


# ----------------------------------------------------------------- transfer pair
@dataclass
class TransferPair:
    """Prolongation/restriction between level j and level j+1."""

    coarse: DofLayout
    fine: DofLayout
    P_u: sp.csr_matrix
    P_p: sp.csr_matrix
    _mass_cache: dict = field(default_factory=dict, repr=False)

    def prolong_velocity(self, u: np.ndarray) -> np.ndarray:
        return self.P_u @ u

    def prolong(self, x: np.ndarray) -> np.ndarray:
        u = x[: self.coarse.n_velocity]
        p = x[self.coarse.n_velocity :]
        return np.concatenate([self.P_u @ u, self.P_p @ p])

    def restrict_functional(self, r: np.ndarray) -> np.ndarray:
        """Plain transpose: <restricted, y_c> = <r, prolong(y_c)>."""
        ru = r[: self.fine.n_velocity]
        rp = r[self.fine.n_velocity :]
        return np.concatenate([self.P_u.T @ ru, self.P_p.T @ rp])

    # -- L2 projection of primal functions (mass-weighted restriction) --------
    def _velocity_mass(self, layout: DofLayout) -> sp.csr_matrix:
        key = ("Mu", layout.level.index)
        if key not in self._mass_cache:
            op = assemble_operator(
                layout.level,
                np.ones(layout.level.n_cells),
                mu=0.0,
                degree=layout.degree,
                constrain_boundary=False,
            )
            self._mass_cache[key] = op.A
        return self._mass_cache[key]

    def _pressure_mass_diag(self, layout: DofLayout) -> np.ndarray:
        return np.tile(
            layout.level.cell_volume * layout.press_element.mass_diag_ref,
            layout.level.n_cells,
        )

    def project_velocity(self, u_fine: np.ndarray) -> np.ndarray:
        key = "Mu_c_solve"
        if key not in self._mass_cache:
            self._mass_cache[key] = spla.splu(self._velocity_mass(self.coarse).tocsc())
        rhs = self.P_u.T @ (self._velocity_mass(self.fine) @ u_fine)
        return self._mass_cache[key].solve(rhs)

    def project_pressure(self, p_fine: np.ndarray) -> np.ndarray:
        rhs = self.P_p.T @ (self._pressure_mass_diag(self.fine) * p_fine)
        return rhs / self._pressure_mass_diag(self.coarse)

    def project(self, x_fine: np.ndarray) -> np.ndarray:
        u = x_fine[: self.fine.n_velocity]
        p = x_fine[self.fine.n_velocity :]
        return np.concatenate([self.project_velocity(u), self.project_pressure(p)])


def build_transfer(hierarchy: MeshHierarchy, level: int, degree: int) -> TransferPair:
    """Transfer operators from `level` to `level`+1."""
    if not 0 <= level < hierarchy.num_levels - 1:
        raise ValueError("transfer requires a level below the finest")
    coarse = DofLayout(hierarchy.levels[level], degree)
    fine = DofLayout(hierarchy.levels[level + 1], degree)
    d = hierarchy.dim
    clvl, flvl = coarse.level, fine.level

    cc = clvl.cell_multi(np.arange(clvl.n_cells))  # (Nc, d)
    cell_cdofs = coarse.cell_velocity_dofs()
    nfm = coarse.n_face_moments

    rows, cols, data = [], [], []
    face_stencil, interior_stencil = _velocity_parent_stencil(degree, d)
    toffsets = _face_grid_multis((2,) * (d - 1))
    el = coarse.vel_element

    def emit(axis, cells_sel, fine_multis, stencil):
        """stencil: (nu, nfm); scatter over selected cells."""
        ii, mm = np.nonzero(stencil)
        if len(ii) == 0:
            return
        fdofs = fine.face_dof_ids(axis, fine_multis)  # (Ncsel, nfm)
        r = fdofs[:, mm]
        c = cell_cdofs[cells_sel][:, ii]
        rows.append(r.ravel())
        cols.append(c.ravel())
        data.append(np.broadcast_to(stencil[ii, mm], r.shape).ravel())

    for b in range(d):
        tr_axes = el.transverse_axes(b)
        on_boundary_lo = cc[:, b] == 0
        for ti, t in enumerate(toffsets):
            for plane in (0, 1, 2):
                if plane == 0:
                    sel = np.nonzero(on_boundary_lo)[0]
                else:
                    sel = np.arange(clvl.n_cells)
                if len(sel) == 0:
                    continue
                fm = np.empty((len(sel), d), dtype=np.int64)
                fm[:, b] = 2 * cc[sel, b] + plane
                for t_i, t_ax in enumerate(tr_axes):
                    fm[:, t_ax] = 2 * cc[sel, t_ax] + t[t_i]
                emit(b, sel, fm, face_stencil[(b, plane, ti)])

    if coarse.n_cell_interior:
        offsets = _face_grid_multis((2,) * d)
        for ci, o in enumerate(offsets):
            fcells = flvl.cell_index(2 * cc + o)
            fdofs = fine.n_face_dofs + fcells[:, None] * fine.n_cell_interior + np.arange(
                fine.n_cell_interior
            )
            st = interior_stencil[ci]
            ii, jj = np.nonzero(st)
            if len(ii) == 0:
                continue
            rows.append(fdofs[:, jj].ravel())
            cols.append(cell_cdofs[:, ii].ravel())
            data.append(np.broadcast_to(st[ii, jj], (clvl.n_cells, len(ii))).ravel())

    P_u = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(fine.n_velocity, coarse.n_velocity),
    ).tocsr()

    # Pressure: modal re-expansion on each child.
    child_mats = _pressure_child_matrices(degree, d)
    offsets = _face_grid_multis((2,) * d)
    prow, pcol, pdat = [], [], []
    cpd = coarse.cell_pressure_dofs()
    npm = coarse.pressure_modes
    for ci, o in enumerate(offsets):
        fcells = flvl.cell_index(2 * cc + o)
        fpd = fcells[:, None] * npm + np.arange(npm)
        T = child_mats[ci]
        ii, jj = np.nonzero(np.abs(T) > 1e-15)
        prow.append(fpd[:, ii].ravel())
        pcol.append(cpd[:, jj].ravel())
        pdat.append(np.broadcast_to(T[ii, jj], (clvl.n_cells, len(ii))).ravel())
    P_p = sp.coo_matrix(
        (np.concatenate(pdat), (np.concatenate(prow), np.concatenate(pcol))),
        shape=(fine.n_pressure, coarse.n_pressure),
    ).tocsr()

    return TransferPair(coarse=coarse, fine=fine, P_u=P_u, P_p=P_p)


def restrict_residual(pair: TransferPair, fine_residual: np.ndarray) -> np.ndarray:
    """Residual restriction: the transpose of prolongation."""
    if fine_residual.shape != (pair.fine.n_total,):
        raise ValueError(
            f"expected fine vector of length {pair.fine.n_total}, got {fine_residual.shape}"
        )
    return pair.restrict_functional(fine_residual)

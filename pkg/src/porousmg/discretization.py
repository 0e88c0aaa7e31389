"""Degree-of-freedom layout and assembly of the saddle-point operator.

Velocity DoFs are face-normal moments (H(div)-conforming: one global value
per face moment, shared by both neighbor cells) followed by cell-interior
moments for degree 1.  Pressure DoFs are modal Legendre coefficients per
cell.  The bilinear form is

    a(u,v) = mu (grad u, grad v) + (kappa u, v)
             + 2 mu sigma <[u],[v]>_F - mu <{grad u} n, [v]>_F
             - mu <{grad v} n, [u]>_F

over all faces (boundary faces use [v] = v, {v} = v), together with the
divergence coupling b(v,q) = -(q, div v).  The penalty is
sigma = (k+1)(k+2)/h.  For mu = 0 no face term is assembled at all.

Dirichlet data: the normal trace is enforced strongly for both models.
Boundary-face velocity DoFs are pinned (unit diagonal, zero coupling) and
their interpolated data is condensed into the right-hand side; for mu > 0
the tangential trace is additionally enforced weakly through the boundary
face terms.  The resulting right-hand side reproduces (f, v) plus the
mu-scaled boundary data terms plus <g.n, q> on the pressure block.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from porousmg.elements import (
    PressureElement,
    VelocityElement,
    divergence_moment_ref,
    element_pair,
    tensor_rule,
)
from porousmg.mesh import MeshLevel, _face_grid_multis, build_face_set

VectorFunc = Callable[[np.ndarray], np.ndarray]


class AssemblyError(ValueError):
    pass


# --------------------------------------------------------------------------- dofs
@dataclass
class DofLayout:
    """Global velocity/pressure indexing for one level and degree."""

    level: MeshLevel
    degree: int

    def __post_init__(self):
        k, d = self.degree, self.level.dim
        if k not in (0, 1):
            raise AssemblyError("degree must be 0 or 1")
        if k == 1 and d == 3:
            raise AssemblyError("degree 1 is supported in 2D only")
        self.vel_element, self.press_element = element_pair(k, d)
        self.n_face_moments = self.vel_element.n_face_moments
        self.n_cell_interior = self.level.dim * self.vel_element.n_interior_per_comp
        self.n_face_dofs = self.level.n_faces_total * self.n_face_moments
        self.n_velocity = self.n_face_dofs + self.level.n_cells * self.n_cell_interior
        self.pressure_modes = self.press_element.n_dofs
        self.n_pressure = self.level.n_cells * self.pressure_modes
        self._cell_vdofs: np.ndarray | None = None

    @property
    def n_total(self) -> int:
        return self.n_velocity + self.n_pressure

    def face_dof_ids(self, axis: int, multis: np.ndarray) -> np.ndarray:
        """(..., n_face_moments) velocity dofs of the given axis-faces."""
        fids = self.level.face_index(axis, multis)
        return fids[..., None] * self.n_face_moments + np.arange(self.n_face_moments)

    def cell_velocity_dofs(self) -> np.ndarray:
        """(n_cells, nu_loc) global dofs in the element's local order."""
        if self._cell_vdofs is not None:
            return self._cell_vdofs
        lvl = self.level
        d = lvl.dim
        cells = lvl.cell_multi(np.arange(lvl.n_cells))
        blocks = []
        for a in range(d):
            lo = self.face_dof_ids(a, cells)
            hi_multi = cells.copy()
            hi_multi[:, a] += 1
            hi = self.face_dof_ids(a, hi_multi)
            blocks.extend([lo, hi])
        if self.n_cell_interior:
            base = self.n_face_dofs + np.arange(lvl.n_cells)[:, None] * self.n_cell_interior
            blocks.append(base + np.arange(self.n_cell_interior))
        self._cell_vdofs = np.concatenate(blocks, axis=1)
        return self._cell_vdofs

    def cell_pressure_dofs(self) -> np.ndarray:
        return (
            np.arange(self.level.n_cells)[:, None] * self.pressure_modes
            + np.arange(self.pressure_modes)
        )

    def boundary_velocity_dofs(self) -> np.ndarray:
        """Velocity dofs sitting on domain-boundary faces, ascending."""
        fs = build_face_set(self.level)
        ids = fs.boundary_face_ids
        dofs = ids[:, None] * self.n_face_moments + np.arange(self.n_face_moments)
        return np.sort(dofs.ravel())

    def pressure_mean_weights(self) -> np.ndarray:
        """Weights w with w.p = integral of the pressure field over the domain."""
        w = np.zeros(self.n_pressure)
        w[:: self.pressure_modes] = self.level.cell_volume
        return w

    def face_quad_points(self, axis: int, multis: np.ndarray) -> np.ndarray:
        """Physical quadrature points (..., nqf, d) of the given axis-faces."""
        lvl = self.level
        rule = self.vel_element.face_rule(axis, 0)
        base = np.asarray(multis, dtype=float) * np.array(lvl.cell_size)
        base = base + np.array(lvl.origin)
        pts = np.broadcast_to(
            rule.cell_points, multis.shape[:-1] + rule.cell_points.shape
        ).copy()
        pts = pts * np.array(lvl.cell_size)
        pts[..., axis] = 0.0
        return base[..., None, :] + pts

    def cell_quad_points(self, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Physical quadrature points (n_cells, nq, d) and reference weights."""
        lvl = self.level
        pts, w = self.vel_element.cell_rule(n)
        cells = lvl.cell_multi(np.arange(lvl.n_cells)).astype(float)
        base = cells * np.array(lvl.cell_size) + np.array(lvl.origin)
        return base[:, None, :] + pts[None, :, :] * np.array(lvl.cell_size), w


# ------------------------------------------------------------------- operators
@dataclass
class SystemOperator:
    """Per-level saddle operator in block form.

    A is the velocity block, B the divergence block with entries -(q, div v);
    the full operator [[A, B^T], [B, 0]] is applied blockwise and never
    concatenated.  When boundary DoFs are pinned, the stripped coupling
    columns are kept for right-hand-side condensation.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    layout: DofLayout
    mu: float
    sigma: float
    kappa: np.ndarray
    pinned: bool
    boundary_dofs: np.ndarray
    A_boundary: sp.csr_matrix | None = None
    B_boundary: sp.csr_matrix | None = None
    _combined: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def n_velocity(self) -> int:
        return self.layout.n_velocity

    @property
    def n_pressure(self) -> int:
        return self.layout.n_pressure

    @property
    def n_total(self) -> int:
        return self.layout.n_total

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x[: self.n_velocity], x[self.n_velocity :]

    def join(self, u: np.ndarray, p: np.ndarray) -> np.ndarray:
        return np.concatenate([u, p])

    def apply(self, x: np.ndarray) -> np.ndarray:
        u, p = self.split(x)
        return self.join(self.A @ u + self.B.T @ p, self.B @ u)

    def combined(self) -> sp.csr_matrix:
        """The full saddle matrix as one CSR (for row gathering and factorization)."""
        if self._combined is None:
            self._combined = sp.bmat(
                [[self.A, self.B.T], [self.B, None]], format="csr"
            )
        return self._combined


def _interior_face_matrix(el: VelocityElement, axis, mu, sigma, h, farea):
    """(2*nu, 2*nu) face coupling over [lo-cell dofs, hi-cell dofs]."""
    nu = el.n_dofs
    w = el.face_rule(axis, 0).weights
    # Traces seen from the two neighbors: lo cell's high face, hi cell's low face.
    jump = np.vstack([el.trace_vals[(axis, 1)], -el.trace_vals[(axis, 0)]])
    nder = 0.5 / h[axis] * np.vstack(
        [el.trace_normal_derivs[(axis, 1)], el.trace_normal_derivs[(axis, 0)]]
    )
    comp2 = np.concatenate([el.comp, el.comp])
    same = comp2[:, None] == comp2[None, :]
    jw = jump * w
    F = 2.0 * mu * sigma * (jw @ jump.T) - mu * ((nder * w) @ jump.T + jw @ nder.T)
    return np.where(same, F, 0.0) * farea


def _boundary_face_matrix(el: VelocityElement, axis, side, mu, sigma, h, farea):
    w = el.face_rule(axis, side).weights
    sgn = 2 * side - 1  # outward normal is sgn * e_axis
    tv = el.trace_vals[(axis, side)]
    nd = sgn / h[axis] * el.trace_normal_derivs[(axis, side)]
    same = el.comp[:, None] == el.comp[None, :]
    tw = tv * w
    F = 2.0 * mu * sigma * (tw @ tv.T) - mu * ((nd * w) @ tv.T + tw @ nd.T)
    return np.where(same, F, 0.0) * farea


def _emit(rows, cols, data, dofs_r, dofs_c, mat):
    """Append the nonzero entries of `mat` replicated over index blocks."""
    mask = mat != 0.0
    ii, jj = np.nonzero(mask)
    rows.append(dofs_r[:, ii].ravel())
    cols.append(dofs_c[:, jj].ravel())
    data.append(np.broadcast_to(mat[ii, jj], (dofs_r.shape[0], len(ii))).ravel())


def penalty_parameter(degree: int, h: float) -> float:
    return (degree + 1) * (degree + 2) / h


def assemble_operator(
    level: MeshLevel,
    kappa_on_level: np.ndarray,
    mu: float,
    degree: int,
    constrain_boundary: bool = True,
) -> SystemOperator:
    """Assemble the level operator for the given cellwise coefficient.

    With constrain_boundary the boundary-face velocity DoFs are pinned to a
    unit diagonal and their coupling columns are stored for right-hand-side
    condensation; this is how the normal-trace Dirichlet condition is
    realized for both the mu = 0 and mu > 0 models.
    """
    kappa = np.asarray(kappa_on_level, dtype=float).ravel()
    if kappa.size != level.n_cells:
        raise AssemblyError(
            f"kappa has {kappa.size} values, level has {level.n_cells} cells"
        )
    if not np.all(np.isfinite(kappa)) or np.any(kappa <= 0):
        raise AssemblyError("kappa must be strictly positive and finite")
    if mu < 0:
        raise AssemblyError("mu must be nonnegative")

    layout = DofLayout(level, degree)
    el = layout.vel_element
    press = layout.press_element
    d = level.dim
    h = level.cell_size
    vol = level.cell_volume
    sigma = penalty_parameter(degree, level.h)

    # Physical cell matrices (identical for all cells up to the kappa factor).
    mass_phys = vol * el.mass_ref
    grad_phys = vol * sum(el.grad_ref[b] / h[b] ** 2 for b in range(d))
    div_ref = divergence_moment_ref(el, press)
    div_phys = -vol * div_ref / np.array([h[c] for c in el.comp])[None, :]

    cell_v = layout.cell_velocity_dofs()
    cell_p = layout.cell_pressure_dofs()

    rows, cols, data = [], [], []
    # kappa-weighted mass (and viscous gradient) per cell
    mask = (mass_phys != 0) | (mu > 0) & (grad_phys != 0)
    ii, jj = np.nonzero(mask)
    vals = kappa[:, None] * mass_phys[ii, jj][None, :]
    if mu > 0:
        vals = vals + mu * grad_phys[ii, jj][None, :]
    rows.append(cell_v[:, ii].ravel())
    cols.append(cell_v[:, jj].ravel())
    data.append(vals.ravel())

    if mu > 0.0:
        fs = build_face_set(level)
        for a in range(d):
            farea = vol / h[a]
            sel = fs.interior_faces[:, 2] == a
            if np.any(sel):
                lo = fs.interior_faces[sel, 0]
                hi = fs.interior_faces[sel, 1]
                dofs = np.concatenate([cell_v[lo], cell_v[hi]], axis=1)
                F = _interior_face_matrix(el, a, mu, sigma, h, farea)
                _emit(rows, cols, data, dofs, dofs, F)
            for side in (0, 1):
                selb = (fs.boundary_faces[:, 1] == a) & (fs.boundary_faces[:, 2] == side)
                if not np.any(selb):
                    continue
                cellids = fs.boundary_faces[selb, 0]
                dofs = cell_v[cellids]
                Fb = _boundary_face_matrix(el, a, side, mu, sigma, h, farea)
                _emit(rows, cols, data, dofs, dofs, Fb)

    nv, npr = layout.n_velocity, layout.n_pressure
    A = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nv, nv),
    ).tocsr()

    brows, bcols, bdata = [], [], []
    _emit(brows, bcols, bdata, cell_p, cell_v, div_phys)
    B = sp.coo_matrix(
        (np.concatenate(bdata), (np.concatenate(brows), np.concatenate(bcols))),
        shape=(npr, nv),
    ).tocsr()

    boundary_dofs = layout.boundary_velocity_dofs()
    A_bc = B_bc = None
    if constrain_boundary:
        A_bc = A[:, boundary_dofs].tocsr()
        B_bc = B[:, boundary_dofs].tocsr()
        keep = np.ones(nv)
        keep[boundary_dofs] = 0.0
        pin = np.zeros(nv)
        pin[boundary_dofs] = 1.0
        D = sp.diags(keep)
        A = (D @ A @ D + sp.diags(pin)).tocsr()
        B = (B @ D).tocsr()
        A.eliminate_zeros()
        B.eliminate_zeros()

    return SystemOperator(
        A=A,
        B=B,
        layout=layout,
        mu=mu,
        sigma=sigma,
        kappa=kappa,
        pinned=constrain_boundary,
        boundary_dofs=boundary_dofs,
        A_boundary=A_bc,
        B_boundary=B_bc,
    )


def apply_operator(op: SystemOperator, x: np.ndarray) -> np.ndarray:
    """y = (A u + B^T p, B u) for x = (u, p)."""
    if x.shape != (op.n_total,):
        raise ValueError(f"expected vector of length {op.n_total}, got {x.shape}")
    return op.apply(x)


# ---------------------------------------------------------------- boundary data
@dataclass
class BoundaryData:
    """Dirichlet velocity g and volumetric force f.

    Both may be constant vectors or callables mapping point arrays of shape
    (..., d) to value arrays of the same shape.
    """

    velocity: Sequence[float] | VectorFunc = (0.0,) * 2
    force: Sequence[float] | VectorFunc | None = None

    def velocity_at(self, pts: np.ndarray) -> np.ndarray:
        return _eval_vector(self.velocity, pts)

    def force_at(self, pts: np.ndarray) -> np.ndarray | None:
        if self.force is None:
            return None
        return _eval_vector(self.force, pts)

    def velocity_is_constant(self) -> bool:
        return not callable(self.velocity)


def _eval_vector(func, pts: np.ndarray) -> np.ndarray:
    if callable(func):
        vals = np.asarray(func(pts), dtype=float)
        if vals.shape != pts.shape:
            raise ValueError("vector callable must return one value per point")
        return vals
    vals = np.asarray(func, dtype=float)
    return np.broadcast_to(vals, pts.shape)


def boundary_net_flux(layout: DofLayout, data: BoundaryData) -> float:
    """integral of g.n over the domain boundary."""
    if data.velocity_is_constant():
        return 0.0  # closed box: exact cancellation
    lvl = layout.level
    el = layout.vel_element
    fs = build_face_set(lvl)
    total = 0.0
    for a in range(lvl.dim):
        farea = lvl.cell_volume / lvl.cell_size[a]
        w = el.face_rule(a, 0).weights
        for side in (0, 1):
            sel = (fs.boundary_faces[:, 1] == a) & (fs.boundary_faces[:, 2] == side)
            if not np.any(sel):
                continue
            cells = lvl.cell_multi(fs.boundary_faces[sel, 0])
            fmult = cells.copy()
            fmult[:, a] += side
            pts = layout.face_quad_points(a, fmult)
            g = data.velocity_at(pts)[..., a]
            total += (2 * side - 1) * farea * float((g * w).sum())
    return total


def boundary_lift(layout: DofLayout, data: BoundaryData) -> np.ndarray:
    """Velocity vector with boundary-face DoFs interpolating g.n, zero elsewhere."""
    lvl = layout.level
    el = layout.vel_element
    fs = build_face_set(lvl)
    lift = np.zeros(layout.n_velocity)
    for a in range(lvl.dim):
        mw = el.face_moment_weights(a)  # (nfm, nqf)
        sel = fs.boundary_faces[:, 1] == a
        if not np.any(sel):
            continue
        cells = lvl.cell_multi(fs.boundary_faces[sel, 0])
        fmult = cells.copy()
        fmult[:, a] += fs.boundary_faces[sel, 2]
        pts = layout.face_quad_points(a, fmult)
        g = data.velocity_at(pts)[..., a]  # (Nf, nqf)
        moments = g @ mw.T  # (Nf, nfm)
        dofs = layout.face_dof_ids(a, fmult)
        lift[dofs.ravel()] = moments.ravel()
    return lift


def assemble_rhs(
    op: SystemOperator, data: BoundaryData, compatibility_tol: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side (velocity part, pressure part) for the pinned operator.

    Velocity part: (f, v) plus, for mu > 0, the boundary data terms
    2 mu sigma <g, v> - mu <grad v . n, g>, minus the condensed coupling to
    the interpolated boundary trace.  Pressure part: the condensation
    -B_bc g_bc, which integrates to <g.n, q> on boundary cells.
    """
    if not op.pinned:
        raise AssemblyError("assemble_rhs requires a boundary-constrained operator")
    layout = op.layout
    lvl = layout.level
    el = layout.vel_element
    d = lvl.dim
    h = lvl.cell_size
    vol = lvl.cell_volume

    flux = boundary_net_flux(layout, data)
    scale = float(2 * sum(vol / hs for hs in h))  # total boundary measure
    if abs(flux) > compatibility_tol * max(scale, 1.0):
        raise AssemblyError(
            f"incompatible boundary data: net flux {flux:.3e} through the boundary"
        )

    b_u = np.zeros(layout.n_velocity)
    b_p = np.zeros(layout.n_pressure)
    cell_v = layout.cell_velocity_dofs()

    if data.force is not None:
        pts, w = layout.cell_quad_points()
        f = data.force_at(pts)  # (Nc, nq, d)
        fcomp = f[:, :, el.comp]  # (Nc, nq, nu)
        contrib = vol * np.einsum("cqi,iq,q->ci", fcomp, el._cell_vals, w)
        np.add.at(b_u, cell_v, contrib)

    if op.mu > 0.0:
        fs = build_face_set(lvl)
        for a in range(d):
            farea = vol / h[a]
            w = el.face_rule(a, 0).weights
            for side in (0, 1):
                sel = (fs.boundary_faces[:, 1] == a) & (fs.boundary_faces[:, 2] == side)
                if not np.any(sel):
                    continue
                cellids = fs.boundary_faces[sel, 0]
                cells = lvl.cell_multi(cellids)
                fmult = cells.copy()
                fmult[:, a] += side
                pts = layout.face_quad_points(a, fmult)
                g = data.velocity_at(pts)  # (Nf, nqf, d)
                gcomp = g[:, :, el.comp]  # (Nf, nqf, nu)
                sgn = 2 * side - 1
                tv = el.trace_vals[(a, side)]
                nd = sgn / h[a] * el.trace_normal_derivs[(a, side)]
                contrib = farea * (
                    2.0 * op.mu * op.sigma * np.einsum("fqi,iq,q->fi", gcomp, tv, w)
                    - op.mu * np.einsum("fqi,iq,q->fi", gcomp, nd, w)
                )
                np.add.at(b_u, cell_v[cellids], contrib)

    lift = boundary_lift(layout, data)
    g_bc = lift[op.boundary_dofs]
    b_u -= op.A_boundary @ g_bc
    b_p -= op.B_boundary @ g_bc
    b_u[op.boundary_dofs] = 0.0
    return b_u, b_p


# ----------------------------------------------------------------- field tools
def enforce_mean_zero(pressure: np.ndarray, layout: DofLayout) -> np.ndarray:
    """Subtract the volume-weighted mean of the pressure field (idempotent)."""
    out = pressure.copy()
    means = out[:: layout.pressure_modes]
    out[:: layout.pressure_modes] = means - means.mean()
    return out


def compute_divergence(u: np.ndarray, layout: DofLayout) -> np.ndarray:
    """(n_cells, pressure_modes) modal Legendre coefficients of div u per cell.

    Exact for the discrete space: the divergence of a velocity field lies in
    the pressure space, so these are coefficients, not quadrature estimates.
    The first column is the cellwise mean divergence.
    """
    el = layout.vel_element
    press = layout.press_element
    h = layout.level.cell_size
    div_ref = divergence_moment_ref(el, press)
    coef = press.moment_scale[:, None] * div_ref / np.array([h[c] for c in el.comp])[None, :]
    return u[layout.cell_velocity_dofs()] @ coef.T


def interpolate_velocity(layout: DofLayout, func) -> np.ndarray:
    """Canonical interpolant: face moments plus interior moments of `func`."""
    lvl = layout.level
    el = layout.vel_element
    out = np.zeros(layout.n_velocity)
    for a in range(lvl.dim):
        mw = el.face_moment_weights(a)
        shape = lvl.faces_per_axis_shape(a)
        fmult = _face_grid_multis(shape)
        pts = layout.face_quad_points(a, fmult)
        g = _eval_vector(func, pts)[..., a]
        dofs = layout.face_dof_ids(a, fmult)
        out[dofs.ravel()] = (g @ mw.T).ravel()
    if layout.n_cell_interior:
        pts, w = layout.cell_quad_points()
        vals = _eval_vector(func, pts)
        from porousmg.elements import shifted_legendre

        rq = el.cell_rule()[0]
        idx = layout.n_face_dofs
        contribs = []
        for dof in el.dofs:
            if dof[0] != "interior":
                continue
            _, a, r, m = dof
            leg = shifted_legendre(r)(rq[:, a])
            scale = 2 * r + 1
            for t_i, t_ax in enumerate(el.transverse_axes(a)):
                leg = leg * shifted_legendre(m[t_i])(rq[:, t_ax])
                scale *= 2 * m[t_i] + 1
            contribs.append(scale * (vals[:, :, a] * (leg * w)[None, :]).sum(axis=1))
        interior = np.stack(contribs, axis=1)  # (Nc, n_cell_interior)
        out[idx:] = interior.ravel()
    return out


def project_pressure(layout: DofLayout, func) -> np.ndarray:
    """Cellwise L2 projection of a scalar function onto the pressure space."""
    pts, _ = layout.cell_quad_points()
    vals = np.asarray(func(pts))
    return layout.press_element.project_values(vals).ravel()


def velocity_cell_averages(layout: DofLayout, u: np.ndarray) -> np.ndarray:
    """(n_cells, d) cellwise mean of the velocity field."""
    el = layout.vel_element
    loc = u[layout.cell_velocity_dofs()]  # (Nc, nu)
    out = np.zeros((layout.level.n_cells, layout.level.dim))
    for a in range(layout.level.dim):
        selcomp = el.comp == a
        out[:, a] = loc[:, selcomp] @ el.int_phi[selcomp]
    return out


def velocity_at_cell_quadrature(
    layout: DofLayout, u: np.ndarray, n: int | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Velocity samples (n_cells, nq, d) plus physical points and ref weights."""
    el = layout.vel_element
    pts_ref, w = el.cell_rule(n)
    vals = el.eval_values(pts_ref)  # (nu, nq)
    loc = u[layout.cell_velocity_dofs()]
    out = np.zeros((layout.level.n_cells, len(w), layout.level.dim))
    for a in range(layout.level.dim):
        selcomp = el.comp == a
        out[:, :, a] = loc[:, selcomp] @ vals[selcomp]
    phys, _ = layout.cell_quad_points(n)
    return out, phys, w


def l2_velocity_error(layout: DofLayout, u: np.ndarray, exact, n: int | None = None) -> float:
    """L2 norm of (u_h - exact) via tensor Gauss quadrature."""
    nq = n or (layout.degree + 3)
    vals, pts, w = velocity_at_cell_quadrature(layout, u, nq)
    diff = vals - _eval_vector(exact, pts)
    return float(np.sqrt(layout.level.cell_volume * ((diff**2).sum(axis=2) * w).sum()))


def broken_h1_norm(layout: DofLayout, u: np.ndarray) -> float:
    """DG-style H1 norm: cell gradients, 1/h-weighted jumps, and the L2 part."""
    lvl = layout.level
    el = layout.vel_element
    d, h, vol = lvl.dim, lvl.cell_size, lvl.cell_volume
    loc = u[layout.cell_velocity_dofs()]
    grad_phys = vol * sum(el.grad_ref[b] / h[b] ** 2 for b in range(d))
    mass_phys = vol * el.mass_ref
    total = np.einsum("ci,ij,cj->", loc, grad_phys + mass_phys, loc)
    fs = build_face_set(lvl)
    for a in range(d):
        farea = vol / h[a]
        w = el.face_rule(a, 0).weights
        for c in range(d):
            m = el.comp == c
            sel = fs.interior_faces[:, 2] == a
            if np.any(sel):
                lo, hi = fs.interior_faces[sel, 0], fs.interior_faces[sel, 1]
                jumps = (
                    loc[lo][:, m] @ el.trace_vals[(a, 1)][m]
                    - loc[hi][:, m] @ el.trace_vals[(a, 0)][m]
                )
                total += farea / lvl.h * float(((jumps**2) * w).sum())
            for side in (0, 1):
                selb = (fs.boundary_faces[:, 1] == a) & (fs.boundary_faces[:, 2] == side)
                if not np.any(selb):
                    continue
                tr = loc[fs.boundary_faces[selb, 0]][:, m] @ el.trace_vals[(a, side)][m]
                total += farea / lvl.h * float(((tr**2) * w).sum())
    return float(np.sqrt(total))

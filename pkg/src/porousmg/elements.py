"""Reference-cell machinery for tensor Raviart-Thomas / Legendre element pairs.

Everything lives on the unit reference cell [0,1]^d; physical cells are
axis-aligned scalings, so values are scale-free and derivatives pick up
1/h factors per axis.  Velocity shape functions have a single nonzero
component: component a is a tensor polynomial of degree k+1 along axis a
and degree k along the others.  Degrees of freedom:

  * face (a, side, m): transverse Legendre moments of the normal component,
    normalized so the m=0 moment is the face average;
  * interior (a, r, m) for k >= 1: cell moments of component a against
    Legendre polynomials of degree r < k along a and m transversally.

Pressure is the discontinuous tensor Legendre (modal) basis of degree k per
axis; the first coefficient of a cell is its mean value.

Supported: k in {0, 1} for d = 2 and k = 0 for d = 3.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import Legendre, leggauss


def gauss_rule_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0,1]."""
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def tensor_rule(n: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on [0,1]^dim; points (nq, dim), weights (nq,)."""
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = gauss_rule_01(n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrid = np.meshgrid(*([w] * dim), indexing="ij")
    rev = tuple(range(dim - 1, -1, -1))
    pts = np.stack([g.transpose(rev).ravel() for g in grids], axis=-1)
    wts = np.prod(np.stack([g.transpose(rev).ravel() for g in wgrid], axis=-1), axis=-1)
    return pts, wts


def shifted_legendre(m: int) -> Polynomial:
    """Legendre polynomial mapped to [0,1] with P(1) = 1."""
    return Legendre.basis(m, domain=[0.0, 1.0]).convert(kind=Polynomial)


def _multi_indices(limits: tuple[int, ...]) -> np.ndarray:
    """All multi-indices below the given exclusive limits, first axis fastest."""
    if not limits:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.meshgrid(*[np.arange(n) for n in limits], indexing="ij")
    d = len(limits)
    return np.stack(
        [g.transpose(*range(d - 1, -1, -1)).ravel() for g in grids], axis=-1
    ).astype(np.int64)


class TensorMonomials:
    """Monomial tensor basis x^e with per-axis degree limits."""

    def __init__(self, degrees: tuple[int, ...]):
        self.degrees = degrees
        self.expo = _multi_indices(tuple(p + 1 for p in degrees))
        self.n = len(self.expo)

    def eval(self, pts: np.ndarray) -> np.ndarray:
        """(n, npts) monomial values at pts (npts, d)."""
        return np.prod(pts[None, :, :] ** self.expo[:, None, :], axis=-1)

    def eval_deriv(self, pts: np.ndarray, axis: int) -> np.ndarray:
        e = self.expo.copy()
        coef = e[:, axis].astype(float)
        e[:, axis] = np.maximum(e[:, axis] - 1, 0)
        vals = np.prod(pts[None, :, :] ** e[:, None, :], axis=-1)
        return coef[:, None] * vals


def _legendre_values(max_deg: int, x: np.ndarray) -> np.ndarray:
    """(max_deg+1, len(x)) shifted Legendre values."""
    return np.stack([shifted_legendre(m)(x) for m in range(max_deg + 1)])


@dataclass(frozen=True)
class FaceRule:
    """Quadrature on a reference face (axis, side) expressed in cell coords."""

    axis: int
    side: int
    cell_points: np.ndarray  # (nqf, d)
    transverse_points: np.ndarray  # (nqf, d-1)
    weights: np.ndarray  # (nqf,)


class VelocityElement:
    """Reference H(div) tensor element of degree k in d dimensions."""

    def __init__(self, k: int, d: int):
        if k not in (0, 1):
            raise ValueError("velocity degree must be 0 or 1")
        if d not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if k == 1 and d == 3:
            raise ValueError("degree 1 is supported in 2D only")
        self.k = k
        self.d = d
        self.n_face_moments = (k + 1) ** (d - 1)
        self.n_interior_per_comp = k * (k + 1) ** (d - 1)
        self.n_dofs = 2 * d * self.n_face_moments + d * self.n_interior_per_comp
        self.nq1 = k + 2
        self._rule_cache: dict = {}

        self._build_dof_table()
        self._build_shapes()
        self._build_reference_arrays()

    # ----- dof enumeration ---------------------------------------------------
    def _build_dof_table(self):
        k, d = self.k, self.d
        face_dofs = []
        # Cell-local order: per axis the low face then the high face, each with
        # its transverse moments; interior moments follow after all faces.
        for a in range(d):
            tmoms = _multi_indices((k + 1,) * (d - 1))
            for side in (0, 1):
                for m in tmoms:
                    face_dofs.append(("face", a, side, tuple(m)))
        interior = []
        for a in range(d):
            tmoms = _multi_indices((k + 1,) * (d - 1))
            for r in range(k):
                for m in tmoms:
                    interior.append(("interior", a, r, tuple(m)))
        self.dofs = face_dofs + interior
        self.comp = np.array([dof[1] for dof in self.dofs], dtype=np.int64)
        self.local_face_slice = {}
        for a in range(d):
            for side in (0, 1):
                start = (2 * a + side) * self.n_face_moments
                self.local_face_slice[(a, side)] = slice(start, start + self.n_face_moments)

    def transverse_axes(self, axis: int) -> list[int]:
        return [t for t in range(self.d) if t != axis]

    # ----- shape construction -------------------------------------------------
    def _dof_apply_monos(self, a: int, monos: TensorMonomials) -> np.ndarray:
        """Matrix of all component-a dof functionals applied to the monomials."""
        rows = []
        cq, cw = tensor_rule(self.nq1, self.d)
        mono_cell = monos.eval(cq)
        for dof in self.dofs:
            if dof[1] != a:
                continue
            if dof[0] == "face":
                _, _, side, m = dof
                rule = self.face_rule(a, side)
                vals = monos.eval(rule.cell_points)
                leg = np.ones(len(rule.weights))
                scale = 1.0
                for t_i, t_ax in enumerate(self.transverse_axes(a)):
                    leg = leg * shifted_legendre(m[t_i])(rule.transverse_points[:, t_i])
                    scale *= 2 * m[t_i] + 1
                rows.append(scale * (vals * (leg * rule.weights)[None, :]).sum(axis=1))
            else:
                _, _, r, m = dof
                leg = shifted_legendre(r)(cq[:, a])
                scale = 2 * r + 1
                for t_i, t_ax in enumerate(self.transverse_axes(a)):
                    leg = leg * shifted_legendre(m[t_i])(cq[:, t_ax])
                    scale *= 2 * m[t_i] + 1
                rows.append(scale * (mono_cell * (leg * cw)[None, :]).sum(axis=1))
        return np.array(rows)

    def _build_shapes(self):
        k, d = self.k, self.d
        self._monos = []
        self._coeffs = []
        for a in range(d):
            degrees = tuple(k + 1 if ax == a else k for ax in range(d))
            monos = TensorMonomials(degrees)
            V = self._dof_apply_monos(a, monos)
            if V.shape[0] != V.shape[1]:
                raise RuntimeError("dof count does not match polynomial dimension")
            self._monos.append(monos)
            self._coeffs.append(np.linalg.solve(V, np.eye(V.shape[0])).T)

    def _comp_local_index(self) -> np.ndarray:
        """Position of each dof within its component's shape list."""
        out = np.zeros(self.n_dofs, dtype=np.int64)
        counters = [0] * self.d
        for i, dof in enumerate(self.dofs):
            a = dof[1]
            out[i] = counters[a]
            counters[a] += 1
        return out

    def eval_values(self, pts: np.ndarray) -> np.ndarray:
        """(n_dofs, npts) values of each shape's own (single) component."""
        per_comp = [self._coeffs[a] @ self._monos[a].eval(pts) for a in range(self.d)]
        local = self._comp_local_index()
        return np.stack([per_comp[self.comp[i]][local[i]] for i in range(self.n_dofs)])

    def eval_derivs(self, pts: np.ndarray, axis: int) -> np.ndarray:
        per_comp = [self._coeffs[a] @ self._monos[a].eval_deriv(pts, axis) for a in range(self.d)]
        local = self._comp_local_index()
        return np.stack([per_comp[self.comp[i]][local[i]] for i in range(self.n_dofs)])

    # ----- quadrature ----------------------------------------------------------
    def cell_rule(self, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        key = ("cell", n or self.nq1)
        if key not in self._rule_cache:
            self._rule_cache[key] = tensor_rule(n or self.nq1, self.d)
        return self._rule_cache[key]

    def face_rule(self, axis: int, side: int, n: int | None = None) -> FaceRule:
        key = ("face", axis, side, n or self.nq1)
        if key in self._rule_cache:
            return self._rule_cache[key]
        tpts, tw = tensor_rule(n or self.nq1, self.d - 1)
        nqf = len(tw)
        cpts = np.empty((nqf, self.d))
        cpts[:, axis] = float(side)
        for t_i, t_ax in enumerate(self.transverse_axes(axis)):
            cpts[:, t_ax] = tpts[:, t_i]
        rule = FaceRule(axis=axis, side=side, cell_points=cpts, transverse_points=tpts, weights=tw)
        self._rule_cache[key] = rule
        return rule

    # ----- reference matrices ----------------------------------------------------
    def _build_reference_arrays(self):
        d = self.d
        cq, cw = self.cell_rule()
        vals = self.eval_values(cq)  # (nu, nq)
        self._cell_vals = vals
        self._cell_w = cw
        self._cell_pts = cq
        same = self.comp[:, None] == self.comp[None, :]

        self.mass_ref = np.where(same, (vals * cw) @ vals.T, 0.0)
        self.grad_ref = []
        derivs = [self.eval_derivs(cq, b) for b in range(d)]
        for b in range(d):
            g = derivs[b]
            self.grad_ref.append(np.where(same, (g * cw) @ g.T, 0.0))
        # Divergence of shape i is the a_i-derivative of its component.
        self.div_at_quad = np.stack([derivs[self.comp[i]][i] for i in range(self.n_dofs)])
        self.int_phi = (vals * cw).sum(axis=1)  # \int of each shape's component

        # Traces per (axis, side): values and axis-derivatives at face quad nodes.
        self.trace_vals = {}
        self.trace_normal_derivs = {}
        for a in range(d):
            for side in (0, 1):
                rule = self.face_rule(a, side)
                self.trace_vals[(a, side)] = self.eval_values(rule.cell_points)
                self.trace_normal_derivs[(a, side)] = self.eval_derivs(rule.cell_points, a)

    def face_moment_weights(self, axis: int) -> np.ndarray:
        """(n_face_moments, nqf) weights turning face-quad samples into moments."""
        rule = self.face_rule(axis, 0)
        tmoms = _multi_indices((self.k + 1,) * (self.d - 1))
        out = np.empty((len(tmoms), len(rule.weights)))
        for i, m in enumerate(tmoms):
            leg = np.ones(len(rule.weights))
            scale = 1.0
            for t_i in range(self.d - 1):
                leg = leg * shifted_legendre(int(m[t_i]))(rule.transverse_points[:, t_i])
                scale *= 2 * int(m[t_i]) + 1
            out[i] = scale * leg * rule.weights
        return out


class PressureElement:
    """Modal tensor Legendre basis of degree k per axis on the reference cell."""

    def __init__(self, k: int, d: int):
        self.k = k
        self.d = d
        self.modes = _multi_indices((k + 1,) * d)
        self.n_dofs = len(self.modes)
        self.nq1 = k + 2
        cq, cw = tensor_rule(self.nq1, d)
        self._cell_pts, self._cell_w = cq, cw
        self.vals_at_quad = self.eval_values(cq)
        # \int P~_m^2 over the reference cell.
        self.mass_diag_ref = np.array(
            [np.prod([1.0 / (2 * int(mi) + 1) for mi in m]) for m in self.modes]
        )
        self.moment_scale = 1.0 / self.mass_diag_ref

    def eval_values(self, pts: np.ndarray) -> np.ndarray:
        legs = [_legendre_values(self.k, pts[:, a]) for a in range(self.d)]
        out = np.ones((self.n_dofs, len(pts)))
        for i, m in enumerate(self.modes):
            for a in range(self.d):
                out[i] *= legs[a][int(m[a])]
        return out

    def project_values(self, vals_at_quad: np.ndarray) -> np.ndarray:
        """Modal coefficients of the L2 projection from reference-quad samples.

        vals_at_quad has shape (..., nq); returns (..., n_dofs).
        """
        wv = vals_at_quad * self._cell_w
        return wv @ self.vals_at_quad.T * self.moment_scale


@lru_cache(maxsize=None)
def element_pair(k: int, d: int) -> tuple[VelocityElement, PressureElement]:
    return VelocityElement(k, d), PressureElement(k, d)


def divergence_moment_ref(vel: VelocityElement, press: PressureElement) -> np.ndarray:
    """(np, nu) reference moments \int P~_m d_a(phi_i); physical scaling 1/h_a."""
    return (press.vals_at_quad * vel._cell_w) @ vel.div_at_quad.T

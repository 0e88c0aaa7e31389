"""Problem orchestration: compose mesh, fields, assembly, preconditioner,
and GMRES into one solve, plus the benchmark sweep runner.

Defaults follow the benchmark setups: boundary velocity (1,0[,0]), zero
force, viscosity 1e-2 for the viscous model, two smoothing steps on the
finest level with the variable cycle, and a 1e-6 relative residual target.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Sequence

import numpy as np

from porousmg.discretization import (
    BoundaryData,
    DofLayout,
    SystemOperator,
    assemble_operator,
    assemble_rhs,
    boundary_lift,
    broken_h1_norm,
    compute_divergence,
    enforce_mean_zero,
)
from porousmg.fields import (
    FieldLevels,
    PermeabilityField,
    coarsen_levels,
    generate_field,
    load_field,
    resample_to_grid,
)
from porousmg.krylov import SolveReport, gmres
from porousmg.mesh import Box, MeshHierarchy, build_hierarchy, vertex_patches
from porousmg.multigrid import VCyclePreconditioner
from porousmg.smoother import build_patch_solvers
from porousmg.transfer import build_transfer


class ProblemSpecError(ValueError):
    pass


DEFAULT_BRINKMAN_MU = 1e-2


@dataclass
class ProblemSpec:
    """Complete description of one solve."""

    model: str = "darcy"
    mu: float | None = None
    degree: int = 0
    dim: int = 2
    grid: int | tuple = 128
    coarse: int | tuple | None = None
    domain: Box | None = None
    field_kind: str = "constant"
    field_path: str | None = None
    field_format: str = "raw_binary"
    field_dims: tuple | None = None
    field: PermeabilityField | None = None
    contrast: float = 1.0
    kappa_high: float = 1.0
    kappa_low: float | None = None
    reverse_roles: bool = False
    seed: int = 0
    field_params: dict = dc_field(default_factory=dict)
    velocity_bc: Sequence[float] | Callable = None
    force: Sequence[float] | Callable | None = None
    tol: float = 1e-6
    max_iter: int = 200
    m_finest: int = 2
    variable_cycle: bool = True
    coarse_cap: int = 50_000
    flexible: bool = False

    def resolved_mu(self) -> float:
        if self.model == "darcy":
            if self.mu not in (None, 0, 0.0):
                raise ProblemSpecError("the Darcy model requires mu = 0")
            return 0.0
        if self.model == "brinkman":
            mu = DEFAULT_BRINKMAN_MU if self.mu is None else float(self.mu)
            if mu <= 0:
                raise ProblemSpecError("the Brinkman model requires mu > 0")
            return mu
        raise ProblemSpecError(f"unknown model {self.model!r}")

    def grid_dims(self) -> tuple[int, ...]:
        g = self.grid
        if isinstance(g, int):
            g = (g,) * self.dim
        g = tuple(int(n) for n in g)
        if len(g) != self.dim:
            raise ProblemSpecError("grid does not match the dimension")
        return g

    def coarse_dims(self) -> tuple[int, ...]:
        grid = self.grid_dims()
        if self.coarse is not None:
            c = self.coarse
            if isinstance(c, int):
                c = (c,) * self.dim
            c = tuple(int(n) for n in c)
            ratios = [g / cc for g, cc in zip(grid, c)]
            r = ratios[0]
            if any(abs(q - r) > 0 for q in ratios) or r < 1 or not math.log2(r).is_integer():
                raise ProblemSpecError(
                    f"grid {grid} is not a 2^J refinement of the coarse grid {c}"
                )
            return c
        c = list(grid)
        while all(n % 2 == 0 and n >= 4 for n in c):
            c = [n // 2 for n in c]
        if any(n < 2 for n in c):
            raise ProblemSpecError("each axis needs at least 2 cells")
        return tuple(c)

    def num_refinements(self) -> int:
        return int(round(math.log2(self.grid_dims()[0] / self.coarse_dims()[0])))

    def boundary_velocity(self):
        if self.velocity_bc is None:
            return (1.0,) + (0.0,) * (self.dim - 1)
        return self.velocity_bc

    def kappa_values(self) -> tuple[float, float]:
        high = float(self.kappa_high)
        low = float(self.kappa_low) if self.kappa_low is not None else high / float(self.contrast)
        if self.reverse_roles:
            high, low = low, high
        return high, low


def build_field(spec: ProblemSpec) -> PermeabilityField:
    """The finest-level kappa field described by the spec."""
    grid = spec.grid_dims()
    if spec.field is not None:
        fld = spec.field
    elif spec.field_kind == "file":
        if spec.field_path is None:
            raise ProblemSpecError("field_kind 'file' requires field_path")
        fld = load_field(spec.field_path, fmt=spec.field_format, dims=spec.field_dims)
    else:
        dims = spec.field_dims or grid
        high, low = spec.kappa_values()
        # Generators define features as the kappa_low phase; a reversed spec
        # swaps the two values.
        kh, kl = (max(high, low), min(high, low))
        fld = generate_field(
            spec.field_kind, dims, kh, kl, seed=spec.seed, **spec.field_params
        )
        if high < low:  # reversed: features get the larger value
            vals = np.where(fld.values == kh, kl, kh)
            fld = PermeabilityField(fld.dims, vals, provenance=fld.provenance)
    return resample_to_grid(fld, grid)


@dataclass
class AssembledProblem:
    """Everything needed to run (and introspect) one solve."""

    spec: ProblemSpec
    hierarchy: MeshHierarchy
    field: PermeabilityField
    field_levels: FieldLevels
    operators: list[SystemOperator]
    preconditioner: VCyclePreconditioner
    boundary: BoundaryData
    rhs: np.ndarray
    lift: np.ndarray
    times: dict

    @property
    def operator(self) -> SystemOperator:
        return self.operators[-1]

    @property
    def layout(self) -> DofLayout:
        return self.operator.layout


def build_problem(spec: ProblemSpec) -> AssembledProblem:
    mu = spec.resolved_mu()
    t0 = time.perf_counter()
    hier = build_hierarchy(spec.dim, spec.coarse_dims(), spec.num_refinements(), spec.domain)
    fld = build_field(spec)
    levels = coarsen_levels(fld, hier)
    ops = [
        assemble_operator(hier.levels[j], levels[j], mu, spec.degree)
        for j in range(hier.num_levels)
    ]
    t1 = time.perf_counter()
    transfers = [build_transfer(hier, j, spec.degree) for j in range(hier.num_levels - 1)]
    smoothers = [None] + [
        build_patch_solvers(ops[j], vertex_patches(hier, j))
        for j in range(1, hier.num_levels)
    ]
    precond = VCyclePreconditioner(
        ops,
        transfers,
        smoothers,
        m_finest=spec.m_finest,
        variable=spec.variable_cycle,
        coarse_cap=spec.coarse_cap,
    )
    t2 = time.perf_counter()
    data = BoundaryData(velocity=spec.boundary_velocity(), force=spec.force)
    bu, bp = assemble_rhs(ops[-1], data)
    lift = boundary_lift(ops[-1].layout, data)
    times = {"assembly": t1 - t0, "setup": t2 - t1}
    return AssembledProblem(
        spec=spec,
        hierarchy=hier,
        field=fld,
        field_levels=levels,
        operators=ops,
        preconditioner=precond,
        boundary=data,
        rhs=np.concatenate([bu, bp]),
        lift=lift,
        times=times,
    )


def solve_assembled(prob: AssembledProblem) -> tuple[np.ndarray, np.ndarray, SolveReport]:
    spec = prob.spec
    op = prob.operator
    x, report = gmres(
        op.apply,
        prob.preconditioner.apply,
        prob.rhs,
        tol=spec.tol,
        max_iter=spec.max_iter,
        flexible=spec.flexible,
    )
    u, p = op.split(x)
    u = u + prob.lift
    p = enforce_mean_zero(p, op.layout)
    report.wall_time.update(prob.times)
    report.config = {
        "model": spec.model,
        "mu": spec.resolved_mu(),
        "degree": spec.degree,
        "dim": spec.dim,
        "grid": spec.grid_dims(),
        "coarse": spec.coarse_dims(),
        "levels": prob.hierarchy.num_levels,
        "field_kind": spec.field_kind if spec.field is None else "explicit",
        "seed": spec.seed,
        "contrast": float(prob.field.values.max() / prob.field.values.min()),
        "reverse_roles": spec.reverse_roles,
        "tol": spec.tol,
        "cycle": "variable" if spec.variable_cycle else "standard",
        "m_finest": spec.m_finest,
        "schedule": list(prob.preconditioner.schedule),
        "boundary_velocity": (
            tuple(spec.boundary_velocity())
            if not callable(spec.boundary_velocity())
            else "callable"
        ),
        "n_velocity": op.n_velocity,
        "n_pressure": op.n_pressure,
    }
    return u, p, report


def solve_problem(spec: ProblemSpec) -> tuple[np.ndarray, np.ndarray, SolveReport]:
    """Solve the problem described by the spec on its finest level.

    Returns velocity DoFs (boundary data re-attached), mean-zero pressure
    DoFs, and the solve report.
    """
    return solve_assembled(build_problem(spec))


def solution_difference(layout: DofLayout, u1: np.ndarray, u2: np.ndarray) -> float:
    """Relative broken-H1 distance between two velocity fields."""
    denom = max(broken_h1_norm(layout, u1), broken_h1_norm(layout, u2), 1e-300)
    return broken_h1_norm(layout, u1 - u2) / denom


# ----------------------------------------------------------------------- sweeps
@dataclass
class SweepTable:
    """Iteration counts over grids x contrasts (entries 'DNF' on failure)."""

    grids: list
    contrasts: list[float]
    degrees: list[int]
    counts: list[list]  # rows: grids; cols: degree-major then contrast

    def column_labels(self) -> list[str]:
        labels = []
        for k in self.degrees:
            for c in self.contrasts:
                name = f"contrast={c:g}"
                if len(self.degrees) > 1:
                    name = f"degree={k},{name}"
                labels.append(name)
        return labels


def _sweep_entry(args):
    spec, grid, contrast_value, degree = args
    entry_spec = replace(
        spec, grid=grid, contrast=contrast_value, degree=degree, field_dims=spec.field_dims
    )
    try:
        _, _, report = solve_problem(entry_spec)
        return report.iterations if report.converged else "DNF"
    except Exception:
        return "DNF"


def run_sweep(
    spec: ProblemSpec,
    grids: Sequence,
    contrasts: Sequence[float],
    degrees: Sequence[int] | None = None,
    jobs: int = 1,
) -> SweepTable:
    """One solve per (grid, contrast[, degree]); failures record 'DNF'."""
    degrees = list(degrees) if degrees else [spec.degree]
    tasks = [
        (spec, g, c, k)
        for g in grids
        for k in degrees
        for c in contrasts
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            flat = list(pool.map(_sweep_entry, tasks))
    else:
        flat = [_sweep_entry(t) for t in tasks]
    per_row = len(degrees) * len(contrasts)
    counts = [flat[i * per_row : (i + 1) * per_row] for i in range(len(grids))]
    return SweepTable(
        grids=list(grids), contrasts=list(contrasts), degrees=degrees, counts=counts
    )

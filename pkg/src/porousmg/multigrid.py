"""Variable V-cycle preconditioner over the level hierarchy.

The cycle runs m(j) symmetric patch sweeps before and after the coarse-grid
correction, with the variable schedule m(j) = m(J) * 2^(J-j) doubling the
work on every coarser level (the standard cycle keeps m(j) = m(J)).  Level 0
is solved directly from a sparse factorization of the saddle system bordered
with the global zero-mean pressure constraint.  Every application performs
the same sweeps in the same order, so the preconditioner is a fixed linear
operator and plain (non-flexible) GMRES applies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from porousmg.discretization import SystemOperator
from porousmg.smoother import SchwarzSmoother
from porousmg.transfer import TransferPair


class CoarseSolveError(RuntimeError):
    pass


@dataclass
class CoarseSolver:
    """Direct factorization of the bordered level-0 saddle system."""

    lu: spla.SuperLU
    n: int
    bordered: bool

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.bordered:
            z = self.lu.solve(np.append(b, 0.0))
            return z[:-1]
        return self.lu.solve(b)


def factorize_coarse(
    op: SystemOperator, cap: int = 50_000, bordered: bool = True
) -> CoarseSolver:
    """Factorize the coarsest operator (bordered by the pressure-mean row).

    Without the border the saddle system carries the constant-pressure null
    vector and the factorization is rejected.
    """
    n = op.n_total
    if n > cap:
        raise CoarseSolveError(
            f"coarsest level has {n} unknowns (cap {cap}); "
            "add refinement levels so the coarse grid is smaller"
        )
    S = op.combined()
    if bordered:
        w = np.concatenate(
            [np.zeros(op.n_velocity), op.layout.pressure_mean_weights()]
        )
        wcol = sp.csr_matrix(w.reshape(-1, 1))
        K = sp.bmat([[S, wcol], [wcol.T, None]], format="csc")
    else:
        K = S.tocsc()
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:  # exactly singular
        raise CoarseSolveError(f"coarse factorization failed: {exc}") from exc
    udiag = np.abs(lu.U.diagonal())
    if udiag.min() < 1e-12 * max(udiag.max(), 1.0):
        raise CoarseSolveError(
            "coarse system is numerically singular; "
            "the zero-mean pressure constraint is missing or the data is degenerate"
        )
    return CoarseSolver(lu=lu, n=n, bordered=bordered)


@dataclass
class CycleRecorder:
    """Counts smoothing sweeps per level and phase for one application."""

    pre: dict = field(default_factory=dict)
    post: dict = field(default_factory=dict)
    coarse_solves: int = 0

    def reset(self) -> None:
        self.pre.clear()
        self.post.clear()
        self.coarse_solves = 0


class VCyclePreconditioner:
    """The multilevel preconditioner built from operators, smoothers, transfers.

    operators[j], smoothers[j] (j >= 1), and transfers[j] (level j to j+1)
    must share the hierarchy.  With a single level the application reduces
    to the direct coarse solve.
    """

    def __init__(
        self,
        operators: list[SystemOperator],
        transfers: list[TransferPair],
        smoothers: list[SchwarzSmoother | None],
        m_finest: int = 2,
        variable: bool = True,
        coarse_cap: int = 50_000,
    ):
        J = len(operators) - 1
        if len(transfers) != J or len(smoothers) != J + 1:
            raise ValueError("operators, transfers, and smoothers sizes do not match")
        if m_finest < 1:
            raise ValueError("need at least one smoothing step on the finest level")
        self.operators = operators
        self.transfers = transfers
        self.smoothers = smoothers
        self.finest_level = J
        self.variable = variable
        self.m_finest = m_finest
        self.schedule = [
            m_finest * 2 ** (J - j) if variable else m_finest for j in range(J + 1)
        ]
        self.coarse = factorize_coarse(operators[0], cap=coarse_cap)
        self.recorder: CycleRecorder | None = None

    @property
    def n(self) -> int:
        return self.operators[-1].n_total

    def apply(self, b: np.ndarray) -> np.ndarray:
        if b.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}")
        return self._cycle(self.finest_level, b)

    def _cycle(self, j: int, b: np.ndarray) -> np.ndarray:
        if j == 0:
            if self.recorder is not None:
                self.recorder.coarse_solves += 1
            return self.coarse.solve(b)
        op = self.operators[j]
        sm = self.smoothers[j]
        m = self.schedule[j]
        x = np.zeros_like(b)
        for _ in range(m):
            sm.apply_symmetric(x, b)
        if self.recorder is not None:
            self.recorder.pre[j] = self.recorder.pre.get(j, 0) + m
        pair = self.transfers[j - 1]
        r = b - op.apply(x)
        x += pair.prolong(self._cycle(j - 1, pair.restrict_functional(r)))
        for _ in range(m):
            sm.apply_symmetric(x, b)
        if self.recorder is not None:
            self.recorder.post[j] = self.recorder.post.get(j, 0) + m
        return x

    def __call__(self, b: np.ndarray) -> np.ndarray:
        return self.apply(b)


def apply_vcycle(preconditioner: VCyclePreconditioner, level: int, rhs: np.ndarray) -> np.ndarray:
    """Run the cycle starting at the given level (level 0 is the direct solve)."""
    if not 0 <= level <= preconditioner.finest_level:
        raise ValueError(f"level {level} out of range")
    expected = preconditioner.operators[level].n_total
    if rhs.shape != (expected,):
        raise ValueError(f"expected vector of length {expected}")
    return preconditioner._cycle(level, rhs)

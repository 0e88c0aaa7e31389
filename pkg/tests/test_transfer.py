import numpy as np
import pytest
import scipy.linalg as sla

from porousmg.discretization import assemble_operator, compute_divergence
from porousmg.mesh import build_hierarchy
from porousmg.transfer import build_transfer, restrict_residual

CASES = [(0, 2), (1, 2), (0, 3)]


@pytest.mark.parametrize("degree,dim", CASES)
def test_project_prolong_identity(degree, dim):
    hier = build_hierarchy(dim, (2,) * dim, 2)
    rng = np.random.default_rng(11)
    for j in range(2):
        pair = build_transfer(hier, j, degree)
        xc = rng.standard_normal(pair.coarse.n_total)
        assert np.abs(pair.project(pair.prolong(xc)) - xc).max() < 1e-12


@pytest.mark.parametrize("degree,dim", CASES)
def test_embedding_preserves_l2_norm(degree, dim):
    hier = build_hierarchy(dim, (2,) * dim, 1)
    pair = build_transfer(hier, 0, degree)
    rng = np.random.default_rng(5)
    u = rng.standard_normal(pair.coarse.n_velocity)
    Mf = pair._velocity_mass(pair.fine)
    Mc = pair._velocity_mass(pair.coarse)
    uf = pair.P_u @ u
    assert abs(uf @ (Mf @ uf) - u @ (Mc @ u)) < 1e-12 * max(1.0, abs(u @ (Mc @ u)))


def test_pressure_constant_embedding():
    hier = build_hierarchy(2, (2, 2), 1)
    pair = build_transfer(hier, 0, 0)
    pc = np.full(pair.coarse.n_pressure, 3.0)
    pf = pair.P_p @ pc
    assert np.allclose(pf, 3.0)


@pytest.mark.parametrize("degree,dim", CASES)
def test_pressure_mean_preserved(degree, dim):
    hier = build_hierarchy(dim, (2,) * dim, 1)
    pair = build_transfer(hier, 0, degree)
    rng = np.random.default_rng(9)
    pc = rng.standard_normal(pair.coarse.n_pressure)
    wc = pair.coarse.pressure_mean_weights()
    wf = pair.fine.pressure_mean_weights()
    assert abs(wf @ (pair.P_p @ pc) - wc @ pc) < 1e-12


def test_rt0_face_stencil_values():
    # A coarse interior x-face dof prolongs with unit flux onto its two
    # coincident subfaces and 1/2 onto the mid faces of both parent cells.
    hier = build_hierarchy(2, (2, 2), 1)
    pair = build_transfer(hier, 0, 0)
    fl = pair.fine
    cd = pair.coarse.face_dof_ids(0, np.array([[1, 0]]))[0, 0]
    col = pair.P_u[:, cd].toarray().ravel()
    for fm in ([2, 0], [2, 1]):
        assert col[fl.face_dof_ids(0, np.array([fm]))[0, 0]] == 1.0
    for fm in ([1, 0], [1, 1], [3, 0], [3, 1]):
        assert col[fl.face_dof_ids(0, np.array([fm]))[0, 0]] == 0.5
    # No spill into y-faces.
    ystart = fl.level.face_offsets[1] * fl.n_face_moments
    assert np.allclose(col[ystart:], 0.0)


def test_galerkin_identity_constant_coefficients():
    # Rediscretized coarse operators coincide with the Galerkin product when
    # the coefficient is constant (mu = 0, lowest order).
    hier = build_hierarchy(2, (4, 4), 1)
    pair = build_transfer(hier, 0, 0)
    opc = assemble_operator(hier.levels[0], np.ones(16), 0.0, 0, constrain_boundary=False)
    opf = assemble_operator(hier.levels[1], np.ones(64), 0.0, 0, constrain_boundary=False)
    assert abs(pair.P_u.T @ opf.A @ pair.P_u - opc.A).max() < 1e-12
    assert abs(pair.P_p.T @ opf.B @ pair.P_u - opc.B).max() < 1e-12


def test_restrict_residual_is_transpose():
    hier = build_hierarchy(2, (4, 4), 1)
    pair = build_transfer(hier, 0, 0)
    opf = assemble_operator(hier.levels[1], np.ones(64), 0.0, 0, constrain_boundary=False)
    opc = assemble_operator(hier.levels[0], np.ones(16), 0.0, 0, constrain_boundary=False)
    rng = np.random.default_rng(1)
    xc = rng.standard_normal(pair.coarse.n_total)
    rf = np.concatenate(
        [
            opf.A @ (pair.P_u @ xc[: pair.coarse.n_velocity])
            + opf.B.T @ (pair.P_p @ xc[pair.coarse.n_velocity :]),
            opf.B @ (pair.P_u @ xc[: pair.coarse.n_velocity]),
        ]
    )
    rc = restrict_residual(pair, rf)
    assert np.abs(rc - opc.apply(xc)).max() < 1e-11
    # zero and linearity
    assert np.allclose(restrict_residual(pair, np.zeros(pair.fine.n_total)), 0.0)
    a = rng.standard_normal(pair.fine.n_total)
    b = rng.standard_normal(pair.fine.n_total)
    lhs = restrict_residual(pair, 2.0 * a - b)
    rhs = 2.0 * restrict_residual(pair, a) - restrict_residual(pair, b)
    assert np.abs(lhs - rhs).max() < 1e-12
    with pytest.raises(ValueError):
        restrict_residual(pair, np.zeros(3))


@pytest.mark.parametrize("degree,dim", CASES)
def test_cochain_divergence_free_preserved(degree, dim):
    hier = build_hierarchy(dim, (2,) * dim, 1)
    pair = build_transfer(hier, 0, degree)
    opc = assemble_operator(
        hier.levels[0], np.ones(hier.levels[0].n_cells), 0.0, degree, constrain_boundary=False
    )
    basis = sla.null_space(opc.B.toarray())
    assert basis.shape[1] > 0
    for v in basis.T:
        fine_div = compute_divergence(pair.P_u @ v, pair.fine)
        assert np.abs(fine_div).max() < 1e-12


def test_build_transfer_level_bound():
    hier = build_hierarchy(2, (2, 2), 1)
    with pytest.raises(ValueError):
        build_transfer(hier, 1, 0)

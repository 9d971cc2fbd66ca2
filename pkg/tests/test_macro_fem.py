import numpy as np
import pytest
from hypothesis import given, strategies as st

from fembem.bench import build_two_block_model
from fembem.errors import MeshError, NonConvergenceError
from fembem.macro_fem import (GAUSS_POINTS, ConstitutiveResponse, MacroModel, interface_gap,
                              interface_operators, interface_residual_stiffness, newton_solve,
                              q4_plane_strain_stiffness, q4_stress)
from oracles import q4_unit_square_entries

UNIT = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
HORIZONTAL = np.array([[0, 0], [2, 0], [2, 0], [0, 0]], dtype=float)


class LinearLaw:
    def __init__(self, k):
        self.k = k

    def begin_step(self, step):
        pass

    def evaluate(self, g):
        if g <= 0:
            return ConstitutiveResponse.open()
        return ConstitutiveResponse(self.k * g, self.k)

    def commit(self, g, resp):
        pass


class PowerLaw(LinearLaw):
    def __init__(self, a, b, fd=False):
        self.a, self.b, self.fd = a, b, fd

    def evaluate(self, g):
        if g <= 0:
            return ConstitutiveResponse.open()
        p = self.a * g ** self.b
        if self.fd:
            dg = 0.01 * g
            return ConstitutiveResponse(p, (self.a * (g + dg) ** self.b - p) / dg)
        return ConstitutiveResponse(p, self.a * self.b * g ** (self.b - 1))


def laws_for(model, factory):
    return [[factory() for _ in GAUSS_POINTS] for _ in model.interfaces]


# interface kinematics

def test_operators_invariants():
    for xi in (-1.0, *GAUSS_POINTS, 0.3, 1.0):
        L, N, R, detJ = interface_operators(HORIZONTAL, xi)
        assert np.allclose(R.T @ R, np.eye(2))
        assert N[0, 0] + N[0, 2] == pytest.approx(1.0)
        assert detJ == pytest.approx(1.0)
        assert L.shape == (4, 8) and N.shape == (2, 4)


def test_rigid_translation_has_zero_gap():
    d = np.tile([0.3, -0.7], 4)
    assert np.allclose(interface_gap(d, HORIZONTAL), 0.0)


def test_upper_face_moving_down_closes_gap():
    d = np.zeros(8)
    d[5] = d[7] = -0.25
    g = interface_gap(d, HORIZONTAL)
    assert np.allclose(g[:, 1], 0.25)
    assert np.allclose(g[:, 0], 0.0)


def test_gap_interpolates_nodal_values():
    alpha, beta = 0.4, 1.3
    d = np.zeros(8)
    d[7] = -alpha   # node 4 over node 1
    d[5] = -beta    # node 3 over node 2
    g = interface_gap(d, HORIZONTAL)
    for k, xi in enumerate(GAUSS_POINTS):
        assert g[k, 1] == pytest.approx(0.5 * (1 - xi) * alpha + 0.5 * (1 + xi) * beta)


@given(st.floats(0, 2 * np.pi), st.integers(0, 2**32 - 1))
def test_normal_gap_is_frame_invariant(theta, seed):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(8)
    Q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    coords = HORIZONTAL @ Q.T
    d_rot = (d.reshape(4, 2) @ Q.T).ravel()
    assert np.allclose(interface_gap(d_rot, coords)[:, 1], interface_gap(d, HORIZONTAL)[:, 1])


def test_zero_pressure_gives_zero_element_terms():
    Re, Ke = interface_residual_stiffness(HORIZONTAL, [ConstitutiveResponse.open()] * 2)
    assert np.all(Re == 0) and np.all(Ke == 0)


def test_constant_pressure_resultant():
    # element length 2, p = 3: internal force 6 on each face, split 3/3
    p = 3.0
    Re, _ = interface_residual_stiffness(HORIZONTAL, [ConstitutiveResponse(p, 0.0)] * 2)
    assert Re[[1, 3]].sum() == pytest.approx(p * 2.0)
    assert Re[[5, 7]].sum() == pytest.approx(-p * 2.0)
    assert Re[1] == pytest.approx(Re[3])
    assert np.allclose(Re[0::2], 0.0)


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_element_tangent_symmetric_psd(k1, k2):
    _, Ke = interface_residual_stiffness(
        HORIZONTAL, [ConstitutiveResponse(0.0, k1), ConstitutiveResponse(0.0, k2)])
    assert np.allclose(Ke, Ke.T)
    assert np.linalg.eigvalsh(Ke).min() >= -1e-9 * max(k1, k2, 1.0)


def test_element_tangent_matches_finite_difference():
    law = PowerLaw(2.0, 2.5)
    rng = np.random.default_rng(0)
    d = rng.uniform(-0.1, 0.1, 8)
    d[[5, 7]] -= 1.0

    def residual(d):
        g = interface_gap(d, HORIZONTAL)[:, 1]
        return interface_residual_stiffness(HORIZONTAL, [law.evaluate(x) for x in g])

    R0, K = residual(d)
    h = 1e-6
    K_fd = np.column_stack([(residual(d + h * e)[0] - R0) / h for e in np.eye(8)])
    assert np.allclose(K, K_fd, rtol=1e-4, atol=1e-4)


# bulk elements

def test_q4_matches_closed_form_entries():
    for E, nu in ((1.0, 0.0), (210.0, 0.3)):
        K = q4_plane_strain_stiffness(UNIT, E, nu)
        ref = q4_unit_square_entries(E, nu)
        for (i, j), v in ref.items():
            assert K[i, j] == pytest.approx(v, rel=1e-12)


@pytest.mark.parametrize("coords", [
    UNIT,
    np.array([[0, 0], [2.0, 0.1], [2.3, 1.7], [-0.2, 1.2]]),
])
def test_q4_rigid_body_modes(coords):
    K = q4_plane_strain_stiffness(coords, 70.0, 0.25)
    assert np.allclose(K, K.T)
    eig = np.linalg.eigvalsh(K)
    assert np.sum(np.abs(eig) < 1e-9 * eig.max()) == 3
    assert np.allclose(K @ np.tile([1.0, 0.0], 4), 0.0, atol=1e-10)
    assert np.allclose(K @ np.tile([0.0, 1.0], 4), 0.0, atol=1e-10)


def test_q4_rejects_inverted_element():
    with pytest.raises(MeshError, match="Jacobian"):
        q4_plane_strain_stiffness(UNIT[::-1], 1.0, 0.3)


def test_patch_test_distorted_mesh():
    # two distorted quads sharing an edge, linear displacement field on all nodes
    coords = np.array([[0, 0], [1.1, 0], [2, 0], [2, 1], [0.9, 1.2], [0, 1]], dtype=float)
    quads = [(0, 1, 4, 5), (1, 2, 3, 4)]
    E, nu = 10.0, 0.3
    eps = np.array([1e-3, -4e-4, 6e-4])
    disp = np.column_stack([eps[0] * coords[:, 0] + eps[2] * coords[:, 1],
                            eps[1] * coords[:, 1]]).ravel()
    model = MacroModel(coords, [(q, E, nu) for q in quads], [], {})
    K = model.bulk_stiffness()
    f = K @ disp
    # self-equilibrated nodal forces
    assert abs(f[0::2].sum()) < 1e-12 and abs(f[1::2].sum()) < 1e-12
    sigma = None
    for q in quads:
        for r, s in ((-0.5, 0.3), (0.7, -0.9)):
            got = q4_stress(coords[list(q)], disp[MacroModel.dofs(q)], E, nu, r, s)
            sigma = got if sigma is None else sigma
            assert np.allclose(got, sigma, rtol=1e-9, atol=1e-15)


def test_non_coincident_interface_rejected():
    coords = np.array([[0, 0], [1, 0], [1, 0.1], [0, 0]], dtype=float)
    with pytest.raises(MeshError, match="coincident"):
        MacroModel(coords, [], [(0, 1, 2, 3)], {})


# Newton solver

def test_zero_load_zero_residual():
    model = build_two_block_model(10.0, 1.0, 0.3, 1.0, 0.3)
    hist = newton_solve(model, laws_for(model, lambda: LinearLaw(1.0)), [0.0])
    assert hist.steps[0].residuals == [0.0]
    assert hist.steps[0].reaction == 0.0


def test_linear_spring_matches_series_solution():
    L, E, nu, k = 10.0, 2.0, 0.3, 0.05
    model = build_two_block_model(L, E, nu, E, nu)
    deltas = np.linspace(0.1, 1.0, 5)
    hist = newton_solve(model, laws_for(model, lambda: LinearLaw(k)), deltas)
    assert hist.converged
    c = 2 * (1 - nu ** 2) * L / E
    for rec in hist.steps:
        g = rec.delta / (1 + k * c)
        assert [x for x, _ in rec.gauss] == pytest.approx([g, g], rel=1e-9)
        assert rec.reaction == pytest.approx(k * g * L, rel=1e-9)
        assert len(rec.residuals) <= 2 + (rec.step == 0)


def test_reaction_equals_interface_force():
    model = build_two_block_model(10.0, 1.0, 0.3, 0.5, 0.2)
    hist = newton_solve(model, laws_for(model, lambda: PowerLaw(1e-3, 2.7)),
                        np.linspace(0.2, 2.0, 6), newton_tol=1e-15)
    for rec in hist.steps:
        force = model.interface_force([[r for _, r in rec.gauss]])
        assert rec.reaction == pytest.approx(force, rel=1e-8)


def test_analytic_tangent_converges_quadratically():
    model = build_two_block_model(10.0, 1.0, 0.3, 1.0, 0.3)
    hist = newton_solve(model, laws_for(model, lambda: PowerLaw(1e-3, 2.8)),
                        np.linspace(0.5, 3.0, 4))
    res = hist.steps[-1].residuals
    logs = -np.log10(res[:-1])
    assert logs[-1] - logs[-2] >= 1.5 * (logs[-2] - logs[-3])


def test_finite_difference_tangent_needs_more_iterations():
    model = build_two_block_model(10.0, 1.0, 0.3, 1.0, 0.3)
    deltas = np.linspace(0.5, 3.0, 4)
    exact = newton_solve(model, laws_for(model, lambda: PowerLaw(1e-3, 2.8)), deltas)
    fd = newton_solve(model, laws_for(model, lambda: PowerLaw(1e-3, 2.8, fd=True)), deltas)
    assert len(fd.steps[-1].residuals) >= len(exact.steps[-1].residuals) + 1
    assert fd.steps[-1].reaction == pytest.approx(exact.steps[-1].reaction, rel=1e-9)


def test_nonconvergence_recorded_and_raised():
    model = build_two_block_model(10.0, 1.0, 0.3, 1.0, 0.3)
    laws = laws_for(model, lambda: PowerLaw(1e-3, 2.8))
    hist = newton_solve(model, laws, [1.0, 2.0], max_iter=1)
    assert not hist.converged
    assert hist.failure.step == 0
    assert len(hist.failure.residuals) == 2
    assert not hist.steps[-1].converged
    with pytest.raises(NonConvergenceError):
        newton_solve(model, laws, [1.0], max_iter=1, raise_on_failure=True)


def test_residual_trace_ends_below_tolerance():
    model = build_two_block_model(10.0, 1.0, 0.3, 1.0, 0.3)
    hist = newton_solve(model, laws_for(model, lambda: PowerLaw(1e-3, 2.8)),
                        np.linspace(0.3, 3.0, 10), newton_tol=1e-9)
    for rec in hist.steps:
        assert rec.residuals[-1] < 1e-9
        assert all(r >= 1e-9 for r in rec.residuals[:-1])

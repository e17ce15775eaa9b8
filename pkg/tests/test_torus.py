"""Flat torus: Kahler data, theta basis, Hitchin parallelism, Hitchin-Witten holonomy."""
import cmath
import math

import numpy as np
import pytest

from hitchin_cas import torus as T
from hitchin_cas.torus import TorusError, TorusModel

RNG = np.random.default_rng(20261015)


def random_taus(n, rng=RNG):
    return [complex(x, y) for x, y in zip(rng.uniform(-1.5, 1.5, n), rng.uniform(0.6, 2.0, n))]


# ---------------------------------------------------------------- complex structure

@pytest.mark.derived
def test_standard_structure_at_i():
    """[DERIVED] tau = i: J d/dx = d/dy and g = 2 pi (dx^2 + dy^2) from g = omega . J."""
    J, g, gi = T.complex_structure(1j)
    assert np.allclose(J, [[0, -1], [1, 0]], atol=1e-14)
    assert np.allclose(g, 2 * math.pi * np.eye(2), atol=1e-13)
    assert np.allclose(g @ gi, np.eye(2))


@pytest.mark.trivial
@pytest.mark.parametrize("tau", random_taus(10, np.random.default_rng(1)))
def test_J_squared(tau):
    """[TRIVIAL] J^2 = -Id."""
    J, _, _ = T.complex_structure(tau)
    assert np.abs(J @ J + np.eye(2)).max() < 1e-12


@pytest.mark.derived
def test_metric_positive_definite():
    """[DERIVED] g is symmetric positive definite for 100 random tau."""
    for tau in random_taus(100, np.random.default_rng(2)):
        _, g, _ = T.complex_structure(tau)
        assert np.abs(g - g.T).max() < 1e-12
        assert np.linalg.eigvalsh(g).min() > 0


@pytest.mark.derived
def test_holomorphic_coordinate():
    """[DERIVED] dz = dx + tau dy is of type (1,0): dz . J = i dz."""
    tau = 0.3 + 1.4j
    J, _, _ = T.complex_structure(tau)
    dz = np.array([1.0, tau])
    assert np.allclose(dz @ J, 1j * dz)


@pytest.mark.trivial
def test_tau_on_real_axis():
    """[TRIVIAL] Im tau must be positive."""
    with pytest.raises(TorusError):
        T.complex_structure(0.5)


# ---------------------------------------------------------------- G(V)

@pytest.mark.paper
@pytest.mark.parametrize("tau", [1j, 0.4 + 0.9j, -1.1 + 1.7j])
@pytest.mark.parametrize("v", [1.0, 1j, 0.6 - 0.8j])
def test_G_relations(tau, v):
    """[PAPER] G~ symmetric with no (1,1)-part, G* = Gb, V[g~] = -G~(V)."""
    c = T.kahler_checks(tau, v)
    assert c["Gt_symmetric"] < 1e-9
    assert c["Gt_11_part"] < 1e-9
    assert c["Gbar_conjugate"] < 1e-9
    assert c["dginv_plus_Gt"] < 1e-7


@pytest.mark.derived
def test_G_closed_form():
    """[DERIVED] moving tau only changes dzbar: G(d/dtau) is a multiple of d/dz (x) d/dz."""
    tau = 0.2 + 1.3j
    G = T.compute_G(tau, 1.0)
    dz = np.array([tau.conjugate(), -1.0]) / (tau.conjugate() - tau)
    coeff = G[0, 0] / dz[0] ** 2
    assert np.allclose(G, coeff * np.outer(dz, dz), atol=1e-9)


@pytest.mark.trivial
def test_G_errors():
    """[TRIVIAL] zero direction and cancelling step sizes are refused."""
    with pytest.raises(TorusError):
        T.compute_G(1j, 0.0)
    with pytest.raises(TorusError):
        T.compute_G(1j, 1.0, eps=1e-9)


# ---------------------------------------------------------------- theta basis

@pytest.mark.derived
@pytest.mark.parametrize("k", range(1, 7))
def test_basis_dimension(k):
    """[DERIVED] k sections, matching the numerical kernel of dbar (index count)."""
    assert len(T.theta_basis(TorusModel(k))) == k == T.basis_dimension(k)
    assert T.dbar_kernel_dimension(k, 0.2 + 0.9j) == k


@pytest.mark.derived
@pytest.mark.parametrize("k", [1, 3])
def test_basis_holomorphic_and_orthogonal(k):
    """[DERIVED] dbar s_j = 0, and the sampled s_j are orthogonal with equal norms."""
    m = TorusModel(k, 0.3 + 1.1j)
    B = T.theta_basis(m)
    for s in B:
        assert s.dbar_residual() < 1e-10
    X = np.column_stack([s.on_grid(40).ravel() for s in B]) / 40
    gram = X.conj().T @ X
    assert np.allclose(gram, gram[0, 0] * np.eye(k), atol=1e-10)
    assert math.isclose(gram[0, 0].real, B[0].inner(B[0]).real, rel_tol=1e-10)


@pytest.mark.trivial
def test_quasi_periodicity():
    """[TRIVIAL] s(x+1, y) = s(x, y) and s(x, y+1) = exp(-2 pi i k x) s(x, y)."""
    k = 3
    s = T.theta_basis(TorusModel(k, 0.5 + 1.2j))[1]
    x, y = np.linspace(0, 1, 7), np.linspace(-0.3, 0.6, 5)
    base = s.values(x, y)
    assert np.allclose(s.values(x + 1, y), base, atol=1e-12)
    assert np.allclose(s.values(x, y + 1), np.exp(-2j * math.pi * k * x)[:, None] * base, atol=1e-12)


# ---------------------------------------------------------------- Hitchin connection

@pytest.mark.derived
def test_k1_parallel():
    """[DERIVED] the heat equation: the k = 1 theta section is projectively parallel."""
    M, res = T.hitchin_matrix(TorusModel(1))
    assert res[0] < 1e-8


@pytest.mark.derived
def test_parallelism_random_tau():
    """[DERIVED] residual < 1e-8 for k <= 6 at 20 random tau; the connection matrix is scalar."""
    taus = random_taus(20, np.random.default_rng(3))
    for n, tau in enumerate(taus):
        k = n % 6 + 1
        M, res = T.hitchin_matrix(TorusModel(k, tau))
        assert max(res) < 1e-8, (k, tau)
        assert np.abs(M - M[0, 0] * np.eye(k)).max() < 1e-8
        assert abs(M[0, 0] - 1j / (4 * tau.imag)) < 1e-8


@pytest.mark.trivial
def test_connection_linear_in_direction():
    """[TRIVIAL] doubling V doubles the connection matrix."""
    m = TorusModel(3, 0.1 + 1.2j)
    v = 0.7 + 0.2j
    assert np.allclose(T.hitchin_matrix(m, 2 * v)[0], 2 * T.hitchin_matrix(m, v)[0], atol=1e-9)


@pytest.mark.paper
def test_hitchin_transport_preserves_holomorphy():
    """[PAPER] the Hitchin connection preserves the holomorphic subspaces."""
    assert T.hitchin_transport_holomorphy(TorusModel(2, 0.1 + 1.1j)) < 1e-6


# ---------------------------------------------------------------- holonomy

@pytest.mark.derived
def test_hw_holonomy_flat():
    """[DERIVED] projective-flatness defect < 1e-5 for a side-0.01 loop at tau = i, k = t = 1."""
    r = T.hw_holonomy(TorusModel(1, 1j, 1.0, 32), 0.01)
    assert r.defect < 1e-5
    assert abs(abs(r.scalar) - 1) < 1e-6


@pytest.mark.trivial
def test_trivial_loop():
    """[TRIVIAL] a degenerate loop has identity holonomy."""
    r = T.hw_holonomy(TorusModel(1), 0.0)
    assert r.defect == 0 and r.scalar == 1


@pytest.mark.derived
def test_quadratic_scaling():
    """[DERIVED] halving the loop side divides the defect by 4."""
    rows, ratios = T.convergence(TorusModel(1, 1j, 1.0, 32))
    assert [r.side for r in rows] == [0.04, 0.02, 0.01]
    for q in ratios:
        assert abs(q - 4) < 0.6


@pytest.mark.derived
def test_flipped_sign_is_not_flat(monkeypatch):
    """[DERIVED] negative control: + (1/2 tbar) Delta_Gb instead of - is visibly curved."""
    def bad(grid, model, tau, v, mode, eps=1e-3):
        G = T.compute_G(tau, v, eps)
        return grid.laplace(G) * (1 / (2 * model.t)) + grid.laplace(np.conj(G)) * (1 / (2 * model.tbar))
    good = T.hw_holonomy(TorusModel(1, 1j, 1.0, 32), 0.01).defect
    monkeypatch.setattr(T, "connection_operator", bad)
    assert T.hw_holonomy(TorusModel(1, 1j, 1.0, 32), 0.01).defect > 10 * good


@pytest.mark.paper
def test_hw_breaks_holomorphy():
    """[PAPER] Hitchin-Witten transport leaves the holomorphic subspace for k = 2, t = 2 + 3i."""
    r, floor = T.hw_transport_holomorphy(TorusModel(2, 1j, 2 + 3j, 32))
    assert r > 10 * floor
    assert r > 1e-2


@pytest.mark.trivial
def test_complex_t_hw_flat():
    """[TRIVIAL] with lambda = 0 the Hitchin-Witten connection is projectively flat for complex t too."""
    assert T.hw_holonomy(TorusModel(2, 0.2 + 1.1j, 2 - 1.5j, 32), 0.01).defect < 1e-5


# ---------------------------------------------------------------- model validation

@pytest.mark.trivial
@pytest.mark.parametrize("kw", [dict(k=0), dict(k=1.5), dict(k=1, tau=2.0), dict(k=2, t=1 + 1j)])
def test_model_errors(kw):
    """[TRIVIAL] invalid level, modulus or t."""
    with pytest.raises(TorusError):
        TorusModel(**kw)


@pytest.mark.trivial
def test_resolution_and_truncation_errors():
    """[TRIVIAL] too coarse a grid and too small a theta bound are reported."""
    with pytest.raises(TorusError):
        T.hw_holonomy(TorusModel(3, N=16), 0.01)
    with pytest.raises(TorusError):
        TorusModel(1, bound=0.5).mcut()


@pytest.mark.trivial
def test_records_serialize():
    """[TRIVIAL] holonomy rows export as JSON and CSV."""
    r = T.hw_holonomy(TorusModel(1), 0.01)
    assert '"defect"' in T.to_json([r.record()])
    lines = T.to_csv([r]).strip().splitlines()
    assert len(lines) == 2 and lines[0].startswith("k,")
    assert cmath.isclose(complex(*r.record()["scalar"]), r.scalar)

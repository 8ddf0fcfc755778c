"""Property-based checks of invariants across modules."""
import numpy as np
import scipy.sparse as sp
from hypothesis import given, strategies as st

from minhelm import DirichletData, MaterialField, Mode, assemble_dirichlet, build_grid
from minhelm.cli import RunConfig, format_complex, parse_complex, parse_config, serialize_config
from minhelm.grid import (BasisId, BasisKind, basis_node, interpolate_nodal,
                          scalar_interior_index, vector_index)
from minhelm.linalg import cg, ic0
from minhelm.materials import (L_eigenvalues_diagonal, dissipation_tensors, l_block,
                               lambda_spread, suggest_rescale, z_entries, default_samples)
from minhelm.solver import FieldSolution
from minhelm.verify import AnalyticSolution, error_components, fit_rate

finite = st.floats(-50, 50, allow_nan=False)
positive = st.floats(0.05, 20)
coercive = st.tuples(finite, positive, finite, positive)  # rho', rho'', kappa', -kappa''


def material(params, omega=1.5):
    rp, rpp, kp, kpp = params
    return MaterialField.constant(complex(rp, rpp), complex(kp, -kpp), omega)


@given(st.integers(3, 40), st.data())
def test_index_maps_invert(N, data):
    t = data.draw(st.integers(2, N - 1))
    j = data.draw(st.integers(2, N - 1))
    assert basis_node(BasisId(BasisKind.SCALAR, scalar_interior_index(t, j, N)), N) == (t, j)
    t = data.draw(st.integers(1, N))
    j = data.draw(st.integers(1, N))
    assert basis_node(BasisId(BasisKind.VECTOR_X, vector_index(t, j, N)), N) == (t, j)


@given(st.integers(3, 30), st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=20))
def test_tents_partition_unity(N, pts):
    g = build_grid(N)
    x, y = np.array(pts).T
    val, dx, dy = interpolate_nodal(g, np.ones(g.n_nodes), x, y)
    np.testing.assert_allclose(val, 1.0, atol=1e-13)
    np.testing.assert_allclose(dx, 0.0, atol=1e-9)
    np.testing.assert_allclose(dy, 0.0, atol=1e-9)


@given(coercive, st.floats(0.1, 10))
def test_dissipation_tensors_positive_definite(params, omega):
    t = dissipation_tensors(material(params, omega), np.array([0.5]), np.array([0.5]))
    assert np.linalg.eigvalsh(t.R[0]).min() > 0
    assert np.linalg.eigvalsh(t.Kk[0]).min() > 0


@given(finite, positive)
def test_L_block_eigenvalues_reciprocal(cp, cpp):
    c = complex(cp, cpp)
    lo, hi = L_eigenvalues_diagonal(c)
    np.testing.assert_allclose(lo * hi, 1.0, rtol=1e-8)
    np.testing.assert_allclose((lo, hi), np.linalg.eigvalsh(l_block(c)), rtol=1e-6)


@given(coercive)
def test_suggest_rescale_never_worse(params):
    m = material(params)
    z = np.unique(z_entries(m, default_samples(3)))
    r, theta = suggest_rescale(m, default_samples(3), n_theta=72, n_r=9)
    assert lambda_spread(r * np.exp(1j * theta) * z) <= lambda_spread(z) * (1 + 1e-12)


@given(coercive, st.sampled_from(list(Mode)))
def test_dirichlet_matrix_spd(params, mode):
    A = assemble_dirichlet(build_grid(5), material(params), DirichletData.zero(), mode).A.toarray()
    assert np.array_equal(A, A.T)
    assert np.linalg.eigvalsh(A).min() > 0


@given(coercive)
def test_mode_flip_only_touches_coupling(params):
    m = material(params)
    re = assemble_dirichlet(build_grid(4), m, DirichletData.zero(), Mode.REAL_PRIMAL)
    im = assemble_dirichlet(build_grid(4), m, DirichletData.zero(), Mode.IMAG_PRIMAL)
    for k, sign in ((1, 1), (2, 1), (3, 1), (4, -1), (5, 1), (6, -1)):
        assert abs(re.block(k) - sign * im.block(k)).max() == 0


@given(st.integers(2, 25), st.integers(0, 2**31 - 1))
def test_cg_solves_spd(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    A = B @ B.T + n * np.eye(n)
    b = rng.standard_normal(n)
    x, rep = cg(sp.csr_matrix(A), b, tol=1e-12, maxit=5 * n)
    assert rep.converged
    np.testing.assert_allclose(A @ x, b, atol=1e-9 * np.linalg.norm(b) * np.linalg.cond(A))


@given(st.lists(st.floats(2.1, 10), min_size=2, max_size=15), st.integers(0, 2**31 - 1))
def test_ic0_exact_on_tridiagonal(diag, seed):
    rng = np.random.default_rng(seed)
    n = len(diag)
    off = rng.uniform(-1, 1, n - 1)
    A = sp.diags([off, np.array(diag), off], [-1, 0, 1], format="csr")
    np.testing.assert_allclose(ic0(A).L.toarray(), np.linalg.cholesky(A.toarray()), atol=1e-12)


@given(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False))
def test_complex_literal_roundtrip(c):
    assert parse_complex(format_complex(c)) == c


@given(st.integers(3, 500), st.floats(0.01, 100), st.floats(1e-12, 1e-2),
       st.sampled_from(["both", "real-primal", "imag-primal"]), st.booleans(),
       st.complex_numbers(max_magnitude=100, allow_nan=False, allow_infinity=False))
def test_config_roundtrip(n, omega, tol, mode, precond, rho):
    cfg = RunConfig(n=n, omega=omega, tol=tol, mode=mode, precond=precond, rho=rho).validate()
    assert parse_config(serialize_config(cfg)) == cfg


@given(st.lists(st.floats(1e-6, 1e3), min_size=3, max_size=6, unique=True), st.floats(1e-3, 1e3))
def test_rate_invariant_under_error_scaling(errs, scale):
    h = np.geomspace(0.1, 0.01, len(errs))
    np.testing.assert_allclose(fit_rate(h, np.array(errs) * scale), fit_rate(h, errs), atol=1e-9)


def as_analytic(field):
    g, P, v = field.grid, field.P, field.v

    def interp(values, which):
        return lambda x, y: interpolate_nodal(g, values, x, y)[which]

    def grad(x, y):
        _, px, py = interpolate_nodal(g, P, x, y)
        return px, py

    def vel(x, y):
        return interp(v[:, 0], 0)(x, y), interp(v[:, 1], 0)(x, y)

    def div(x, y):
        return interp(v[:, 0], 1)(x, y) + interp(v[:, 1], 2)(x, y)
    return AnalyticSolution(interp(P, 0), grad, vel, div)


def random_field(rng, g):
    n = g.n_nodes
    return FieldSolution(g, rng.standard_normal(n), rng.standard_normal(n),
                         rng.standard_normal((n, 2)), rng.standard_normal((n, 2)))


@given(st.integers(0, 2**31 - 1))
def test_vnorm_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    g = build_grid(5)
    a, b, c = (random_field(rng, g) for _ in range(3))
    d = lambda f1, f2: error_components(f1, as_analytic(f2), 41).vnorm
    assert d(a, a) < 1e-12
    assert d(a, b) > 0
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import log_ndtr

from onebitspice import onebit
from onebitspice.numerics import HermitianFactor
from onebitspice.operators import DenseDictionary, Fourier2D
from onebitspice.quantizer import eight_level_threshold, h_max_from_power, signc


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_instance(seed, N=8, M=16):
    rng = np.random.default_rng(seed)
    B = crandn(rng, N, M) / np.sqrt(2)
    d = DenseDictionary(B)
    gamma = np.zeros(M, complex)
    gamma[rng.choice(M, 2, replace=False)] = crandn(rng, 2)
    y = B @ gamma + 0.3 * crandn(rng, N)
    h = 0.5 * crandn(rng, N)
    z = signc(y, h).z
    beta = 0.3 * crandn(rng, M)
    p = rng.uniform(0.05, 1.0, M)
    return d, B, z, h, beta, p, float(rng.uniform(0.2, 2.0))


def test_mills_u_value():
    assert onebit.mills_u(0.0) == pytest.approx(np.sqrt(2 / np.pi))


def test_compute_g_zero_state():
    d, _, z, h, _, _, _ = random_instance(0)
    g = onebit.compute_g(z, d, np.zeros(16), 0.0, h)
    u0 = onebit.mills_u(0.0)
    np.testing.assert_allclose(g, z.real * u0 + 1j * z.imag * u0)
    np.testing.assert_allclose(np.abs(g), u0 * np.sqrt(2))


def test_compute_g_large_margin():
    # margins of +10 in both parts: u(x) ~ x, so g ~ B beta - eta h
    B = np.eye(3, dtype=complex)
    d = DenseDictionary(B)
    h = np.array([0.5, -1, 2j])
    eta = 1.5
    z = np.array([1 + 1j, -1 + 1j, 1 - 1j])
    beta = eta * h + 10 * z
    g = onebit.compute_g(z, d, beta, eta, h)
    np.testing.assert_allclose(g, beta - eta * h, atol=1e-6)


def test_compute_g_scalar_loop():
    d, B, z, h, beta, _, eta = random_instance(1)
    g = onebit.compute_g(z, d, beta, eta, h)
    for n in range(8):
        s = B[n] @ beta - eta * h[n]
        xr, xi = z[n].real * s.real, z[n].imag * s.imag
        ur = float(xr + mp.npdf(xr) / mp.ncdf(xr))
        ui = float(xi + mp.npdf(xi) / mp.ncdf(xi))
        assert g[n] == pytest.approx(z[n].real * ur + 1j * z[n].imag * ui, rel=1e-10)


def test_build_onebit_R():
    d = DenseDictionary(np.array([[1.0], [1.0]]))
    np.testing.assert_allclose(onebit.build_onebit_R(d, [3.0]), [[5, 3], [3, 5]])
    d, B, *_ = random_instance(2)
    np.testing.assert_allclose(onebit.build_onebit_R(d, np.full(16, 1e-16)), 2 * np.eye(8), atol=1e-14)
    p = np.random.default_rng(0).uniform(0, 3, 16)
    R = onebit.build_onebit_R(d, p)
    np.testing.assert_allclose(R, R.conj().T)
    assert np.linalg.eigvalsh(R).min() >= 2 - 1e-9


def test_eta_update_analytic():
    d, _, _, h, _, p, _ = random_instance(3)
    R = onebit.build_onebit_R(d, p)
    assert onebit.eta_update(R, h, -h) == pytest.approx(1.0)
    assert onebit.eta_update(R, h, h) == 0.0
    assert onebit.eta_update(R, np.zeros(8), h) == 0.0


def _reduced_q(R, h, g, eta):
    v = eta * h + g
    return np.vdot(v, np.linalg.solve(R, v)).real


@pytest.mark.parametrize("seed", range(5))
def test_eta_update_grid_search(seed):
    d, B, z, h, beta, p, eta0 = random_instance(seed)
    g = onebit.compute_g(z, d, beta, eta0, h)
    R = onebit.build_onebit_R(d, p)
    eta = onebit.eta_update(R, h, g)
    # coarse grid then a fine one around the best point
    grid = np.linspace(0, 20, 20001)
    vals = [_reduced_q(R, h, g, e) for e in grid]
    e0 = grid[int(np.argmin(vals))]
    fine = np.linspace(max(0, e0 - 2e-3), e0 + 2e-3, 40001)
    best = fine[int(np.argmin([_reduced_q(R, h, g, e) for e in fine]))]
    assert eta == pytest.approx(best, abs=1e-6)
    # other operator forms give the same answer
    assert onebit.eta_update(HermitianFactor(R), h, g) == pytest.approx(eta, rel=1e-12)
    assert onebit.eta_update(lambda v: R @ v, h, g) == pytest.approx(eta, rel=1e-6)


def test_beta_update_identity():
    d = DenseDictionary(np.eye(4))
    rng = np.random.default_rng(4)
    p = rng.uniform(0.1, 2, 4)
    h, g = crandn(rng, 4), crandn(rng, 4)
    R = onebit.build_onebit_R(d, p)
    np.testing.assert_allclose(onebit.beta_update(R, d, p, h, g, 0.7), p * (0.7 * h + g) / (p + 2))
    pf = np.full(4, 1e-16)
    assert np.abs(onebit.beta_update(onebit.build_onebit_R(d, pf), d, pf, h, g, 0.7)).max() < 1e-15


def _surrogate(B, p, h, g, beta, eta):
    # 1/2 ||B beta - eta h - g||^2 + sum |beta|^2 / p
    r = B @ beta - eta * h - g
    return 0.5 * np.vdot(r, r).real + np.sum(np.abs(beta) ** 2 / p)


@pytest.mark.parametrize("seed", range(5))
def test_beta_eta_zero_gradient(seed):
    d, B, z, h, beta0, p, eta0 = random_instance(seed)
    g = onebit.compute_g(z, d, beta0, eta0, h)
    R = onebit.build_onebit_R(d, p)
    eta = onebit.eta_update(R, h, g)
    beta = onebit.beta_update(R, d, p, h, g, eta)
    step = 1e-4
    grad = []
    for k in range(16):
        for unit in (1, 1j):
            e = np.zeros(16, complex)
            e[k] = step * unit
            grad.append((_surrogate(B, p, h, g, beta + e, eta)
                         - _surrogate(B, p, h, g, beta - e, eta)) / (2 * step))
    if eta > 0:
        grad.append((_surrogate(B, p, h, g, beta, eta + step)
                     - _surrogate(B, p, h, g, beta, eta - step)) / (2 * step))
    assert np.linalg.norm(grad) <= 1e-8 * max(1.0, _surrogate(B, p, h, g, beta, eta))


@pytest.mark.parametrize("seed", range(10))
def test_majorization(seed):
    d, B, z, h, beta_hat, _, eta_hat = random_instance(seed)
    rng = np.random.default_rng(100 + seed)
    g = onebit.compute_g(z, d, beta_hat, eta_hat, h)

    def nll(beta, eta):
        s = B @ beta - eta * h
        return -np.sum(log_ndtr(z.real * s.real)) - np.sum(log_ndtr(z.imag * s.imag))

    def upper(beta, eta):
        r = B @ beta - eta * h - g
        r0 = B @ beta_hat - eta_hat * h - g
        return nll(beta_hat, eta_hat) + 0.5 * (np.vdot(r, r).real - np.vdot(r0, r0).real)

    assert upper(beta_hat, eta_hat) == pytest.approx(nll(beta_hat, eta_hat), abs=1e-9)
    for _ in range(20):
        b = beta_hat + rng.normal(scale=rng.choice([0.01, 0.3, 3])) * crandn(rng, 16)
        e = abs(eta_hat + rng.normal())
        assert upper(b, e) >= nll(b, e) - 1e-9


def test_weights():
    d = Fourier2D(8, 2, 16, 4)
    np.testing.assert_array_equal(onebit.weight("1bspice", d), np.full(64, 16.0))
    pf = np.full(64, 1e-16)
    R = onebit.build_onebit_R(d, pf)
    np.testing.assert_allclose(onebit.weight("1blikes", d, R, pf), np.full(64, 8.0), rtol=1e-12)
    p = np.array([0.5, 2.0])
    np.testing.assert_allclose(onebit.weight("1bslim", d, p=p, epsilon=0.5), [1.0, 0.4])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_weight_ordering(seed):
    d, _, _, _, _, p, _ = random_instance(seed)
    R = onebit.build_onebit_R(d, p)
    w_iaa = onebit.weight("1biaa", d, R, p)
    w_likes = onebit.weight("1blikes", d, R, p)
    w_slim = onebit.weight("1bslim", d, R, p, epsilon=0.0)
    assert np.all(w_iaa <= w_likes * (1 + 1e-10))
    assert np.all(w_likes <= w_slim * (1 + 1e-10))


def test_power_update():
    np.testing.assert_allclose(onebit.power_update("1bslim", np.zeros(3), epsilon=1e-4), 1e-4)
    assert onebit.power_update("1bspice", np.array([2.0]), np.array([4.0]))[0] == pytest.approx(1.0)
    assert onebit.power_update("1bspice", np.array([0.0]), np.array([4.0]))[0] == onebit.POWER_FLOOR
    with pytest.raises(ValueError):
        onebit.power_update("1bspice", np.ones(2), np.array([1.0, 0.0]))


@settings(max_examples=30, deadline=None)
@given(b=st.floats(0.01, 10), w=st.floats(0.01, 100))
def test_spice_power_minimizes_penalty(b, w):
    p = onebit.power_update("1bspice", np.array([b]), np.array([w]))[0]
    grid = p * np.linspace(0.5, 1.5, 2001)
    vals = b * b / grid + w * grid
    assert b * b / p + w * p <= vals.min() + 1e-12 * vals.min()


def test_objective_zero_state():
    d, _, z, h, _, p, _ = random_instance(5)
    N, M = 8, 16
    zero = np.zeros(M)
    L0 = 2 * N * np.log(2)
    assert onebit.neg_log_likelihood(z, d, zero, 0.0, h) == pytest.approx(L0)
    assert onebit.onebit_objective("1bslim", zero, p, 0.0, z, d, h, 1e-4) == pytest.approx(
        L0 + M * np.log(1e-4))
    R = onebit.build_onebit_R(d, p)
    assert onebit.onebit_objective("1bspice", zero, p, 0.0, z, d, h) == pytest.approx(
        L0 + np.trace(R).real)
    assert onebit.onebit_objective("1blikes", zero, p, 0.0, z, d, h) == pytest.approx(
        L0 + np.linalg.slogdet(R)[1])
    assert np.isnan(onebit.onebit_objective("1biaa", zero, p, 0.0, z, d, h))


def test_objective_high_precision():
    d, B, z, h, beta, p, eta = random_instance(6)
    beta = beta * 20  # push some margins deep into the tails
    ref = mp.mpf(0)
    s = B @ beta - eta * h
    for n in range(8):
        for x in (z[n].real * s[n].real, z[n].imag * s[n].imag):
            ref -= mp.log(mp.ncdf(mp.mpf(float(x))))
    ref += sum(mp.log(mp.mpf(float(abs(b) ** 2)) + mp.mpf("1e-4")) for b in beta)
    got = onebit.onebit_objective("1bslim", beta, p, eta, z, d, h, 1e-4)
    assert got == pytest.approx(float(ref), rel=1e-12)


def test_objective_sentinel():
    d, _, z, h, beta, p, eta = random_instance(7)
    # log(0) in the penalty is reported as +inf rather than -inf or NaN
    with np.errstate(divide="ignore"):
        assert onebit.onebit_objective("1bslim", np.zeros(16), p, 0.0, z, d, h, epsilon=0.0) == np.inf
    with pytest.raises(ValueError):
        onebit.onebit_objective("1bslim", beta, p, -1.0, z, d, h)


def _single_target(N, seed, a=0.8 * np.exp(0.7j)):
    K = 4 * N
    d = Fourier2D(N, 1, K, 1)
    k0 = N // 2 + 3
    y = a * np.exp(2j * np.pi * k0 * np.arange(N) / K)
    h = eight_level_threshold(N, h_max_from_power(abs(a) ** 2), np.random.default_rng(seed))
    return d, signc(y, h), h, k0, abs(a)


@pytest.mark.parametrize("variant", ["1bslim", "1blikes", "1biaa"])
@pytest.mark.parametrize("seed", range(3))
def test_single_target_recovery(variant, seed):
    d, z, h, k0, a = _single_target(256, seed)
    st_ = onebit.run(z, d, h, variant=variant)
    assert abs(int(np.argmax(st_.p)) - k0) <= 1
    amp = np.abs(st_.gamma)[k0 - 1:k0 + 2].max()
    assert amp == pytest.approx(a, rel=0.15)


def test_single_target_spice_location():
    d, z, h, k0, _ = _single_target(256, 1)
    st_ = onebit.run(z, d, h, variant="1bspice")
    assert abs(int(np.argmax(st_.p)) - k0) <= 1


@pytest.mark.parametrize("variant", ["1bslim", "1bspice", "1blikes"])
def test_run_objective_monotone(variant):
    d, z, h, *_ = _single_target(64, 5)
    st_ = onebit.run(z, d, h, variant=variant, max_iter=60, rel_tol=1e-300)
    tr = np.array(st_.objective_trace)
    assert len(tr) == st_.iter + 1 and st_.iter > 10
    assert np.all(np.diff(tr) <= 1e-9 * np.abs(tr[:-1]))


def test_cgls_matches_dense():
    d, z, h, *_ = _single_target(256, 2)
    a = onebit.run(z, d, h, variant="1bslim", max_iter=40)
    b = onebit.run(z, d, h, variant="1bslim", max_iter=40, solver="cgls", cgls_tol=1e-12)
    assert a.iter == b.iter
    np.testing.assert_allclose(b.p, a.p, rtol=1e-6, atol=1e-12)
    assert b.eta == pytest.approx(a.eta, rel=1e-6)
    assert a.cgls_iterations == 0 and b.cgls_iterations >= 2 * b.iter


def test_scale_invariance():
    d, _, h, _, _ = _single_target(64, 3)
    rng = np.random.default_rng(9)
    y = crandn(rng, 64)
    z1 = signc(y, h)
    z2 = signc(7.5 * y, 7.5 * h.values)
    np.testing.assert_array_equal(z1.z, z2.z)
    a = onebit.run(z1, d, h, variant="1biaa", max_iter=10)
    b = onebit.run(z2, d, h, variant="1biaa", max_iter=10)
    np.testing.assert_array_equal(a.p, b.p)


def test_zero_threshold_leaves_scale_unresolved():
    d, z, _, _, _ = _single_target(64, 4)
    st_ = onebit.run(z, d, None, variant="1bspice", max_iter=5)
    assert st_.eta == 0.0 and not st_.scale_resolved
    np.testing.assert_array_equal(st_.gamma, st_.beta)


def test_config_validation():
    with pytest.raises(ValueError):
        onebit.OneBitConfig(variant="1blikes", solver="cgls")
    with pytest.raises(ValueError):
        onebit.OneBitConfig(variant="music")
    with pytest.raises(ValueError):
        onebit.OneBitConfig(epsilon=0)
    assert onebit.OneBitConfig(variant="1bSLIM").variant == "1bslim"
    assert onebit.canonical_variant("1b-iaa") == "1biaa"


def test_dimension_errors():
    d, z, h, *_ = _single_target(64, 0)
    with pytest.raises(ValueError):
        onebit.run(z.z[:10], d, h)


def test_result_files(tmp_path):
    d, z, h, *_ = _single_target(64, 1)
    st_ = onebit.run(z, d, h, variant="1blikes", max_iter=7, rel_tol=1e-300)
    onebit.write_result_csv(tmp_path / "r.csv", st_, "1blikes", d, 1e-4)
    meta, beta, p = onebit.read_result_csv(tmp_path / "r.csv")
    assert meta["variant"] == "1blikes" and meta["iterations"] == "7"
    assert float(meta["eta"]) == st_.eta
    np.testing.assert_array_equal(beta, st_.beta)
    np.testing.assert_array_equal(p, st_.p)
    onebit.write_trace_csv(tmp_path / "t.csv", st_)
    rows = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=2)
    assert rows.shape == (7, 4)
    np.testing.assert_array_equal(rows[:, 0], np.arange(1, 8))
    np.testing.assert_allclose(rows[:, 1], st_.objective_trace[1:])

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persistlab.correlation import CorrelationSpec, Kind, corr_eval, r_rl, rho_ifbm
from persistlab.errors import CoverageError, DomainError, EmbeddingError, GridTooLargeError
from persistlab.sampler import (
    BLOCK,
    MAX_POINTS,
    GridSpec,
    RefinementWarning,
    _ifbm_joint_covariance,
    _ifbm_time_grid,
    factorize,
    fgn_autocovariance,
    lamperti,
    read_paths,
    rl_from_noise,
    rl_weights,
    sample_fbm,
    sample_gsp,
    sample_ifbm_lamperti,
    sample_rl,
    spec_covariance,
    write_paths,
)

OU = CorrelationSpec(Kind.OU)


def corr_with_se(x, y):
    """Sample correlation and its large-sample Gaussian standard error."""
    r = float(np.corrcoef(x, y)[0, 1])
    return r, (1.0 - r * r) / math.sqrt(x.size - 1)


# ------------------------------------------------------------------ grid


def test_grid_basic():
    g = GridSpec.from_step(2.0, 0.5)
    assert g.points == 5
    assert g.spacing == 0.5
    np.testing.assert_array_equal(g.times, [0.0, 0.5, 1.0, 1.5, 2.0])
    assert g.index_of(1.5) == 3


def test_grid_degenerate():
    g = GridSpec.from_step(0.0, 0.01)
    assert g.points == 1 and g.spacing == 0.0
    np.testing.assert_array_equal(g.times, [0.0])


@pytest.mark.parametrize(
    "args", [(-1.0, 3), (1.0, 1), (0.0, 2), (math.inf, 3), (1.0, 2.5)]
)
def test_grid_rejects(args):
    with pytest.raises(DomainError):
        GridSpec(*args)


def test_grid_rejects_misaligned_step():
    with pytest.raises(DomainError):
        GridSpec.from_step(1.0, 0.3)
    with pytest.raises(DomainError):
        GridSpec.from_step(1.0, 0.0)
    with pytest.raises(DomainError):
        GridSpec.from_step(1.0, 0.5).index_of(0.3)


def test_grid_too_large():
    with pytest.raises(GridTooLargeError):
        GridSpec(1.0, MAX_POINTS + 1)
    with pytest.raises(GridTooLargeError):
        GridSpec.from_step(1000.0, 1e-3)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5000), st.sampled_from([0.001, 0.005, 0.01, 0.05, 0.1]))
def test_grid_from_step_roundtrip(k, step):
    g = GridSpec.from_step(k * step, step)
    assert g.points == k + 1
    assert g.spacing == pytest.approx(step, rel=1e-12)
    assert g.index_of(g.times[-1]) == k


# ----------------------------------------------------------- sample_gsp


@pytest.mark.parametrize(
    "spec",
    [OU, CorrelationSpec(Kind.IFBM_LAMPERTI, 0.3), CorrelationSpec(Kind.RL_LAMPERTI, 0.7),
     CorrelationSpec(Kind.COSH_LIMIT), CorrelationSpec(Kind.FRACTIONAL_SLEPIAN, 0.5)],
)
def test_single_path_determinism(spec):
    g = GridSpec.from_step(5.0, 0.01)
    a = sample_gsp(spec, g, 1, 77)
    b = sample_gsp(spec, g, 1, 77)
    assert a.values.tobytes() == b.values.tobytes()
    assert a[0].seed == 77 and a[0].index == 0 and a[0].spec == spec


def test_seed_changes_values():
    g = GridSpec.from_step(1.0, 0.01)
    assert not np.array_equal(sample_gsp(OU, g, 4, 1).values, sample_gsp(OU, g, 4, 2).values)


def test_worker_count_does_not_change_values():
    g = GridSpec.from_step(2.0, 0.01)
    n = 2 * BLOCK + 17
    a = sample_gsp(OU, g, n, 5, workers=1)
    b = sample_gsp(OU, g, n, 5, workers=2)
    assert a.values.tobytes() == b.values.tobytes()
    assert b.worker_count == 2


def test_prefix_stability():
    # block streams make the first paths independent of the batch size
    g = GridSpec.from_step(1.0, 0.01)
    small = sample_gsp(OU, g, 10, 3).values
    large = sample_gsp(OU, g, 3000, 3).values
    np.testing.assert_array_equal(small, large[:10])


def test_degenerate_grid_gives_standard_normals():
    batch = sample_gsp(OU, GridSpec(0.0, 1), 20000, 8)
    assert batch.values.shape == (20000, 1)
    assert abs(batch.values.mean()) <= 5 / math.sqrt(20000)
    assert abs(batch.values.var() - 1) <= 5 * math.sqrt(2 / 20000)


@pytest.mark.parametrize("bad", [{"n_paths": 0}, {"master_seed": -1}, {"n_paths": 2.5}])
def test_sample_gsp_rejects(bad):
    args = {"spec": OU, "grid": GridSpec(1.0, 11), "n_paths": 3, "master_seed": 1, **bad}
    with pytest.raises(DomainError):
        sample_gsp(**args)


@pytest.fixture(scope="module")
def ou_pairs():
    """First three grid values of 10^5 OU paths on 1000 points with step 0.01."""
    g = GridSpec(9.99, 1000)
    cols = []
    for chunk in range(5):
        batch = sample_gsp(OU, g, 20000, 1000 + chunk)
        assert batch.method == "circulant"
        cols.append(batch.values[:, [0, 1, 2, 500, 999]].copy())
    return np.concatenate(cols)


def test_ou_lag1_autocorrelation(ou_pairs):
    r, se = corr_with_se(ou_pairs[:, 0], ou_pairs[:, 1])
    assert abs(r - math.exp(-0.01)) <= 3 * se


def test_ou_unit_variance(ou_pairs):
    n = ou_pairs.shape[0]
    tol = 5 * math.sqrt(2 / n)
    assert np.all(np.abs(ou_pairs.var(axis=0) - 1.0) <= tol)
    assert np.all(np.abs(ou_pairs.mean(axis=0)) <= 5 / math.sqrt(n))


def test_ou_markov_partial_autocorrelation(ou_pairs):
    c = np.corrcoef(ou_pairs[:, :3].T)
    pacf = (c[0, 2] - c[0, 1] * c[1, 2]) / math.sqrt((1 - c[0, 1] ** 2) * (1 - c[1, 2] ** 2))
    assert abs(pacf) <= 5 / math.sqrt(ou_pairs.shape[0])


def test_lag_correlations_match_spec():
    spec = CorrelationSpec(Kind.IFBM_LAMPERTI, 0.3)
    g = GridSpec.from_step(2.0, 0.05)
    x = sample_gsp(spec, g, 20000, 11).values
    for k in (1, 5, 20, 40):
        r, se = corr_with_se(x[:, 0], x[:, k])
        assert abs(r - corr_eval(spec, k * 0.05)) <= 5 * se


# ------------------------------------------------------------ embedding


@pytest.mark.parametrize("kind,hs", [(Kind.IFBM_LAMPERTI, [0.25, 0.5, 0.75]),
                                     (Kind.RL_LAMPERTI, [0.25, 0.5, 1.5])])
@pytest.mark.parametrize("step,n", [(0.05, 4096), (0.05, 161), (0.005, 4096), (0.005, 1601)])
def test_circulant_embedding_clipping(kind, hs, step, n):
    for H in hs:
        f = factorize(spec_covariance(CorrelationSpec(kind, H), step), n)
        assert f.method == "circulant"
        assert f.clipped_mass <= 1e-6


def test_slow_decorrelation_falls_back_to_cholesky():
    # rho_{0.1} decorrelates on a scale ~10, longer than the 8-unit grid
    spec = CorrelationSpec(Kind.IFBM_LAMPERTI, 0.1)
    cov = spec_covariance(spec, 0.005)
    f = factorize(cov, 1601)
    assert f.method == "cholesky"
    low = f.lower[:200, :200]
    c = cov(200)
    target = np.array([[c[abs(i - j)] for j in range(200)] for i in range(200)])
    np.testing.assert_allclose(low @ low.T, target, atol=1e-7)


def test_cholesky_fallback_is_exact():
    # sin(k)/k is a valid correlation sequence with negative values
    c = np.sinc(np.arange(6) / np.pi)
    f = factorize(lambda k: c[:k], 6, allow_circulant=False)
    assert f.method == "cholesky" and f.jitter == 0.0
    np.testing.assert_allclose(f.lower @ f.lower.T, np.array(
        [[c[abs(i - j)] for j in range(6)] for i in range(6)]), atol=1e-14)


def test_embedding_failure():
    c = np.array([1.0, 1.5, 0.2])
    with pytest.raises(EmbeddingError):
        factorize(lambda k: np.resize(c, k), 3)


def test_draw_reproduces_covariance_exactly_for_circulant():
    # the circulant factor draws Gaussian vectors whose covariance is W W^T;
    # recover W by pushing unit complex noise through and compare with Toeplitz
    spec = CorrelationSpec(Kind.RL_LAMPERTI, 0.4)
    n = 64
    f = factorize(spec_covariance(spec, 0.05), n)
    assert f.method == "circulant"
    root = f._data
    m = root.size
    basis = np.fft.fft(np.diag(root), axis=1)[:, :n]
    cov = (basis.conj().T @ basis).real
    target = corr_eval(spec, 0.05 * np.abs(np.arange(n)[:, None] - np.arange(n)[None, :]))
    np.testing.assert_allclose(cov, target, atol=1e-12)
    assert m >= 2 * (n - 1)


# ------------------------------------------------------------------ fbm


def test_fbm_brownian_increments_uncorrelated():
    b = sample_fbm(0.5, GridSpec.from_step(1.0, 0.01), 40000, 3).values
    d = np.diff(b, axis=1)
    r, se = corr_with_se(d[:, 10], d[:, 11])
    assert abs(r) <= 3 * se
    assert np.all(b[:, 0] == 0.0)


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_fbm_terminal_variance(H):
    n = 40000
    b = sample_fbm(H, GridSpec.from_step(2.0, 0.01), n, 4).values
    v = b[:, -1].var()
    target = 2.0 ** (2 * H)
    assert abs(v - target) <= 5 * target * math.sqrt(2 / n)


def test_fbm_cross_covariance():
    n = 40000
    b = sample_fbm(0.7, GridSpec.from_step(2.0, 0.01), n, 5).values
    x, y = b[:, 100], b[:, 200]
    c = 2.0**0.4
    se = math.sqrt((1.0 * 2.0**1.4 + c * c) / n)
    assert abs(np.mean(x * y) - c) <= 5 * se


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_fbm_lamperti_empirical_correlation(H):
    grid = GridSpec.from_step(3.0, 1e-3)
    x = sample_fbm(H, grid, 8192, 60).values
    z = lamperti(grid.times, x, H, GridSpec(1.0, 3))
    spec = CorrelationSpec(Kind.FBM_LAMPERTI, H)
    for j, lag in ((1, 0.5), (2, 1.0)):
        r, se = corr_with_se(z[:, 0], z[:, j])
        assert abs(r - corr_eval(spec, lag)) <= 3 * se + 1e-2


def test_fgn_autocovariance_brownian():
    np.testing.assert_allclose(fgn_autocovariance(0.5, 0.01, 4), [0.01, 0, 0, 0], atol=1e-18)


def test_fbm_rejects_hurst():
    with pytest.raises(DomainError):
        sample_fbm(1.0, GridSpec(1.0, 3), 2, 1)


# ------------------------------------------------------------------- rl


def test_rl_brownian_equals_cumulative_noise():
    noise = np.random.default_rng(0).standard_normal((3, 50))
    out = rl_from_noise(0.5, noise, 0.01)
    np.testing.assert_array_equal(out[:, 1:], np.cumsum(0.1 * noise, axis=1))
    assert np.all(out[:, 0] == 0.0)


@pytest.mark.parametrize("H", [0.25, 0.75, 1.5])
def test_rl_weights_match_cell_integrals(H):
    # w_m = int_{(m-1) d}^{m d} u^{H-1/2} du / sqrt(d)
    from scipy import integrate

    d = 0.01
    w = rl_weights(H, d, 5)
    for m in range(1, 6):
        val, _ = integrate.quad(lambda u: u ** (H - 0.5), (m - 1) * d, m * d)
        assert w[m - 1] == pytest.approx(val / math.sqrt(d), rel=1e-10)


@pytest.mark.parametrize("H", [0.25, 0.5, 1.5])
def test_rl_variance(H):
    n = 20000
    x = sample_rl(H, GridSpec.from_step(1.0, 0.001), n, 6).values[:, -1]
    target = 1.0 / (2 * H)
    # the cell-integrated kernel loses a fraction ~ step^{2H} of the variance
    assert abs(x.var() - target) <= 5 * target * math.sqrt(2 / n) + 0.02 * target


def test_rl_three_halves_is_integrated_brownian_motion():
    # R^{3/2} = int_0^t B_s ds pathwise, under shared driving noise
    step = 1e-3
    noise = np.random.default_rng(12).standard_normal((200, 1000))
    r = rl_from_noise(1.5, noise, step)
    bm = np.concatenate([np.zeros((200, 1)), np.cumsum(math.sqrt(step) * noise, axis=1)], axis=1)
    trap = np.concatenate(
        [np.zeros((200, 1)), np.cumsum(0.5 * step * (bm[:, 1:] + bm[:, :-1]), axis=1)], axis=1
    )
    assert np.max(np.abs(r[:, -1] - trap[:, -1])) <= 1e-2
    # the cell weights make the two coincide to rounding
    np.testing.assert_allclose(r, trap, atol=1e-12)


def test_rl_rejects_hurst():
    with pytest.raises(DomainError):
        sample_rl(0.0, GridSpec(1.0, 3), 2, 1)


# ------------------------------------------------------------- lamperti


def test_lamperti_zero_path():
    t = np.linspace(0.0, 3.0, 301)
    out = lamperti(t, np.zeros((2, t.size)), 0.7, GridSpec(1.0, 11), 2.0)
    np.testing.assert_array_equal(out, 0.0)


@pytest.mark.parametrize("alpha", [0.3, 1.0, 1.5])
def test_lamperti_self_similar_path_is_constant(alpha):
    tau = GridSpec(1.0, 11)
    t = np.exp(tau.times)
    out = lamperti(t, t[None, :] ** alpha, alpha, tau, 1.7)
    np.testing.assert_allclose(out, 1.7, rtol=1e-13)


def test_lamperti_interpolates_linearly():
    t = np.array([0.0, 1.0, 2.0, 3.0])
    x = np.array([[0.0, 1.0, 3.0, 6.0]])
    tau = GridSpec(math.log(2.5), 2)
    out = lamperti(t, x, 1.0, tau)
    np.testing.assert_allclose(out, [[1.0, 4.5 / 2.5]], rtol=1e-14)


def test_lamperti_coverage_error():
    t = np.linspace(1.0, 2.0, 11)
    with pytest.raises(CoverageError):
        lamperti(t, np.zeros((1, 11)), 1.0, GridSpec(1.0, 3))
    with pytest.raises(CoverageError):
        lamperti(np.linspace(1.5, 5, 11), np.zeros((1, 11)), 1.0, GridSpec(1.0, 3))
    with pytest.raises(DomainError):
        lamperti(t, np.zeros((1, 11)), 0.0, GridSpec(0.5, 3))


def rl_lamperti_columns(H, n_paths, seed, step=1e-3, taus=(0.0, 0.5, 1.0)):
    """V at the given lags from sample_rl on a uniform t-grid over [0, 3]."""
    grid = GridSpec.from_step(3.0, step)
    t = grid.times
    out = []
    for chunk in range(0, n_paths, 8192):
        count = min(8192, n_paths - chunk)
        x = sample_rl(H, grid, count, seed + chunk).values
        out.append(lamperti(t, x, H, GridSpec(1.0, 3), math.sqrt(2 * H)))
    v = np.concatenate(out)
    return v


@pytest.fixture(scope="module")
def rl_v():
    return {H: rl_lamperti_columns(H, 16384, 40) for H in (0.25, 0.5, 1.5)}


def test_rl_lamperti_half_correlation(rl_v):
    v = rl_v[0.5]
    r, se = corr_with_se(v[:, 0], v[:, 2])
    assert abs(r - math.exp(-0.5)) <= 3 * se + 1e-2


@pytest.mark.parametrize("H", [0.25, 0.5, 1.5])
def test_rl_lamperti_cross_validation(rl_v, H):
    v = rl_v[H]
    for j, lag in ((1, 0.5), (2, 1.0)):
        r, se = corr_with_se(v[:, 0], v[:, j])
        assert abs(r - r_rl(H, lag)) <= 3 * se + 1e-2
    assert np.all(np.abs(v.var(axis=0) - 1.0) <= 5 * math.sqrt(2 / v.shape[0]) + 2e-2)


# ----------------------------------------------------------------- ifbm


@pytest.fixture(scope="module")
def ifbm_u():
    out = {}
    for H in (0.25, 0.5, 0.75):
        with warnings.catch_warnings():
            warnings.simplefilter("error", RefinementWarning)
            batch = sample_ifbm_lamperti(H, GridSpec(1.0, 3), 10000, 50)
        out[H] = batch
    return out


@pytest.mark.parametrize("H", [0.25, 0.5, 0.75])
def test_ifbm_unit_variance(ifbm_u, H):
    u = ifbm_u[H].values
    n = u.shape[0]
    assert np.all(np.abs(u.var(axis=0) - 1.0) <= 5 * math.sqrt(2 / n))


@pytest.mark.parametrize("H", [0.25, 0.5, 0.75])
def test_ifbm_cross_validation(ifbm_u, H):
    u = ifbm_u[H].values
    for j, lag in ((1, 0.5), (2, 1.0)):
        r, se = corr_with_se(u[:, 0], u[:, j])
        assert abs(r - rho_ifbm(H, lag)) <= 3 * se + 1e-2
    assert ifbm_u[H].extra["trapezoid_error"] <= 1e-3


def test_ifbm_degenerate_grid():
    batch = sample_ifbm_lamperti(0.4, GridSpec(0.0, 1), 20000, 9)
    x = batch.values[:, 0]
    assert batch.values.shape == (20000, 1)
    assert abs(x.var() - 1) <= 5 * math.sqrt(2 / 20000)


def test_ifbm_refinement_warning():
    with pytest.warns(RefinementWarning):
        sample_ifbm_lamperti(0.5, GridSpec(1.0, 2), 500, 1, rel_step=0.5)


def test_ifbm_joint_covariance_first_entries():
    # Var I_1 = 1/(2H+2); Cov(I_1, B_1) = int_0^1 (1 + s^{2H} - (1-s)^{2H}) / 2 ds = 1/2
    H = 0.3
    cov = _ifbm_joint_covariance(H, np.array([1.0, 2.0]))
    assert cov[0, 0] == pytest.approx(1 / (2 * H + 2), rel=1e-14)
    assert cov[0, 1] == pytest.approx(0.5, rel=1e-14)
    assert cov[1, 2] == pytest.approx(0.5 * (1 + 2 ** (2 * H) - 1), rel=1e-14)


# ---------------------------------------------------- refinement studies


@pytest.mark.parametrize("H", [0.25, 1.5])
def test_rl_refinement_rate(H):
    # exact covariance of the discretized process at t = 1, 2 from the cell weights;
    # the correlation gap shrinks like step^{min(2H, 2)}
    gaps = []
    for N in (250, 500, 1000, 2000):
        g = rl_weights(H, 1.0 / N, 2 * N)
        a, b = g[:N], g[: 2 * N]
        cov = np.dot(a, g[N : 2 * N])
        gaps.append(cov / math.sqrt(np.dot(a, a) * np.dot(b, b)) - r_rl(H, math.log(2.0)))
    ratios = [gaps[i] / gaps[i + 1] for i in range(3)]
    expected = 2.0 ** min(2 * H, 2.0)
    assert all(x > 0 for x in gaps)
    assert all(abs(q / expected - 1) <= 0.03 for q in ratios)


@pytest.mark.parametrize("H", [0.25, 0.5, 0.75])
def test_ifbm_refinement_rate(H):
    # exact covariance of (I_1 + trapezoid of B over [1, e]) against I_1
    gaps = []
    for rel in (8e-3, 4e-3, 2e-3, 1e-3):
        t, _ = _ifbm_time_grid(GridSpec(1.0, 2), rel)
        cov = _ifbm_joint_covariance(H, t)
        dt = np.diff(t)
        w = np.zeros((2, t.size + 1))
        w[:, 0] = 1.0
        w[1, 1:-1] += 0.5 * dt
        w[1, 2:] += 0.5 * dt
        c = w @ cov @ w.T
        gaps.append(abs(c[0, 1] / math.sqrt(c[0, 0] * c[1, 1]) - rho_ifbm(H, 1.0)))
    assert all(gaps[i] / gaps[i + 1] >= 2.0 for i in range(3))
    assert gaps[-1] <= 1e-5


# ---------------------------------------------------------------- output


@pytest.mark.parametrize("fmt", ["csv", "npz"])
def test_write_read_roundtrip(tmp_path, fmt):
    batch = sample_gsp(CorrelationSpec(Kind.RL_LAMPERTI, 0.6), GridSpec(1.0, 21), 5, 123)
    path = write_paths(batch, tmp_path / f"paths.{fmt}")
    values, meta = read_paths(path)
    np.testing.assert_array_equal(values, batch.values)
    assert meta["master_seed"] == 123
    assert meta["grid"]["points"] == 21
    assert meta["spec"]["kind"] == "rl"
    assert meta["method"] == "circulant"


def test_write_rejects_format(tmp_path):
    batch = sample_gsp(OU, GridSpec(1.0, 3), 1, 1)
    with pytest.raises(DomainError):
        write_paths(batch, tmp_path / "x.bin")


def test_metadata_reports_method():
    meta = sample_gsp(OU, GridSpec(1.0, 11), 2, 1).metadata()
    assert {"method", "clipped_mass", "jitter", "worker_count", "master_seed"} <= meta.keys()

"""Monte-Carlo persistence probabilities and exponent fits.

A path survives to time T if every grid value on [0, T] is strictly
negative; a value of exactly 0.0 counts as a crossing. Because only grid
points are inspected, crossings between nodes are missed and the estimate
of the continuous-time probability is biased upward. Finite-T and grid
effects therefore both pull the fitted exponent down.

Survival is counted with a staged Cholesky scheme: each path is generated
in stages of doubling length and dropped as soon as it crosses zero, so
normals are only drawn for paths still alive. This is exact, since the
first k values of ``L xi`` depend only on the first k normals.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .correlation import CorrelationSpec, Kind
from .errors import (
    BudgetInfeasibleError,
    DomainError,
    EmbeddingError,
    InsufficientDataError,
)
from .sampler import (
    BLOCK,
    GridSpec,
    block_rng,
    cholesky_factor,
    factorize,
    spec_covariance,
)

__all__ = [
    "MIN_SURVIVORS",
    "BIAS_NOTE",
    "PersistenceEstimate",
    "ExponentFit",
    "CurvePoint",
    "SurvivalRun",
    "SubadditivityReport",
    "derive_seed",
    "first_crossings",
    "persistence_probability",
    "persistence_sweep",
    "fit_exponent",
    "estimate_exponent",
    "subadditivity_check",
    "family_spec",
    "exponent_curve",
    "rescaled_exponent",
]

MIN_SURVIVORS = 10
Z95 = 1.959963984540054
DEFAULT_STEP = 0.005
DEFAULT_WINDOW = (2.0, 8.0)
DEFAULT_TRIALS = 10**6
# the staged scheme keeps a dense n x n factor; above this use full paths
STAGED_MAX_POINTS = 4097
FIRST_STAGE = 16
JACKKNIFE_GROUPS = 20
BIAS_NOTE = (
    "upward: only grid values are checked, so crossings between grid points "
    "are missed and the continuous-time probability is overestimated"
)


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed derived from ``seed`` and integer ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class PersistenceEstimate:
    """Fraction of ``n_trials`` paths staying negative on ``[0, T]``.

    ``p_hat`` defaults to ``n_survive / n_trials``; it may be given
    explicitly for synthetic inputs to :func:`fit_exponent`.
    """

    T: float
    n_trials: int
    n_survive: int
    p_hat: float | None = None
    step: float | None = None
    seed: int | None = None
    method: str = ""
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n_trials < 1 or not (0 <= self.n_survive <= self.n_trials):
            raise DomainError("need 0 <= n_survive <= n_trials and n_trials >= 1")
        if self.p_hat is None:
            object.__setattr__(self, "p_hat", self.n_survive / self.n_trials)
        elif not (0.0 <= self.p_hat <= 1.0):
            raise DomainError("p_hat must lie in [0, 1]")

    @property
    def log_p(self) -> float:
        return math.log(self.p_hat) if self.p_hat > 0.0 else -math.inf

    @property
    def std_error(self) -> float:
        """Binomial standard error of ``p_hat``."""
        p = self.p_hat
        return math.sqrt(p * (1.0 - p) / self.n_trials)

    @property
    def ci_log(self) -> float | None:
        """Half-width of the delta-method 95% interval on ``ln p``.

        ``None`` when fewer than ``MIN_SURVIVORS`` paths survive.
        """
        if self.n_survive < MIN_SURVIVORS or self.p_hat <= 0.0:
            return None
        p = self.p_hat
        return Z95 * math.sqrt((1.0 - p) / (self.n_trials * p))

    def as_record(self) -> dict:
        return {
            "T": self.T,
            "n_trials": self.n_trials,
            "n_survive": self.n_survive,
            "p_hat": self.p_hat,
            "log_p": self.log_p,
            "ci_log": self.ci_log,
            "step": self.step,
            "seed": self.seed,
            "method": self.method,
            "bias": BIAS_NOTE,
            **self.metadata,
        }


@dataclass(frozen=True)
class ExponentFit:
    """Slope of ``-ln p_hat(T)`` against T.

    ``stderr_method`` is ``"wls"`` (residual-scaled weighted least squares)
    or ``"jackknife"`` (delete-a-group jackknife over RNG blocks, used when
    all points come from the same paths).
    """

    theta_hat: float
    intercept: float
    stderr: float
    window: tuple
    points: list
    stderr_method: str = "wls"

    def as_record(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "stderr_method": self.stderr_method,
            "window": list(self.window),
            "points": [p.as_record() for p in self.points],
        }


@dataclass(frozen=True)
class CurvePoint:
    """Exponent estimate for one Hurst index.

    ``status`` is ``"ok"`` or the name of the failure; failed points carry
    NaN estimates. ``reference`` holds exact companion values such as
    ``H(1-H)`` and the bracketing bounds for the IFBM family.
    """

    H: float
    theta_hat: float
    stderr: float
    family: str
    status: str = "ok"
    reference: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SurvivalRun:
    """First-crossing indices of every simulated path.

    ``first[i]`` is the first grid index with a nonnegative value, or
    ``grid.points`` if the path never crosses. Paths are ordered by RNG
    block, ``BLOCK`` per block.
    """

    first: np.ndarray
    grid: GridSpec
    spec: CorrelationSpec
    seed: int
    method: str
    jitter: float = 0.0
    clipped_mass: float = 0.0

    def survivors(self, T: float, mask=None) -> int:
        k = self.grid.index_of(T)
        first = self.first if mask is None else self.first[mask]
        return int(np.count_nonzero(first > k))

    def estimate(self, T: float) -> PersistenceEstimate:
        return PersistenceEstimate(
            T=float(T),
            n_trials=int(self.first.size),
            n_survive=self.survivors(T),
            step=self.grid.spacing if self.grid.points > 1 else None,
            seed=self.seed,
            method=self.method,
            metadata={"spec": self.spec.describe(), "jitter": self.jitter,
                      "clipped_mass": self.clipped_mass},
        )


def _first_crossing_staged(low, rng, count):
    n = low.shape[0]
    first = np.full(count, n, dtype=np.int64)
    alive = np.arange(count)
    xi = np.empty((count, 0))
    a, size = 0, FIRST_STAGE
    while a < n and alive.size:
        b = min(n, a + size)
        xi = np.hstack([xi, rng.standard_normal((alive.size, b - a))])
        x = xi @ low[a:b, :b].T
        crossed = x >= 0.0
        hit = crossed.any(axis=1)
        first[alive[hit]] = a + np.argmax(crossed[hit], axis=1)
        alive = alive[~hit]
        xi = xi[~hit]
        a, size = b, 2 * size
    return first


def _first_crossing_full(factor, rng, count):
    x = factor.draw(rng, count)
    crossed = x >= 0.0
    hit = crossed.any(axis=1)
    return np.where(hit, np.argmax(crossed, axis=1), factor.n).astype(np.int64)


def _plan(spec, grid):
    n = grid.points
    cov = spec_covariance(spec, grid.spacing if n > 1 else 1.0)
    if n <= STAGED_MAX_POINTS:
        try:
            return "staged-cholesky", cholesky_factor(scipy.linalg.toeplitz(cov(n)))
        except EmbeddingError:
            pass
    factor = factorize(cov, n)
    return "full-" + factor.method, factor


_WORKER_PLAN = None


def _init_worker(plan):
    global _WORKER_PLAN
    _WORKER_PLAN = plan


def _run_block(plan, seed, block, count):
    method, factor = plan
    rng = block_rng(seed, block)
    if method == "staged-cholesky":
        return _first_crossing_staged(factor.lower, rng, count)
    return _first_crossing_full(factor, rng, count)


def _run_block_worker(args):
    return _run_block(_WORKER_PLAN, *args)


def first_crossings(
    spec: CorrelationSpec, grid: GridSpec, n_trials: int, seed: int, workers: int = 1
) -> SurvivalRun:
    """Simulate ``n_trials`` paths on ``grid`` and record first crossings."""
    if not isinstance(spec, CorrelationSpec):
        raise DomainError("spec must be a CorrelationSpec")
    if isinstance(n_trials, bool) or int(n_trials) != n_trials or n_trials < 1:
        raise DomainError("n_trials must be a positive integer")
    if isinstance(seed, bool) or int(seed) != seed or seed < 0:
        raise DomainError("seed must be a nonnegative integer")
    n_trials, seed, workers = int(n_trials), int(seed), max(1, int(workers))
    plan = _plan(spec, grid)
    tasks = [(seed, b, min(BLOCK, n_trials - s)) for b, s in enumerate(range(0, n_trials, BLOCK))]
    if workers == 1 or len(tasks) == 1:
        parts = [_run_block(plan, *t) for t in tasks]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(plan,)) as pool:
            parts = list(pool.map(_run_block_worker, tasks, chunksize=4))
    factor = plan[1]
    return SurvivalRun(
        first=np.concatenate(parts),
        grid=grid,
        spec=spec,
        seed=seed,
        method=plan[0],
        jitter=factor.jitter,
        clipped_mass=factor.clipped_mass,
    )


def persistence_probability(
    spec: CorrelationSpec, T: float, step: float, n_trials: int, seed: int, workers: int = 1
) -> PersistenceEstimate:
    """Estimate ``P(Z_t < 0 for all grid t in [0, T])``.

    Raises
    ------
    GridTooLargeError
        If ``T / step + 1`` exceeds the grid limit.
    """
    grid = GridSpec.from_step(T, step)
    run = first_crossings(spec, grid, n_trials, seed, workers)
    return run.estimate(grid.horizon)


def persistence_sweep(
    spec: CorrelationSpec, horizons, step: float, n_trials: int, seed: int, workers: int = 1
) -> tuple[list[PersistenceEstimate], SurvivalRun]:
    """Estimates at several horizons from one set of paths up to the largest."""
    horizons = sorted(float(t) for t in horizons)
    if not horizons:
        raise DomainError("no horizons given")
    grid = GridSpec.from_step(horizons[-1], step)
    run = first_crossings(spec, grid, n_trials, seed, workers)
    return [run.estimate(t) for t in horizons], run


def _in_window(estimates, window):
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise DomainError("window must satisfy T_min < T_max")
    tol = 1e-9 * max(1.0, abs(hi))
    return [e for e in estimates if lo - tol <= e.T <= hi + tol]


def _wls(x, y, sigma):
    """Slope, intercept, residual-scaled slope stderr via numpy.polyfit."""
    x, y, sigma = map(np.asarray, (x, y, sigma))
    if np.any(sigma == 0.0):
        # noiseless points: fall back to unweighted regression
        sigma = np.ones_like(sigma)
    coef, cov = np.polyfit(x, y, 1, w=1.0 / sigma, cov=True)
    return float(coef[0]), float(coef[1]), float(math.sqrt(max(cov[0, 0], 0.0)))


def fit_exponent(estimates, window=DEFAULT_WINDOW) -> ExponentFit:
    """Weighted least squares of ``-ln p_hat`` on T inside ``window``.

    Weights are ``1 / ci_log^2``. The slope error is scaled by the observed
    scatter (reduced chi-square), so points exactly on a line give zero.

    Raises
    ------
    InsufficientDataError
        Fewer than three estimates inside the window.
    BudgetInfeasibleError
        A point in the window has fewer than ``MIN_SURVIVORS`` survivors.
    """
    pts = sorted(_in_window(list(estimates), window), key=lambda e: e.T)
    if len(pts) < 3:
        raise InsufficientDataError(f"{len(pts)} estimates inside the window, need 3")
    short = [e.T for e in pts if e.n_survive < MIN_SURVIVORS or e.p_hat <= 0.0]
    if short:
        raise BudgetInfeasibleError(
            f"fewer than {MIN_SURVIVORS} survivors at T = {short}; increase the trial budget"
        )
    x = [e.T for e in pts]
    y = [-e.log_p for e in pts]
    sigma = [e.ci_log for e in pts]
    slope, intercept, se = _wls(x, y, sigma)
    return ExponentFit(slope, intercept, se, (float(window[0]), float(window[1])), pts)


def _default_horizons(window, step):
    lo, hi = float(window[0]), float(window[1])
    ts = [float(t) for t in range(math.ceil(lo), math.floor(hi) + 1)]
    if len(ts) < 3:
        ts = list(np.linspace(lo, hi, 5))
    # snap onto the grid
    return [round(t / step) * step for t in ts]


def estimate_exponent(
    spec: CorrelationSpec,
    step: float = DEFAULT_STEP,
    window=DEFAULT_WINDOW,
    n_trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    horizons=None,
    workers: int = 1,
    groups: int = JACKKNIFE_GROUPS,
) -> ExponentFit:
    """Persistence exponent of ``spec`` from one nested sweep of paths.

    All horizons share the same paths, so their errors are correlated; the
    reported standard error is a delete-a-group jackknife over RNG blocks.
    """
    if horizons is None:
        horizons = _default_horizons(window, step)
    estimates, run = persistence_sweep(spec, horizons, step, n_trials, seed, workers)
    fit = fit_exponent(estimates, window)
    n_blocks = math.ceil(run.first.size / BLOCK)
    groups = min(int(groups), n_blocks)
    if groups < 2:
        return fit
    block_of = np.arange(run.first.size) // BLOCK
    group_of = block_of * groups // n_blocks
    thetas = []
    for g in range(groups):
        keep = group_of != g
        kept = int(np.count_nonzero(keep))
        sub = [
            PersistenceEstimate(e.T, kept, run.survivors(e.T, keep)) for e in fit.points
        ]
        try:
            thetas.append(fit_exponent(sub, window).theta_hat)
        except InsufficientDataError:
            return fit
    thetas = np.array(thetas)
    se = math.sqrt((groups - 1) / groups * np.sum((thetas - thetas.mean()) ** 2))
    return ExponentFit(
        fit.theta_hat, fit.intercept, se, fit.window, fit.points, stderr_method="jackknife"
    )


@dataclass(frozen=True)
class SubadditivityReport:
    """Check of ``p(T1 + T2) >= p(T1) p(T2)`` up to three propagated std errors."""

    p1: PersistenceEstimate
    p2: PersistenceEstimate
    p12: PersistenceEstimate
    margin: float
    tolerance: float

    @property
    def holds(self) -> bool:
        return self.margin >= -self.tolerance


def subadditivity_check(spec, T1, T2, step, n_trials, seed, workers=1) -> SubadditivityReport:
    """Estimate the three probabilities from independent runs and compare."""
    if T1 < 0 or T2 < 0:
        raise DomainError("horizons must be nonnegative")
    est = [
        persistence_probability(spec, t, step, n_trials, derive_seed(seed, k), workers)
        for k, t in enumerate((T1, T2, T1 + T2))
    ]
    p1, p2, p12 = est
    margin = p12.p_hat - p1.p_hat * p2.p_hat
    se = math.sqrt(
        p12.std_error**2 + (p2.p_hat * p1.std_error) ** 2 + (p1.p_hat * p2.std_error) ** 2
    )
    return SubadditivityReport(p1, p2, p12, margin, 3.0 * se)


_FAMILIES = {
    "ifbm": Kind.IFBM_LAMPERTI,
    "rl": Kind.RL_LAMPERTI,
    "fbm": Kind.FBM_LAMPERTI,
    "ou": Kind.OU,
    "cosh": Kind.COSH_LIMIT,
    "slepian": Kind.FRACTIONAL_SLEPIAN,
}


def family_spec(family, H=None) -> CorrelationSpec:
    """Correlation spec for a family name (``ifbm``, ``rl``, ``fbm``, ``ou``, ...)."""
    kind = Kind.parse(family)
    if kind in (Kind.OU, Kind.COSH_LIMIT):
        return CorrelationSpec(kind)
    if H is None:
        raise DomainError(f"family {kind.value} needs a Hurst index")
    return CorrelationSpec(kind, float(H))


def _reference(family, H):
    if family is Kind.IFBM_LAMPERTI:
        m = min(H, 1.0 - H)
        return {"conjecture": H * (1.0 - H), "lower_bound": m / 2.0, "upper_bound": m}
    if family is Kind.FBM_LAMPERTI:
        return {"exact": 1.0 - H}
    if family is Kind.RL_LAMPERTI and H == 0.5:
        return {"exact": 0.5}
    return {}


def exponent_curve(
    family,
    hurst_values,
    budget: int = DEFAULT_TRIALS,
    step: float = DEFAULT_STEP,
    window=DEFAULT_WINDOW,
    seed: int = 0,
    workers: int = 1,
) -> list[CurvePoint]:
    """Exponent estimates along a list of Hurst indices.

    Points whose budget is infeasible or whose sampler fails are recorded
    with NaN estimates and a status string; the sweep continues.
    """
    kind = Kind.parse(family)
    out = []
    for i, H in enumerate(hurst_values):
        H = float(H)
        ref = _reference(kind, H)
        try:
            spec = family_spec(kind, H)
            fit = estimate_exponent(spec, step, window, budget, derive_seed(seed, i), workers=workers)
            out.append(CurvePoint(H, fit.theta_hat, fit.stderr, kind.value, "ok", ref))
        except BudgetInfeasibleError:
            out.append(CurvePoint(H, math.nan, math.nan, kind.value, "budget-infeasible", ref))
        except (EmbeddingError, InsufficientDataError, DomainError) as exc:
            out.append(CurvePoint(H, math.nan, math.nan, kind.value, type(exc).__name__, ref))
    return out


def rescaled_exponent(
    family,
    H,
    gamma: float,
    budget: int = DEFAULT_TRIALS,
    step: float = DEFAULT_STEP,
    window=DEFAULT_WINDOW,
    seed: int = 0,
    workers: int = 1,
) -> ExponentFit:
    """Exponent of the family's correlation evaluated at ``tau / gamma``.

    The population value is ``theta / gamma``; ``gamma = H`` turns the
    IFBM exponent into ``theta_I(H) / H``.
    """
    spec = family_spec(family, H).rescaled(gamma)
    return estimate_exponent(spec, step, window, budget, seed, workers=workers)

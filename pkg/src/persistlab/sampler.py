"""Exact Gaussian path samplers.

Stationary paths are drawn from a factorization of the Toeplitz covariance
``C_ij = c_|i-j|``: circulant embedding (one complex FFT yields two
independent paths) when the embedding is nonnegative, otherwise a Cholesky
factor with escalating diagonal jitter.

Random numbers come in fixed blocks of ``BLOCK`` paths; block ``b`` draws
from ``PCG64(SeedSequence(master_seed, spawn_key=(b,)))``. Values therefore
do not depend on how many worker processes share the blocks.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.signal

from .correlation import CorrelationSpec, Kind, corr_eval
from .errors import CoverageError, DomainError, EmbeddingError, GridTooLargeError

__all__ = [
    "BLOCK",
    "MAX_POINTS",
    "GridSpec",
    "StationaryPath",
    "PathBatch",
    "Factor",
    "factorize",
    "cholesky_factor",
    "spec_covariance",
    "draw_blocks",
    "fgn_autocovariance",
    "rl_weights",
    "block_rng",
    "sample_gsp",
    "sample_fbm",
    "sample_rl",
    "rl_from_noise",
    "sample_ifbm_lamperti",
    "lamperti",
    "RefinementWarning",
    "write_paths",
    "read_paths",
]

BLOCK = 1024
MAX_POINTS = 100_000
CLIP_TOL = 1e-9
JITTERS = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)
# embeddings are retried on longer circulants up to this factor
MAX_PADDING = 8
# Richardson estimate of the trapezoid error above which a warning is raised
REFINEMENT_TOL = 1e-3
# automatic step halvings before a RefinementWarning
MAX_HALVINGS = 2


class RefinementWarning(UserWarning):
    """The integration grid is too coarse for the requested accuracy."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``{0, dt, ..., horizon}`` with ``points`` nodes.

    A single-node grid is allowed for ``horizon == 0``.
    """

    horizon: float
    points: int

    def __post_init__(self):
        horizon = float(self.horizon)
        points = int(self.points)
        if not math.isfinite(horizon) or horizon < 0.0:
            raise DomainError("horizon must be finite and nonnegative")
        if points != self.points:
            raise DomainError("points must be an integer")
        if horizon == 0.0:
            if points != 1:
                raise DomainError("a zero horizon has exactly one grid point")
        elif points < 2:
            raise DomainError("a grid needs at least two points")
        if points > MAX_POINTS:
            raise GridTooLargeError(f"{points} grid points exceed the limit {MAX_POINTS}")
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "points", points)

    @classmethod
    def from_step(cls, horizon: float, step: float) -> "GridSpec":
        """Grid with spacing ``step``; ``horizon / step`` must be an integer."""
        horizon, step = float(horizon), float(step)
        if not (math.isfinite(step) and step > 0.0):
            raise DomainError("step must be positive")
        if horizon == 0.0:
            return cls(0.0, 1)
        ratio = horizon / step
        if not math.isfinite(ratio) or ratio + 1 > MAX_POINTS:
            raise GridTooLargeError(
                f"horizon/step + 1 = {ratio + 1:.6g} exceeds the limit {MAX_POINTS}"
            )
        k = round(ratio)
        if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
            raise DomainError("horizon must be a positive integer multiple of step")
        return cls(horizon, k + 1)

    @property
    def spacing(self) -> float:
        return self.horizon / (self.points - 1) if self.points > 1 else 0.0

    @property
    def times(self) -> np.ndarray:
        if self.points == 1:
            return np.zeros(1)
        return np.linspace(0.0, self.horizon, self.points)

    def index_of(self, t: float) -> int:
        """Index of the node at time ``t``, which must lie on the grid."""
        if self.points == 1:
            if t != 0.0:
                raise DomainError("time is not on the grid")
            return 0
        k = round(t / self.spacing)
        if not (0 <= k < self.points) or abs(k * self.spacing - t) > 1e-9 * max(1.0, t):
            raise DomainError(f"time {t} is not on the grid")
        return k

    def describe(self) -> dict:
        return {"horizon": self.horizon, "points": self.points, "spacing": self.spacing}


@dataclass(frozen=True)
class StationaryPath:
    """One sampled path; ``index`` is its position within the batch."""

    grid: GridSpec
    values: np.ndarray
    seed: int
    index: int
    spec: CorrelationSpec | None


@dataclass
class PathBatch:
    """Paths stored row-wise in ``values`` (shape ``(n_paths, points)``).

    ``method`` is ``"circulant"``, ``"cholesky"`` or a description of the
    direct simulation; ``clipped_mass`` is the fraction of circulant
    spectral mass removed by clipping and ``jitter`` the diagonal shift
    used by Cholesky.
    """

    values: np.ndarray
    grid: GridSpec
    spec: CorrelationSpec | None
    master_seed: int
    worker_count: int = 1
    method: str = ""
    clipped_mass: float = 0.0
    jitter: float = 0.0
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i) -> StationaryPath:
        i = range(len(self))[i]
        return StationaryPath(self.grid, self.values[i], self.master_seed, i, self.spec)

    @property
    def paths(self):
        return [self[i] for i in range(len(self))]

    def metadata(self) -> dict:
        return {
            "spec": None if self.spec is None else self.spec.describe(),
            "grid": self.grid.describe(),
            "n_paths": len(self),
            "master_seed": self.master_seed,
            "worker_count": self.worker_count,
            "method": self.method,
            "clipped_mass": self.clipped_mass,
            "jitter": self.jitter,
            **self.extra,
        }


def block_rng(master_seed: int, block: int) -> np.random.Generator:
    """Generator for block ``block`` of the stream rooted at ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.PCG64(ss))


def _check_seed(seed):
    if isinstance(seed, bool) or int(seed) != seed or seed < 0:
        raise DomainError("seed must be a nonnegative integer")
    return int(seed)


def _check_count(n, name="n_paths"):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"{name} must be a positive integer")
    return int(n)


class Factor:
    """A square root of a Toeplitz covariance, able to produce samples.

    Use :func:`factorize` to build one.
    """

    def __init__(self, n, method, data, clipped_mass=0.0, jitter=0.0):
        self.n = n
        self.method = method
        self.clipped_mass = clipped_mass
        self.jitter = jitter
        # circulant: sqrt(eigenvalues / m); cholesky: lower factor
        self._data = data

    @property
    def lower(self) -> np.ndarray:
        if self.method != "cholesky":
            raise AttributeError("only Cholesky factors expose a lower triangle")
        return self._data

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """``count`` samples as rows of a ``(count, n)`` array."""
        if self.method == "circulant":
            root = self._data
            m = root.size
            pairs = (count + 1) // 2
            z = rng.standard_normal((pairs, 2 * m)).view(np.complex128)
            w = scipy.fft.fft(root * z, axis=1)[:, : self.n]
            out = np.empty((2 * pairs, self.n))
            out[0::2] = w.real
            out[1::2] = w.imag
            return out[:count]
        z = rng.standard_normal((count, self.n))
        return z @ self._data.T


def _circulant_root(cov_fn, n):
    """Try embeddings of growing length; return (root, clipped) or None."""
    if n == 1:
        return None
    base = 2 * (n - 1)
    tried = set()
    for factor in (1, 2, 4, MAX_PADDING):
        m = scipy.fft.next_fast_len(base * factor, real=True)
        m += m % 2
        if m in tried:
            continue
        tried.add(m)
        half = m // 2
        c = cov_fn(half + 1)
        row = np.concatenate([c, c[-2:0:-1]])
        lam = scipy.fft.rfft(row).real
        lam = np.concatenate([lam, lam[-2:0:-1]])
        low = lam.min()
        if low >= -CLIP_TOL * max(1.0, c[0]):
            neg = lam < 0.0
            clipped = float(-lam[neg].sum() / lam.sum()) if neg.any() else 0.0
            lam[neg] = 0.0
            return np.sqrt(lam / m), clipped
    return None


def factorize(cov_fn, n, allow_circulant=True) -> Factor:
    """Factor the Toeplitz covariance whose first row is ``cov_fn(k)[:n]``.

    ``cov_fn(k)`` must return the covariance at lags ``0..k-1``.
    """
    if allow_circulant:
        found = _circulant_root(cov_fn, n)
        if found is not None:
            root, clipped = found
            return Factor(n, "circulant", root, clipped_mass=clipped)
    c = cov_fn(n)
    mat = scipy.linalg.toeplitz(c)
    return cholesky_factor(mat)


def cholesky_factor(mat) -> Factor:
    """Cholesky factor of ``mat`` with diagonal jitter escalation."""
    n = mat.shape[0]
    scale = float(np.max(np.diag(mat)))
    for jitter in JITTERS:
        try:
            low = np.linalg.cholesky(mat + jitter * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(low)):
            return Factor(n, "cholesky", low, jitter=jitter)
    raise EmbeddingError(
        f"covariance of size {n} is not positive definite even with jitter {JITTERS[-1]}"
    )


def spec_covariance(spec: CorrelationSpec, step: float):
    """Covariance function for :func:`factorize` from a correlation spec."""

    def cov(k):
        return np.asarray(corr_eval(spec, step * np.arange(k)), dtype=float)

    return cov


_WORKER_FACTOR = None


def _init_worker(factor):
    global _WORKER_FACTOR
    _WORKER_FACTOR = factor


def _draw_block(args):
    master_seed, block, count = args
    return _WORKER_FACTOR.draw(block_rng(master_seed, block), count)


def draw_blocks(factor: Factor, n_paths: int, master_seed: int, workers: int = 1) -> np.ndarray:
    """``n_paths`` samples in fixed-size RNG blocks, in block order."""
    tasks = []
    for b, start in enumerate(range(0, n_paths, BLOCK)):
        tasks.append((master_seed, b, min(BLOCK, n_paths - start)))
    if workers <= 1 or len(tasks) == 1:
        parts = [factor.draw(block_rng(s, b), c) for s, b, c in tasks]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(factor,)) as pool:
            parts = list(pool.map(_draw_block, tasks))
    return np.concatenate(parts, axis=0)


def sample_gsp(
    spec: CorrelationSpec, grid: GridSpec, n_paths: int, master_seed: int, workers: int = 1
) -> PathBatch:
    """Exact samples of the stationary Gaussian process ``spec`` on ``grid``.

    Raises
    ------
    EmbeddingError
        If neither a nonnegative circulant embedding nor a (jittered)
        Cholesky factor exists.
    """
    n_paths = _check_count(n_paths)
    master_seed = _check_seed(master_seed)
    workers = _check_count(workers, "workers")
    if grid.points == 1:
        values = np.concatenate(
            [block_rng(master_seed, b).standard_normal((min(BLOCK, n_paths - s), 1))
             for b, s in enumerate(range(0, n_paths, BLOCK))]
        )
        return PathBatch(values, grid, spec, master_seed, workers, "direct")
    factor = factorize(spec_covariance(spec, grid.spacing), grid.points)
    values = draw_blocks(factor, n_paths, master_seed, workers)
    return PathBatch(
        values, grid, spec, master_seed, workers, factor.method, factor.clipped_mass, factor.jitter
    )


def _check_hurst_unit(H):
    H = float(H)
    if not (0.0 < H < 1.0):
        raise DomainError("Hurst index must lie in (0, 1)")
    return H


def fgn_autocovariance(H: float, step: float, k: int) -> np.ndarray:
    """Autocovariance of fractional Gaussian noise with spacing ``step`` at lags ``0..k-1``."""
    lag = np.arange(k, dtype=float)
    h2 = 2.0 * H
    return 0.5 * step**h2 * (np.abs(lag + 1) ** h2 - 2.0 * lag**h2 + np.abs(lag - 1) ** h2)


def sample_fbm(H, grid: GridSpec, n_paths: int, seed: int, workers: int = 1) -> PathBatch:
    """Fractional Brownian motion on ``grid`` via exact fGn sampling and summation."""
    H = _check_hurst_unit(H)
    n_paths = _check_count(n_paths)
    seed = _check_seed(seed)
    if grid.points == 1:
        return PathBatch(np.zeros((n_paths, 1)), grid, None, seed, workers, "direct")
    step = grid.spacing
    factor = factorize(lambda k: fgn_autocovariance(H, step, k), grid.points - 1)
    incr = draw_blocks(factor, n_paths, seed, workers)
    values = np.zeros((n_paths, grid.points))
    np.cumsum(incr, axis=1, out=values[:, 1:])
    return PathBatch(
        values, grid, None, seed, workers, "fgn-" + factor.method, factor.clipped_mass,
        factor.jitter, extra={"process": "fbm", "hurst": H},
    )


def rl_weights(H: float, step: float, count: int) -> np.ndarray:
    """Weights on standard normals: ``step^H ((m^p - (m-1)^p) / p)``, ``m = 1..count``.

    Each weight is the mean of the kernel ``(t-s)^(H-1/2)`` over one cell
    times ``sqrt(step)``, the scale of the Brownian increment.
    """
    p = H + 0.5
    m = np.arange(1, count + 1, dtype=float)
    return step**H * (m**p - (m - 1.0) ** p) / p


def rl_from_noise(H, noise: np.ndarray, step: float) -> np.ndarray:
    """RL paths driven by standard normals ``noise`` of shape ``(n_paths, n - 1)``.

    Column ``j`` of ``noise`` scaled by ``sqrt(step)`` is the Brownian
    increment over ``[j step, (j+1) step]``. Returns ``(n_paths, n)`` with a
    zero first column.
    """
    H = float(H)
    if not (math.isfinite(H) and H > 0.0):
        raise DomainError("Hurst index must be positive")
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    n_paths, cells = noise.shape
    out = np.zeros((n_paths, cells + 1))
    if cells == 0:
        return out
    if H == 0.5:
        np.cumsum(math.sqrt(step) * noise, axis=1, out=out[:, 1:])
        return out
    g = rl_weights(H, step, cells)
    # R_k = sum_{m=1}^{k} g_m xi_{k-m}
    out[:, 1:] = scipy.signal.fftconvolve(noise, g[None, :], axes=1)[:, :cells]
    return out


def sample_rl(H, grid: GridSpec, n_paths: int, seed: int, workers: int = 1) -> PathBatch:
    """Riemann-Liouville process ``int_0^t (t-s)^(H-1/2) dB_s`` on ``grid``.

    The kernel is integrated exactly over each cell of the grid, which
    removes its singularity for ``H < 1/2``.
    """
    H = float(H)
    if not (math.isfinite(H) and H > 0.0):
        raise DomainError("Hurst index must be positive")
    n_paths = _check_count(n_paths)
    seed = _check_seed(seed)
    cells = grid.points - 1
    parts = []
    for b, start in enumerate(range(0, n_paths, BLOCK)):
        count = min(BLOCK, n_paths - start)
        noise = block_rng(seed, b).standard_normal((count, cells))
        parts.append(rl_from_noise(H, noise, grid.spacing))
    values = np.concatenate(parts, axis=0)
    return PathBatch(
        values, grid, None, seed, 1, "rl-cell-kernel", extra={"process": "rl", "hurst": H}
    )


def lamperti(t, X, alpha, tau_grid: GridSpec, normalizer: float = 1.0) -> np.ndarray:
    """``normalizer * exp(-alpha tau) X_{exp(tau)}`` on ``tau_grid``.

    ``X`` holds paths row-wise on the increasing times ``t``; values between
    nodes are linearly interpolated.

    Raises
    ------
    CoverageError
        If ``t`` does not span ``[1, exp(horizon)]``.
    """
    if not (alpha > 0.0):
        raise DomainError("alpha must be positive")
    t = np.asarray(t, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    tau = tau_grid.times
    target = np.exp(tau)
    tol = 1e-12 * target[-1]
    if t[0] > 1.0 + tol or t[-1] < target[-1] - tol:
        raise CoverageError(
            f"time grid [{t[0]}, {t[-1]}] does not span [1, {target[-1]}]"
        )
    target = np.clip(target, t[0], t[-1])
    idx = np.clip(np.searchsorted(t, target, side="right") - 1, 0, t.size - 2)
    w = (target - t[idx]) / (t[idx + 1] - t[idx])
    vals = X[:, idx] * (1.0 - w) + X[:, idx + 1] * w
    return normalizer * np.exp(-alpha * tau) * vals


def _ifbm_time_grid(tau_grid: GridSpec, rel_step: float):
    """Geometric t-grid over ``[1, e^T]`` whose every ``sub``-th node is ``e^{tau_k}``."""
    if tau_grid.points == 1:
        return np.ones(1), 1
    d = tau_grid.spacing
    sub = max(2, math.ceil(d / math.log1p(rel_step)))
    sub += sub % 2
    fine = np.linspace(0.0, tau_grid.horizon, (tau_grid.points - 1) * sub + 1)
    return np.exp(fine), sub


def _ifbm_joint_covariance(H, t):
    """Covariance of ``(I_1, B_{t_0}, ..., B_{t_m})`` for ``t >= 1``."""
    h2 = 2.0 * H
    m = t.size
    cov = np.empty((m + 1, m + 1))
    cov[0, 0] = 1.0 / (h2 + 2.0)
    cross = 0.5 * (t**h2 + 1.0 / (h2 + 1.0) - (t ** (h2 + 1.0) - (t - 1.0) ** (h2 + 1.0)) / (h2 + 1.0))
    cov[0, 1:] = cross
    cov[1:, 0] = cross
    tt = t[:, None]
    ss = t[None, :]
    cov[1:, 1:] = 0.5 * (tt**h2 + ss**h2 - np.abs(tt - ss) ** h2)
    return cov


def _ifbm_pass(H, tau_grid, n_paths, seed, rel_step, workers):
    """One simulation at relative step ``rel_step``; returns (values, err, sub, jitter)."""
    norm = math.sqrt(2.0 * (1.0 + H))
    t, sub = _ifbm_time_grid(tau_grid, rel_step)
    factor = cholesky_factor(_ifbm_joint_covariance(H, t))
    joint = draw_blocks(factor, n_paths, seed, workers)
    i1 = joint[:, 0]
    b = joint[:, 1:]
    if t.size == 1:
        return norm * i1[:, None], 0.0, 1, factor.jitter

    dt = np.diff(t)
    fine = np.zeros_like(b)
    np.cumsum(0.5 * dt * (b[:, 1:] + b[:, :-1]), axis=1, out=fine[:, 1:])
    tc = t[::2]
    bc = b[:, ::2]
    coarse = np.zeros_like(bc)
    np.cumsum(0.5 * np.diff(tc) * (bc[:, 1:] + bc[:, :-1]), axis=1, out=coarse[:, 1:])

    scale = norm * np.exp(-(1.0 + H) * np.log(tc))
    err = float(np.max(np.sqrt(np.mean((fine[:, ::2] - coarse) ** 2, axis=0)) * scale) / 3.0)
    values = lamperti(t, i1[:, None] + fine, 1.0 + H, tau_grid, norm)
    return values, err, sub, factor.jitter


def sample_ifbm_lamperti(
    H,
    tau_grid: GridSpec,
    n_paths: int,
    seed: int,
    rel_step: float = 1e-3,
    workers: int = 1,
) -> PathBatch:
    """Lamperti transform of integrated FBM by direct path simulation.

    The pair ``(I_1, B restricted to [1, e^T])`` is drawn jointly from its
    exact covariance, and ``I_t = I_1 + int_1^t B_s ds`` is integrated with
    the trapezoid rule on a geometric grid of relative step at most
    ``rel_step``. The Richardson estimate of the pathwise error (fine minus
    coarse trapezoid, over three, RMS over paths, on the normalized scale)
    is stored as ``extra["trapezoid_error"]``. While it exceeds
    ``REFINEMENT_TOL`` the step is halved, up to ``MAX_HALVINGS`` times;
    a :class:`RefinementWarning` is issued if that does not suffice.
    """
    H = _check_hurst_unit(H)
    n_paths = _check_count(n_paths)
    seed = _check_seed(seed)
    if not (0.0 < rel_step < 1.0):
        raise DomainError("rel_step must lie in (0, 1)")
    spec = CorrelationSpec(Kind.IFBM_LAMPERTI, H)
    step = rel_step
    for halving in range(MAX_HALVINGS + 1):
        values, err, sub, jitter = _ifbm_pass(H, tau_grid, n_paths, seed, step, workers)
        if err <= REFINEMENT_TOL or halving == MAX_HALVINGS:
            break
        step /= 2.0
    if err > REFINEMENT_TOL:
        warnings.warn(
            f"trapezoid error estimate {err:.2e} exceeds {REFINEMENT_TOL:g}"
            f" at relative step {step:.3g}; reduce rel_step",
            RefinementWarning,
            stacklevel=2,
        )
    return PathBatch(
        values,
        tau_grid,
        spec,
        seed,
        workers,
        "ifbm-direct",
        jitter=jitter,
        extra={"trapezoid_error": err, "substeps": sub, "rel_step": step},
    )


def write_paths(batch: PathBatch, path, fmt: str | None = None) -> Path:
    """Write a batch as CSV (``#``-prefixed JSON header) or ``.npz``.

    The format follows ``fmt`` or, if omitted, the file suffix.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "csv").lower()
    meta = json.dumps(batch.metadata(), sort_keys=True)
    if fmt == "npz":
        with open(path, "wb") as fh:
            np.savez(fh, values=batch.values, metadata=np.array(meta))
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# " + meta + "\n")
            np.savetxt(fh, batch.values, delimiter=",", fmt="%.17g")
    else:
        raise DomainError(f"unknown path format {fmt!r}")
    return path


def read_paths(path) -> tuple[np.ndarray, dict]:
    """Read a file written by :func:`write_paths`; returns ``(values, metadata)``."""
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as data:
            return data["values"], json.loads(str(data["metadata"]))
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# "):
            raise DomainError("missing metadata header")
        meta = json.loads(header[2:])
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    return values, meta

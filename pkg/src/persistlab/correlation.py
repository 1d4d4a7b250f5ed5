"""Stationary correlation functions of Lamperti-transformed processes.

All evaluators accept a scalar or an array of lags ``tau >= 0`` and return
the same shape. Lag zero always maps to exactly 1.

Families
--------
IFBM_LAMPERTI
    Lamperti transform of integrated fractional Brownian motion,
    ``U_tau = sqrt(2(1+H)) exp(-(1+H) tau) I_{exp(tau)}``.
RL_LAMPERTI
    Lamperti transform of the Riemann-Liouville process
    ``R_t = int_0^t (t-s)^(H-1/2) dB_s``, normalized by ``sqrt(2H)``.
FBM_LAMPERTI
    Lamperti transform of fractional Brownian motion.
OU
    ``exp(-rate * tau)``.
FRACTIONAL_SLEPIAN
    ``(1 - tau^H)_+``.
COSH_LIMIT
    ``1 / cosh(tau / 2)``, the large-H limit of the RL family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, DomainError
from .specialfn import hyp2f1_1mx

__all__ = [
    "Kind",
    "CorrelationSpec",
    "rho_ifbm",
    "r_rl",
    "r_rl_complement",
    "fbm_lamperti",
    "corr_eval",
    "ContinuityDiagnostics",
    "continuity_conditions",
    "integral_r",
    "rl_covariance",
    "LimitGap",
    "limit_gaps",
    "drift_constant",
    "drift_function",
]

# terms of the large-lag binomial expansion are dropped below this
_BINOMIAL_TOL = 1e-17


class Kind(str, Enum):
    IFBM_LAMPERTI = "ifbm"
    RL_LAMPERTI = "rl"
    FBM_LAMPERTI = "fbm"
    OU = "ou"
    FRACTIONAL_SLEPIAN = "slepian"
    COSH_LIMIT = "cosh"

    @classmethod
    def parse(cls, value):
        """Accept a member, its value (``"rl"``) or its name (``"RL_LAMPERTI"``)."""
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        for member in cls:
            if text.lower() == member.value or text.upper() == member.name:
                return member
        raise DomainError(f"unknown correlation family {value!r}")


_HURST_KINDS = {Kind.IFBM_LAMPERTI, Kind.RL_LAMPERTI, Kind.FBM_LAMPERTI, Kind.FRACTIONAL_SLEPIAN}


@dataclass(frozen=True)
class CorrelationSpec:
    """One stationary correlation function, optionally time-rescaled.

    Evaluating a CorrelationSpec at lag ``tau`` returns ``A(tau / time_scale)`` where
    ``A`` is the base family. Rescaling time by ``gamma`` divides the
    persistence exponent by ``gamma``.

    Parameters
    ----------
    kind : Kind
    hurst : float, optional
        Required for the Lamperti and Slepian families. (0, 1) for IFBM and
        FBM, (0, inf) for RL, (0, 1] for the Slepian family.
    rate : float, optional
        OU decay rate, default 1.
    time_scale : float
        Positive factor gamma.
    """

    kind: Kind
    hurst: float | None = None
    rate: float | None = None
    time_scale: float = 1.0

    def __post_init__(self):
        kind = Kind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in _HURST_KINDS:
            if self.hurst is None:
                raise DomainError(f"{kind.name} needs a Hurst index")
            h = float(self.hurst)
            object.__setattr__(self, "hurst", h)
            if kind in (Kind.IFBM_LAMPERTI, Kind.FBM_LAMPERTI):
                _check_hurst_unit(h)
            elif kind is Kind.RL_LAMPERTI:
                _check_hurst_positive(h)
            elif not (0.0 < h <= 1.0):
                raise DomainError("fractional Slepian index must lie in (0, 1]")
        elif self.hurst is not None:
            raise DomainError(f"{kind.name} takes no Hurst index")
        if kind is Kind.OU:
            rate = 1.0 if self.rate is None else float(self.rate)
            if not (math.isfinite(rate) and rate > 0.0):
                raise DomainError("OU rate must be positive")
            object.__setattr__(self, "rate", rate)
        elif self.rate is not None:
            raise DomainError(f"{kind.name} takes no rate")
        gamma = float(self.time_scale)
        if not (math.isfinite(gamma) and gamma > 0.0):
            raise DomainError("time_scale must be positive")
        object.__setattr__(self, "time_scale", gamma)

    def __call__(self, tau):
        return corr_eval(self, tau)

    def rescaled(self, gamma: float) -> "CorrelationSpec":
        """The same family with time slowed down by a further factor ``gamma``."""
        return replace(self, time_scale=self.time_scale * float(gamma))

    @property
    def nonnegative(self) -> bool:
        """Whether the family is known to have nonnegative correlations."""
        return self.kind is not Kind.FBM_LAMPERTI

    def describe(self) -> dict:
        """Plain-dict form, used for provenance headers."""
        out = {"kind": self.kind.value}
        if self.hurst is not None:
            out["hurst"] = self.hurst
        if self.rate is not None:
            out["rate"] = self.rate
        out["time_scale"] = self.time_scale
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CorrelationSpec":
        return cls(
            kind=Kind.parse(data["kind"]),
            hurst=data.get("hurst"),
            rate=data.get("rate"),
            time_scale=data.get("time_scale", 1.0),
        )


def _check_hurst_unit(h):
    if not (0.0 < h < 1.0):
        raise DomainError(f"Hurst index must lie in (0, 1), got {h}")


def _check_hurst_positive(h):
    if not (math.isfinite(h) and h > 0.0):
        raise DomainError(f"Hurst index must be positive, got {h}")


def _lags(tau, strict=False):
    arr = np.asarray(tau, dtype=float)
    bad = ~np.isfinite(arr) | (arr <= 0.0 if strict else arr < 0.0)
    if np.any(bad):
        raise DomainError("lags must be finite and " + ("positive" if strict else "nonnegative"))
    return arr


def _finish(flat, t):
    if np.ndim(t) == 0:
        return float(flat[0])
    return flat.reshape(np.shape(t))


def rho_ifbm(H, tau):
    """Correlation of the Lamperti transform of integrated FBM.

    For ``tau <= 1`` the hyperbolic form is used directly. For larger lags
    the exponentially growing terms cancel exactly; there the expansion of
    ``(1 - exp(-tau))^(2+2H)`` is used with the cancelling terms removed:

        (1+2H) rho = (1+H) e^{-H tau} - e^{-(1+H) tau} / 2
                     + 1/2 sum_{k>=2} (-1)^k C(2+2H, k) e^{(1+H-k) tau}

    Parameters
    ----------
    H : float
        Hurst index in (0, 1).
    tau : float or array_like
        Nonnegative lags.
    """
    H = float(H)
    _check_hurst_unit(H)
    t = _lags(tau)
    flat = np.atleast_1d(t).astype(float).ravel()
    out = np.empty_like(flat)

    small = flat <= 1.0
    ts = flat[small]
    sh = 2.0 * np.sinh(0.5 * ts)
    out[small] = (
        2.0 * (1.0 + H) * np.cosh(H * ts) - np.cosh((1.0 + H) * ts) + 0.5 * sh ** (2.0 + 2.0 * H)
    ) / (1.0 + 2.0 * H)

    tl = flat[~small]
    if tl.size:
        alpha = 2.0 + 2.0 * H
        acc = (1.0 + H) * np.exp(-H * tl) - 0.5 * np.exp(-(1.0 + H) * tl)
        binom = alpha * (alpha - 1.0) / 2.0
        k = 2
        while True:
            term = 0.5 * (-1) ** k * binom * np.exp((1.0 + H - k) * tl)
            acc = acc + term
            if np.max(np.abs(term)) < _BINOMIAL_TOL:
                break
            binom *= (alpha - k) / (k + 1)
            k += 1
            if k > 10_000:
                raise ConvergenceError("binomial expansion did not converge")
        out[~small] = acc / (1.0 + 2.0 * H)

    # rounding can leave the value an ulp outside [0, 1]
    np.clip(out, 0.0, 1.0, out=out)
    out[flat == 0.0] = 1.0
    return _finish(out, t)


def r_rl(H, tau):
    """Correlation of the normalized Lamperti transform of the RL process.

    ``r_H(tau) = 4H/(1+2H) exp(-tau/2) 2F1(1, 1/2-H; 3/2+H; exp(-tau))``.

    The hypergeometric factor is evaluated from ``1 - exp(-tau)`` computed
    with ``expm1`` so lags far below machine epsilon stay accurate.
    """
    H = float(H)
    _check_hurst_positive(H)
    t = _lags(tau)
    flat = np.atleast_1d(t).astype(float).ravel()
    y = -np.expm1(-flat)
    f = hyp2f1_1mx(1.0, 0.5 - H, 1.5 + H, y)
    out = 4.0 * H / (1.0 + 2.0 * H) * np.exp(-0.5 * flat) * f
    np.clip(out, 0.0, 1.0, out=out)
    out[flat == 0.0] = 1.0
    return _finish(out, t)


def r_rl_complement(H, tau):
    """``exp(-tau/2) - r_H(tau)`` in a cancellation-free product form.

    Equals ``(1-2H)/(1+2H) e^{-tau/2} (1-e^{-tau})^{2H}
    2F1(1/2+H, 2H; 3/2+H; e^{-tau})``. Positive for H < 1/2, zero at
    H = 1/2 and negative above.
    """
    H = float(H)
    _check_hurst_positive(H)
    t = _lags(tau, strict=True)
    flat = np.atleast_1d(t).astype(float).ravel()
    if H == 0.5:
        out = np.zeros_like(flat)
    else:
        y = -np.expm1(-flat)
        f = hyp2f1_1mx(0.5 + H, 2.0 * H, 1.5 + H, y)
        out = (1.0 - 2.0 * H) / (1.0 + 2.0 * H) * np.exp(-0.5 * flat) * y ** (2.0 * H) * f
    return _finish(out, t)


def fbm_lamperti(H, tau):
    """Correlation of ``exp(-H tau) B_{exp(tau)}`` for fractional Brownian motion.

    ``(e^{H tau} + e^{-H tau} - (2 sinh(tau/2))^{2H}) / 2``, evaluated as
    ``(e^{-H tau} - e^{H tau} expm1(2H ln(1 - e^{-tau}))) / 2``.
    """
    H = float(H)
    _check_hurst_unit(H)
    t = _lags(tau)
    flat = np.atleast_1d(t).astype(float).ravel()
    with np.errstate(divide="ignore"):
        # ln(1 - e^{-tau}): expm1 keeps small lags exact, log1p large ones
        log_gap = np.where(
            flat < 1.0, np.log(-np.expm1(-flat)), np.log1p(-np.exp(-np.maximum(flat, 1.0)))
        )
        inner = -np.expm1(2.0 * H * log_gap)
    out = 0.5 * (np.exp(-H * flat) + np.exp(H * flat) * inner)
    np.clip(out, -1.0, 1.0, out=out)
    out[flat == 0.0] = 1.0
    return _finish(out, t)


def _ou(rate, tau):
    return np.exp(-rate * tau)


def _slepian(H, tau):
    return np.maximum(1.0 - tau**H, 0.0)


def _cosh_limit(tau):
    e = np.exp(-0.5 * tau)
    return 2.0 * e / (1.0 + e * e)


def corr_eval(spec: CorrelationSpec, tau):
    """Evaluate ``A(tau / spec.time_scale)`` for the family of ``spec``."""
    if not isinstance(spec, CorrelationSpec):
        raise DomainError("spec must be a CorrelationSpec")
    t = _lags(tau)
    s = np.atleast_1d(t).astype(float) / spec.time_scale
    kind = spec.kind
    if kind is Kind.IFBM_LAMPERTI:
        out = np.asarray(rho_ifbm(spec.hurst, s))
    elif kind is Kind.RL_LAMPERTI:
        out = np.asarray(r_rl(spec.hurst, s))
    elif kind is Kind.FBM_LAMPERTI:
        out = np.asarray(fbm_lamperti(spec.hurst, s))
    elif kind is Kind.OU:
        out = _ou(spec.rate, s)
    elif kind is Kind.FRACTIONAL_SLEPIAN:
        out = _slepian(spec.hurst, s)
    else:
        out = _cosh_limit(s)
    out = np.array(out, dtype=float)
    out[s == 0.0] = 1.0
    if np.ndim(t) == 0:
        return float(out[0])
    return out.reshape(np.shape(t))


@dataclass(frozen=True)
class ContinuityDiagnostics:
    """Raw numbers behind the summability, continuity and decay hypotheses.

    Attributes
    ----------
    tail_sum : float
        ``sum_{tau=L}^{cutoff} A(tau / ell)`` over integer lags.
    sup_gap : dict
        ``eps -> sup_{tau in [0, eps]} (1 - A(tau))``.
    log_ratio : float
        ``ln A_lim(cutoff) / ln(cutoff)`` for the limiting correlation;
        ``-inf`` when the limit vanishes at the cutoff.
    """

    tail_sum: float
    sup_gap: dict
    log_ratio: float


def continuity_conditions(
    spec: CorrelationSpec,
    limit: CorrelationSpec,
    ell: int,
    L: int,
    eps_grid,
    cutoff: int,
    sup_points: int = 2001,
) -> ContinuityDiagnostics:
    """Sample the hypotheses of the comparison lemma for GSP exponents.

    No verdict is returned: the conditions are limits and can only be
    sampled at finite arguments.
    """
    for name, v in (("ell", ell), ("L", L), ("cutoff", cutoff)):
        if int(v) != v or v <= 0:
            raise DomainError(f"{name} must be a positive integer")
    eps = [float(e) for e in eps_grid]
    if any(not (0.0 < e < 1.0) for e in eps):
        raise DomainError("eps values must lie in (0, 1)")
    if cutoff < 2:
        raise DomainError("cutoff must be at least 2 for the log ratio")

    lags = np.arange(int(L), int(cutoff) + 1, dtype=float)
    tail = math.fsum(corr_eval(spec, lags / ell)) if lags.size else 0.0

    sup_gap = {}
    for e in eps:
        grid = np.linspace(0.0, e, sup_points)
        sup_gap[e] = float(np.max(1.0 - corr_eval(spec, grid)))

    a = corr_eval(limit, float(cutoff))
    ratio = math.log(a) / math.log(cutoff) if a > 0.0 else -math.inf
    return ContinuityDiagnostics(tail_sum=tail, sup_gap=sup_gap, log_ratio=ratio)


def integral_r(H, upper, lower_cut=1e-30):
    """``int_0^upper r_H(tau) d tau`` by adaptive quadrature.

    The integral is taken in the variable ``u = ln tau``, which spreads the
    sharp drop of ``r_H`` near zero (small H) over a long interval.
    The piece below ``lower_cut`` is bounded by ``lower_cut`` itself.
    """
    H = float(H)
    _check_hurst_positive(H)
    upper = float(upper)
    if not (math.isfinite(upper) and upper > 0.0):
        raise DomainError("upper limit must be positive")
    lo = math.log(lower_cut)
    hi = math.log(upper)
    if hi <= lo:
        return upper

    def integrand(u):
        t = math.exp(u)
        return r_rl(H, t) * t

    breaks = [b for b in (math.log(1e-12), math.log(1e-4), 0.0, math.log(10.0)) if lo < b < hi]
    edges = [lo, *breaks, hi]
    total = lower_cut
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(integrand, a, b, epsabs=1e-11, epsrel=1e-12, limit=200)
        if err > 1e-9:
            raise ConvergenceError(f"quadrature error estimate {err:.2e} too large")
        total += val
    return total


def rl_covariance(H, s, t):
    """``E[R_s R_t] = int_0^s (t-u)^(H-1/2) (s-u)^(H-1/2) du`` for the RL process.

    After ``v = (s-u)^(H+1/2)`` the factor ``(s-u)^(H-1/2) du`` becomes
    ``dv / (H+1/2)``, leaving the bounded integrand
    ``(t - s + v^(1/(H+1/2)))^(H-1/2)`` whenever ``t > s``.
    """
    H = float(H)
    _check_hurst_positive(H)
    s, t = float(s), float(t)
    if s < 0.0 or t < 0.0:
        raise DomainError("times must be nonnegative")
    s, t = min(s, t), max(s, t)
    if s == 0.0:
        return 0.0
    if s == t:
        return s ** (2.0 * H) / (2.0 * H)
    p = H + 0.5
    gap = t - s

    def integrand(v):
        return (gap + v ** (1.0 / p)) ** (H - 0.5)

    val, err = integrate.quad(integrand, 0.0, s**p, epsabs=0.0, epsrel=1e-12, limit=400)
    return val / p


@dataclass(frozen=True)
class LimitGap:
    H: float
    tau: float
    value: float
    limit: float

    @property
    def gap(self) -> float:
        return abs(self.value - self.limit)


def limit_gaps(family, direction, hurst_values, taus, a=1.0):
    """Distance between rescaled correlations and their small/large-H limits.

    ``family="ifbm"``: ``rho_H(tau/H)`` (direction ``"0"``) or
    ``rho_H(tau/(1-H))`` (direction ``"1"``), both against ``exp(-tau)``.

    ``family="rl"``: direction ``"0"`` only; ``r_H(tau/gamma_H)`` with
    ``gamma_H = exp(a/(2H))`` against ``1 - exp(-a)``.
    """
    kind = Kind.parse(family)
    direction = str(direction)
    if direction not in ("0", "1"):
        raise DomainError("direction must be '0' or '1'")
    rows = []
    for H in hurst_values:
        H = float(H)
        for tau in taus:
            tau = float(tau)
            if kind is Kind.IFBM_LAMPERTI:
                scale = H if direction == "0" else 1.0 - H
                value = rho_ifbm(H, tau / scale)
                limit = math.exp(-tau)
            elif kind is Kind.RL_LAMPERTI:
                if direction != "0":
                    raise DomainError("the RL rescaling limit is taken as H -> 0")
                # tau / gamma_H computed in logs: gamma_H overflows for tiny H
                lag = math.exp(math.log(tau) - a / (2.0 * H)) if tau > 0 else 0.0
                value = r_rl(H, lag)
                limit = 1.0 - math.exp(-a)
            else:
                raise DomainError("limit tables exist for the ifbm and rl families")
            rows.append(LimitGap(H=H, tau=tau, value=float(value), limit=limit))
    return rows


def _drift_integral(H, eta, t):
    if t <= 0.5:
        return 0.0
    val, err = integrate.quad(
        lambda s: s ** (-eta),
        0.5,
        t,
        weight="alg",
        wvar=(0.0, H - 0.5),
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    if err > 1e-9 * max(1.0, abs(val)):
        raise ConvergenceError("drift quadrature did not converge")
    return val


def _check_drift_args(H, eta):
    H, eta = float(H), float(eta)
    _check_hurst_unit(H)
    if not (0.5 < eta < 0.5 + H):
        raise DomainError("eta must lie in (1/2, 1/2 + H)")
    return H, eta


def drift_constant(H, eta):
    """``c`` with ``1/c = int_{1/2}^1 (1-s)^(H-1/2) s^(-eta) ds``."""
    H, eta = _check_drift_args(H, eta)
    return 1.0 / _drift_integral(H, eta, 1.0)


def drift_function(H, eta, t, c=None):
    """``phi(t) = c int_{1/2}^t (t-s)^(H-1/2) s^(-eta) ds`` for ``t >= 1/2``.

    ``phi(1/2) = 0`` and ``phi(1) = 1`` by the choice of ``c``.
    """
    H, eta = _check_drift_args(H, eta)
    if c is None:
        c = drift_constant(H, eta)
    t_arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t_arr)) or np.any(t_arr < 0.5):
        raise DomainError("phi is defined for t >= 1/2")
    out = np.array([c * _drift_integral(H, eta, float(v)) for v in t_arr.ravel()])
    if t_arr.ndim == 0:
        return float(out[0])
    return out.reshape(t_arr.shape)

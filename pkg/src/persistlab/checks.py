"""Deterministic identity and inequality checks for the correlation kernels.

Each check returns a :class:`CheckResult` with the worst residual found on
its grid. For inequalities the residual is the largest violation
``lhs - rhs`` (a value <= 0 means no violation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .correlation import integral_r, limit_gaps, r_rl, r_rl_complement, rho_ifbm
from .specialfn import hyp2f1

__all__ = [
    "CheckResult",
    "IDENTITY_H",
    "X_GRID",
    "TAU_GRID",
    "check_symmetry",
    "check_contiguous",
    "check_euler",
    "check_complement",
    "check_gauss_limit",
    "check_normalization",
    "check_half_closed_form",
    "check_monotone",
    "check_small_h_bound",
    "check_large_h_bound",
    "check_modulus_bound",
    "check_slepian",
    "check_limit_tables",
    "check_integral",
    "identity_suite",
    "full_suite",
]

IDENTITY_H = tuple(round(0.05 * k, 2) for k in range(1, 20)) + (1.5, 2.5)
X_GRID = tuple(np.round(np.linspace(0.01, 0.99, 99), 2)) + (0.995, 0.999, 0.9999)
TAU_GRID = tuple(np.concatenate([[1e-8, 1e-4, 1e-3], np.linspace(0.01, 30.0, 3000)]))
IDENTITY_TOL = 1e-10


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tolerance: float
    kind: str = "abs"

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.residual)) and self.residual <= self.tolerance


def _h_list(hs):
    return IDENTITY_H if hs is None else tuple(float(h) for h in hs)


def check_symmetry(hs=None) -> CheckResult:
    """``2F1(a, b; c; x) = 2F1(b, a; c; x)`` for the three r_H families."""
    x = np.array(X_GRID)
    worst = 0.0
    for H in _h_list(hs):
        c = 1.5 + H
        for a, b in ((1.0, 0.5 - H), (0.5 + H, 2.0 * H), (1.0, 1.5 - H)):
            worst = max(worst, float(np.max(np.abs(hyp2f1(a, b, c, x) - hyp2f1(b, a, c, x)))))
    return CheckResult("hyp2f1 symmetry", worst, 1e-14)


def check_contiguous(hs=None, r_fn=r_rl) -> CheckResult:
    """``4H F(1,1/2-H) + (1-2H)(1-x) F(1,3/2-H) = 1+2H`` (all with c = 3/2+H).

    The first function is recovered from the RL correlation, so a defect in
    ``r_fn`` shows up here.
    """
    x = np.array(X_GRID)
    tau = -np.log(x)
    worst = 0.0
    for H in _h_list(hs):
        f1 = np.asarray(r_fn(H, tau)) * (1.0 + 2.0 * H) / (4.0 * H) * np.exp(0.5 * tau)
        f2 = hyp2f1(1.0, 1.5 - H, 1.5 + H, x)
        res = 4.0 * H * f1 + (1.0 - 2.0 * H) * (1.0 - x) * f2 - (1.0 + 2.0 * H)
        worst = max(worst, float(np.max(np.abs(res))))
    return CheckResult("contiguous relation", worst, IDENTITY_TOL)


def check_euler(hs=None) -> CheckResult:
    """``F(1, 3/2-H; 3/2+H; x) = (1-x)^(2H-1) F(1/2+H, 2H; 3/2+H; x)``."""
    x = np.array(X_GRID)
    worst = 0.0
    for H in _h_list(hs):
        lhs = hyp2f1(1.0, 1.5 - H, 1.5 + H, x)
        rhs = (1.0 - x) ** (2.0 * H - 1.0) * hyp2f1(0.5 + H, 2.0 * H, 1.5 + H, x)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return CheckResult("Euler transform", worst, IDENTITY_TOL)


def check_complement(hs=None, r_fn=r_rl) -> CheckResult:
    """``r_H(tau) + (e^{-tau/2} - r_H(tau)) = e^{-tau/2}`` with the product form."""
    tau = np.array(TAU_GRID)
    worst = 0.0
    for H in _h_list(hs):
        res = np.asarray(r_fn(H, tau)) + r_rl_complement(H, tau) - np.exp(-0.5 * tau)
        worst = max(worst, float(np.max(np.abs(res))))
    return CheckResult("complement sum", worst, IDENTITY_TOL)


def check_gauss_limit(hs=None) -> CheckResult:
    """Series values at ``x = 1 - 10^-k`` approach the Gauss sum.

    Residual: the largest increase of ``|F(x_k) - F(1)|`` from one k to the
    next, over k = 1..8 (must not grow), for ``F(1, 1/2-H; 3/2+H; .)``.
    """
    worst = -math.inf
    for H in _h_list(hs):
        limit = hyp2f1(1.0, 0.5 - H, 1.5 + H, 1.0)
        gaps = [abs(hyp2f1(1.0, 0.5 - H, 1.5 + H, 1.0 - 10.0**-k) - limit) for k in range(1, 9)]
        worst = max(worst, max(b - a for a, b in zip(gaps[:-1], gaps[1:])))
    return CheckResult("Gauss summation limit", worst, 0.0, "ineq")


def check_normalization(hs=None) -> CheckResult:
    """``rho_H(0) = 1`` and ``r_H(0) = 1``, the latter via its Gauss sum too."""
    worst = 0.0
    for H in _h_list(hs):
        if H < 1.0:
            worst = max(worst, abs(rho_ifbm(H, 0.0) - 1.0))
        worst = max(worst, abs(r_rl(H, 0.0) - 1.0))
        gauss = 4.0 * H / (1.0 + 2.0 * H) * hyp2f1(1.0, 0.5 - H, 1.5 + H, 1.0)
        worst = max(worst, abs(gauss - 1.0))
    return CheckResult("normalization at lag 0", worst, 1e-12)


def check_half_closed_form() -> CheckResult:
    """``r_{1/2}(tau) = exp(-tau/2)`` on [0, 30]."""
    tau = np.linspace(0.0, 30.0, 3001)
    worst = float(np.max(np.abs(r_rl(0.5, tau) - np.exp(-0.5 * tau))))
    return CheckResult("r at H=1/2 closed form", worst, 1e-12)


_UNIT_H = tuple(round(0.05 * k, 2) for k in range(1, 20))
_MONO_TAU = np.linspace(0.0, 20.0, 2001)


def check_monotone() -> CheckResult:
    """``rho_H`` nonincreasing for H in (0,1); ``r_H`` decreasing for H < 1/2."""
    worst = -math.inf
    for H in _UNIT_H:
        worst = max(worst, float(np.max(np.diff(rho_ifbm(H, _MONO_TAU)))))
    strict = -math.inf
    for H in (h for h in _UNIT_H if h < 0.5):
        strict = max(strict, float(np.max(np.diff(r_rl(H, _MONO_TAU)))))
    # a zero step of r counts as a violation of strict decrease
    worst = max(worst, strict if strict < 0.0 else max(strict, 1e-300))
    return CheckResult("monotone correlations", worst, 0.0, "ineq")


_BOUND_TAU = np.linspace(0.0, 20.0, 4001)


def check_small_h_bound() -> CheckResult:
    """``rho_H(tau/H) <= (3/2) e^{-tau}`` for H in {0.05, ..., 0.45}."""
    worst = -math.inf
    for H in (h for h in _UNIT_H if h < 0.5):
        gap = rho_ifbm(H, _BOUND_TAU / H) - 1.5 * np.exp(-_BOUND_TAU)
        worst = max(worst, float(np.max(gap)))
    return CheckResult("rescaled bound H<1/2", worst, 0.0, "ineq")


def check_large_h_bound() -> CheckResult:
    """``rho_H(tau/(1-H)) <= (13/6) e^{-tau}`` for H in {0.55, ..., 0.95}."""
    worst = -math.inf
    for H in (h for h in _UNIT_H if h > 0.5):
        gap = rho_ifbm(H, _BOUND_TAU / (1.0 - H)) - 13.0 / 6.0 * np.exp(-_BOUND_TAU)
        worst = max(worst, float(np.max(gap)))
    return CheckResult("rescaled bound H>1/2", worst, 0.0, "ineq")


def check_modulus_bound() -> CheckResult:
    """``1 - rho_H(eps/H) <= (5/2) eps`` for H < 1/2 and eps in (0, 1]."""
    eps = np.linspace(1e-3, 1.0, 1000)
    worst = -math.inf
    for H in (h for h in _UNIT_H if h < 0.5):
        gap = 1.0 - rho_ifbm(H, eps / H) - 2.5 * eps
        worst = max(worst, float(np.max(gap)))
    return CheckResult("continuity modulus bound", worst, 0.0, "ineq")


def check_slepian() -> CheckResult:
    """``r_H(tau) >= (1 - tau^H)_+`` for H in {0.1, 0.2, 0.3, 0.4}, tau in [0, 2]."""
    tau = np.linspace(0.0, 2.0, 2001)
    worst = -math.inf
    for H in (0.1, 0.2, 0.3, 0.4):
        gap = np.maximum(1.0 - tau**H, 0.0) - r_rl(H, tau)
        worst = max(worst, float(np.max(gap)))
    return CheckResult("fractional Slepian domination", worst, 0.0, "ineq")


LIMIT_TAUS = (0.5, 1.0, 2.0)
SMALL_H = (0.1, 0.05, 0.02, 0.01)
LARGE_H = (0.9, 0.95, 0.98, 0.99)
RL_H = (0.1, 0.05, 0.02)
RL_A = (0.5, 1.0, 2.0)
FINAL_GAP = 0.05


def _table_residual(rows, hs, taus):
    """Largest gap increase along ``hs`` and the final gap excess over FINAL_GAP."""
    gaps = {(r.H, r.tau): r.gap for r in rows}
    worst = -math.inf
    for tau in taus:
        seq = [gaps[(h, tau)] for h in hs]
        worst = max(worst, max(b - a for a, b in zip(seq[:-1], seq[1:])))
        worst = max(worst, seq[-1] - FINAL_GAP)
    return worst


def check_limit_tables() -> list[CheckResult]:
    """Rescaled correlations approach their limits monotonically."""
    out = []
    rows = limit_gaps("ifbm", "0", SMALL_H, LIMIT_TAUS)
    out.append(CheckResult("ifbm limit H->0", _table_residual(rows, SMALL_H, LIMIT_TAUS), 0.0, "ineq"))
    rows = limit_gaps("ifbm", "1", LARGE_H, LIMIT_TAUS)
    out.append(CheckResult("ifbm limit H->1", _table_residual(rows, LARGE_H, LIMIT_TAUS), 0.0, "ineq"))
    worst = -math.inf
    for a in RL_A:
        rows = limit_gaps("rl", "0", RL_H, (1.0,), a=a)
        worst = max(worst, _table_residual(rows, RL_H, (1.0,)))
    out.append(CheckResult("rl limit H->0", worst, 0.0, "ineq"))
    return out


def check_integral() -> CheckResult:
    """Relative distance of ``int_0^200 r_0.01`` from ``pi^2 * 0.01``."""
    target = math.pi**2 * 0.01
    rel = abs(integral_r(0.01, 200.0) - target) / target
    return CheckResult("integral asymptotic", rel, 0.10, "rel")


def identity_suite(hs=None, perturb: float = 0.0) -> list[CheckResult]:
    """Symmetry, contiguous, Euler and complement checks over ``hs``.

    ``perturb`` is added to every RL correlation value fed to the
    contiguous and complement checks; it exists to show that the checks
    detect a defect.
    """
    if perturb:
        def r_fn(H, tau):
            return np.asarray(r_rl(H, tau)) + perturb
    else:
        r_fn = r_rl
    return [
        check_symmetry(hs),
        check_contiguous(hs, r_fn),
        check_euler(hs),
        check_complement(hs, r_fn),
        check_gauss_limit(hs),
        check_normalization(hs),
    ]


def full_suite(hs=None, perturb: float = 0.0) -> list[CheckResult]:
    """Every deterministic check."""
    return [
        *identity_suite(hs, perturb),
        check_half_closed_form(),
        check_monotone(),
        check_small_h_bound(),
        check_large_h_bound(),
        check_modulus_bound(),
        check_slepian(),
        *check_limit_tables(),
        check_integral(),
    ]

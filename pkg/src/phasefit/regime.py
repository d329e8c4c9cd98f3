"""Small-n / large-n regime logic and minimax rate predictions.

All threshold comparisons happen in the log domain: ``(g+1)^(2g+3)``
overflows a double long before ``g`` gets interesting.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

from phasefit.entropy import ClassKind, SmoothnessClassSpec, dstar, holder_sub_rstar

SMALL_N = "SmallN"
LARGE_N = "LargeN"
ANALYTIC = "Analytic"

STANDARD = "standard"
LOG_WEIGHTED = "log_weighted"

# radius profiles that change the threshold or the small-n rate
_LOG_WEIGHTED_PROFILES = {"factorial"}


@dataclass
class RegimeReport:
    n: int
    sigma_sq: float
    gamma: int | float
    gamma_star: int | None
    regime: str
    recommended_degree: int
    predicted_rate: float
    rate_formula: str
    threshold: str = STANDARD

    def to_dict(self):
        out = asdict(self)
        if out["gamma"] == math.inf:
            out["gamma"] = "inf"
        return out


def _check(n, sigma_sq):
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not sigma_sq > 0:
        raise ValueError(f"sigma_sq must be positive, got {sigma_sq}")


def log_threshold(k, threshold=STANDARD):
    """Log of ``(k+1)^(2k+3)``, or of ``((k+1) log(max(k,2)))^(2k+3)``."""
    if threshold == STANDARD:
        return (2 * k + 3) * math.log(k + 1)
    if threshold == LOG_WEIGHTED:
        return (2 * k + 3) * math.log((k + 1) * math.log(max(k, 2)))
    raise ValueError(f"unknown threshold {threshold!r}")


def _below(n, sigma_sq, k, threshold=STANDARD):
    """``n / sigma^2 <= threshold(k)``, decided in the log domain.

    Near-ties of the standard threshold are settled exactly with rationals,
    so the boundary ``n / sigma^2 = (k+1)^(2k+3)`` always lands on the
    small-n side.
    """
    target = math.log(n) - math.log(sigma_sq)
    thr = log_threshold(k, threshold)
    if threshold == STANDARD and abs(target - thr) <= 1e-9 * max(1.0, thr):
        return Fraction(n) / Fraction(sigma_sq) <= (k + 1) ** (2 * k + 3)
    return target <= thr


def gamma_star(n, sigma_sq, gamma_cap=None, threshold=STANDARD):
    """Smallest ``k >= 0`` with ``n / sigma^2 <= threshold(k)``, capped at ``gamma_cap``.

    ``gamma_cap`` of ``None`` or ``math.inf`` scans without a cap.
    """
    _check(n, sigma_sq)
    k = 0
    while not _below(n, sigma_sq, k, threshold):
        if gamma_cap is not None and k >= gamma_cap:
            return int(gamma_cap)
        k += 1
    return k


def large_n_rate(n, sigma_sq, gamma):
    return (sigma_sq / n) ** ((2.0 * gamma + 2) / (2.0 * gamma + 3))


def classify(n, sigma_sq, gamma, class_kind="holder_full", radius_profile="constant"):
    """Regime, recommended degree and predicted MISE rate (constants = 1).

    ``radius_profile`` is ``constant``, ``factorial_minus_one`` (same
    threshold as the constant case) or ``factorial`` (log-weighted threshold
    and an extra ``log(max(g*, 2))`` in the small-n rate). A
    :class:`~phasefit.entropy.RadiusProfile` is accepted too.
    """
    _check(n, sigma_sq)
    if class_kind in ("ellipsoid", "holder_sub"):
        raise ValueError(
            f"{class_kind} classes have no phase transition; use nonstandard_rate"
        )
    if class_kind not in ("holder_full", "sobolev", "poly_sub"):
        raise ValueError(f"unknown class kind {class_kind!r}")
    tag = getattr(radius_profile, "tag", radius_profile)
    threshold = LOG_WEIGHTED if tag in _LOG_WEIGHTED_PROFILES else STANDARD
    if _below(n, sigma_sq, gamma, threshold):
        gs = gamma_star(n, sigma_sq, gamma, threshold)
        rate = sigma_sq * (gs + 1) / n
        formula = "sigma^2 (g*+1) / n"
        if threshold == LOG_WEIGHTED:
            rate *= math.log(max(gs, 2))
            formula = "sigma^2 (g*+1) log(max(g*,2)) / n"
        return RegimeReport(n, sigma_sq, gamma, gs, SMALL_N, gs + 1, rate, formula, threshold)
    rate = large_n_rate(n, sigma_sq, gamma)
    return RegimeReport(
        n, sigma_sq, gamma, gamma, LARGE_N, gamma + 1, rate,
        "(sigma^2/n)^((2g+2)/(2g+3))", threshold,
    )


def classify_analytic(n, sigma_sq):
    """Infinitely smooth classes: no transition, rate ``sigma^2 (g*+1) / n``."""
    gs = gamma_star(n, sigma_sq)
    return RegimeReport(
        n, sigma_sq, math.inf, gs, ANALYTIC, gs + 1, sigma_sq * (gs + 1) / n,
        "sigma^2 (g*+1) / n",
    )


def heuristic_degree(n):
    """Rule-of-thumb degree ``max(floor(log n / (2 log log n)), 1)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n <= 15:
        return 1
    return max(math.floor(math.log(n) / (2.0 * math.log(math.log(n)))), 1)


def nonstandard_rate(class_kind, n, sigma_sq, gamma, radii):
    """MISE rate for the ellipsoid (``ellipsoid``) or Hölder-sub (``holder_sub``) class."""
    _check(n, sigma_sq)
    if class_kind == "ellipsoid":
        scale = radii[gamma + 1]
    elif class_kind == "holder_sub":
        scale = holder_sub_rstar(SmoothnessClassSpec(gamma, tuple(radii), ClassKind.HOLDER_SUB))
    else:
        raise ValueError(f"unknown non-standard class {class_kind!r}")
    return scale ** (2.0 / (2 * gamma + 3)) * large_n_rate(n, sigma_sq, gamma)


def multivariate_threshold(n, sigma_sq, gamma, d):
    """Whether ``n / sigma^2`` sits below ``(sum_k D*_k)^((2g+2+d)/d)``.

    Returns ``(small_n, log_threshold)``.
    """
    _check(n, sigma_sq)
    if d < 1:
        raise ValueError("d must be >= 1")
    total = sum(dstar(d, k) for k in range(gamma + 1))
    log_thr = (2.0 * gamma + 2 + d) / d * math.log(total)
    return math.log(n) - math.log(sigma_sq) <= log_thr, log_thr

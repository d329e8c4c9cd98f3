"""Covering and packing bounds for smoothness classes.

Bound evaluators return log-cardinalities with every unspecified universal
constant pinned to a fixed value (see ``CONSTANTS``); the values are echoed
in each :class:`EntropyBoundReport` so comparisons stay reproducible.

Two constructive objects are provided together with their verifiers:
a product-grid cover of the polynomial subclass in the coefficient
l1 metric, and a grid-plus-bit-gate packing of the same subclass in L2.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from phasefit.quadrature import gauss_legendre, nodes_for_degree

CONSTANTS = {
    "C_B1": 1.0,
    "C_prime_B2": math.log(2.0),
    "holder_sub_prefactor": 1.0,
    "ellipsoid_prefactor": 1.0,
}

DSTAR_LIMIT = 2**63 - 1
COVER_SIZE_CAP = 10**7
PACKING_SIZE_CAP = 20_000
_TIE_RTOL = 1e-12


class ClassKind(str, enum.Enum):
    HOLDER_FULL = "holder_full"
    POLY_SUB = "poly_sub"
    HOLDER_SUB = "holder_sub"
    SOBOLEV = "sobolev"
    ELLIPSOID = "ellipsoid"


_DEFAULT_DOMAIN = {
    ClassKind.HOLDER_FULL: (-1.0, 1.0),
    ClassKind.POLY_SUB: (-1.0, 1.0),
    ClassKind.HOLDER_SUB: (-1.0, 1.0),
    ClassKind.SOBOLEV: (0.0, 1.0),
    ClassKind.ELLIPSOID: (0.0, 1.0),
}


@dataclass(frozen=True)
class SmoothnessClassSpec:
    """A smoothness class of degree ``gamma + 1``.

    ``radii`` holds the derivative bounds ``R_0, ..., R_{gamma+1}``.
    ``eigen_decay`` is the constant ``c`` of ``mu_m = (c m)^(-2(gamma+1))``
    and is required for ellipsoids only.
    """

    gamma: int
    radii: tuple
    kind: ClassKind = ClassKind.HOLDER_FULL
    domain: tuple | None = None
    eigen_decay: float | None = None

    def __post_init__(self):
        kind = ClassKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if int(self.gamma) != self.gamma or self.gamma < 0:
            raise ValueError(f"gamma must be a non-negative integer, got {self.gamma!r}")
        object.__setattr__(self, "gamma", int(self.gamma))
        radii = tuple(float(r) for r in self.radii)
        if len(radii) != self.gamma + 2:
            raise ValueError(
                f"radii needs gamma + 2 = {self.gamma + 2} entries, got {len(radii)}"
            )
        if not all(math.isfinite(r) and r > 0 for r in radii):
            raise ValueError("radii must be strictly positive and finite")
        object.__setattr__(self, "radii", radii)
        domain = self.domain if self.domain is not None else _DEFAULT_DOMAIN[kind]
        lo, hi = (float(d) for d in domain)
        if not lo < hi:
            raise ValueError(f"domain lower bound must be below upper bound, got {domain}")
        object.__setattr__(self, "domain", (lo, hi))
        if kind is ClassKind.ELLIPSOID:
            if self.eigen_decay is None or not self.eigen_decay > 0:
                raise ValueError("ellipsoid classes need an eigen_decay constant c > 0")

    @property
    def coefficient_bounds(self):
        """Half-widths ``R_k / k!`` of the coefficient box, ``k = 0..gamma``."""
        return np.array([_ratio_factorial(self.radii[k], k) for k in range(self.gamma + 1)])

    def with_kind(self, kind):
        return SmoothnessClassSpec(self.gamma, self.radii, kind, None, self.eigen_decay)


@dataclass(frozen=True)
class RadiusProfile:
    """How the radii ``R_k`` depend on ``k``.

    ``tag`` is one of ``constant`` (``R_k = c``), ``factorial_minus_one``
    (``R_0 = c``, ``R_k = c (k-1)!``), ``factorial`` (``R_k = c k!``) or
    ``explicit`` (``values`` used verbatim).
    """

    tag: str
    c_bar: float = 1.0
    values: tuple | None = None

    TAGS = ("constant", "factorial_minus_one", "factorial", "explicit")

    def __post_init__(self):
        if self.tag not in self.TAGS:
            raise ValueError(f"unknown radius profile {self.tag!r}; expected one of {self.TAGS}")
        if self.tag == "explicit":
            if self.values is None:
                raise ValueError("explicit profile needs values")
        elif not (math.isfinite(self.c_bar) and self.c_bar > 0):
            raise ValueError(f"c_bar must be positive, got {self.c_bar}")

    @classmethod
    def constant(cls, c_bar=1.0):
        return cls("constant", c_bar)

    @classmethod
    def factorial(cls, c_bar=1.0):
        return cls("factorial", c_bar)

    @classmethod
    def factorial_minus_one(cls, c_bar=1.0):
        return cls("factorial_minus_one", c_bar)

    @classmethod
    def explicit(cls, values):
        return cls("explicit", values=tuple(float(v) for v in values))


@dataclass
class EntropyBoundReport:
    delta: float
    lower_log: float | None
    upper_log: float | None
    branch: str
    constants: dict = field(default_factory=lambda: dict(CONSTANTS))

    def as_row(self):
        return {
            "delta": self.delta,
            "lower_log": self.lower_log,
            "upper_log": self.upper_log,
            "branch": self.branch,
        }


@dataclass
class PackingSet:
    """A delta-separated set of polynomials given by monomial coefficients."""

    members: np.ndarray
    delta: float
    m0: int
    b: float
    k_tilde: int
    gate_values: np.ndarray
    min_separation: float

    def __len__(self):
        return len(self.members)


@dataclass
class B2Feasibility:
    feasible: bool
    m0: int
    log_lower: float
    k_tilde: int
    spread: float


def _ratio_factorial(value, k):
    if k <= 170:
        return value / math.factorial(k)
    return math.exp(_log_ratio_factorial(value, k))


def _log_ratio_factorial(value, k):
    return math.log(value) - math.lgamma(k + 1)


def _check_delta(delta, below_one=False):
    if not (math.isfinite(delta) and delta > 0):
        raise ValueError(f"delta must be positive and finite, got {delta}")
    if below_one and delta >= 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def make_radii(profile, gamma):
    """Expand a :class:`RadiusProfile` to the vector ``R_0..R_{gamma+1}``."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    n = gamma + 2
    c = profile.c_bar
    if profile.tag == "constant":
        radii = [c] * n
    elif profile.tag == "factorial":
        radii = [c * math.factorial(k) for k in range(n)]
    elif profile.tag == "factorial_minus_one":
        radii = [c] + [c * math.factorial(k - 1) for k in range(1, n)]
    else:
        radii = [float(v) for v in profile.values]
        if len(radii) != n:
            raise ValueError(f"explicit profile needs {n} values, got {len(radii)}")
    radii = np.asarray(radii, dtype=float)
    if not np.all(np.isfinite(radii)) or np.any(radii <= 0):
        raise ValueError("radius profile produced a non-positive or non-finite entry")
    return radii


def _poly_cover_terms(spec, delta):
    g = spec.gamma
    base = math.log(4.0 * (g + 1)) - math.log(delta)
    return [base + _log_ratio_factorial(spec.radii[k], k) for k in range(g + 1)]


def poly_cover_upper_report(spec, delta):
    _check_delta(delta)
    g = spec.gamma
    terms = _poly_cover_terms(spec, delta)
    if min(terms) >= 0:
        return EntropyBoundReport(delta, None, math.fsum(terms), "B1bar")
    upper = (g / 2 + 1) * math.log(1.0 / delta) + math.fsum(
        math.log(r) for r in spec.radii[: g + 1]
    )
    return EntropyBoundReport(delta, None, upper, "B2bar")


def poly_cover_B1bar(spec, delta):
    """The product-form bound ``sum_k log(4 (g+1) R_k / (k! delta))`` regardless of branch."""
    _check_delta(delta)
    return math.fsum(_poly_cover_terms(spec, delta))


def poly_cover_upper(spec, delta):
    """Upper bound on the log delta-covering number of the polynomial subclass."""
    return poly_cover_upper_report(spec, delta).upper_log


def poly_pack_lower_B1(spec, delta, C=None):
    """Lower bound ``B_1(delta)`` on the log delta-packing number (L2).

    Returns ``-inf`` when an inner radius sum vanishes (degenerate bound).
    """
    _check_delta(delta)
    C = CONSTANTS["C_B1"] if C is None else C
    g = spec.gamma
    # 9^-g g^-g with 0^0 = 1 at g = 0
    log_prefactor = 0.0 if g == 0 else -g * (math.log(9.0) + math.log(g))
    total = (g + 1) * log_prefactor
    for k in range(g + 1):
        inner = math.fsum(spec.radii[k + 2 * m] for m in range(g // 2 + 1) if k + 2 * m <= g)
        if inner <= 0:
            return -math.inf
        total += math.log(C * inner / delta)
    return total


def k_tilde(spec):
    """Index maximising ``R_k / k!``; the smallest index wins ties."""
    logs = [_log_ratio_factorial(spec.radii[k], k) for k in range(spec.gamma + 1)]
    best = max(logs)
    for k, v in enumerate(logs):
        if v >= best - _TIE_RTOL * max(1.0, abs(best)):
            return k
    raise AssertionError("unreachable")


def _b2_geometry(spec, delta):
    kt = k_tilde(spec)
    bounds = spec.coefficient_bounds
    spread = max(kt + 1.0, math.fsum(bounds))
    return kt, bounds, spread


def poly_pack_B2_feasible(spec, delta):
    """Feasibility of the grid packing and its cardinality ``M_0``."""
    _check_delta(delta)
    g = spec.gamma
    kt, bounds, spread = _b2_geometry(spec, delta)
    width = 2.0 * bounds[kt]
    step = 3.0 * delta * spread
    m0 = math.ceil(width / step) + 1
    feasible = bool(m0 >= 2 ** (g + 1) and step <= width)
    log_lower = (g + 1) * CONSTANTS["C_prime_B2"] if feasible else -math.inf
    return B2Feasibility(feasible, m0, log_lower, kt, spread)


def holder_sub_rstar(spec):
    g = spec.gamma
    log_best = max(math.log(spec.radii[k]) - math.lgamma(k) for k in range(1, g + 2))
    return math.exp(max(log_best, 0.0))


def holder_sub_entropy(spec, delta):
    """Two-sided bound for the Hölder subclass with vanishing derivatives at 0."""
    _check_delta(delta, below_one=True)
    g = spec.gamma
    rstar = holder_sub_rstar(spec)
    scale = CONSTANTS["holder_sub_prefactor"] * delta ** (-1.0 / (g + 1))
    upper = rstar ** (1.0 / (g + 1)) * scale
    r0 = spec.radii[0]
    if r0 >= 1:
        return EntropyBoundReport(delta, upper, upper, "R0>=1")
    lower = (rstar * r0) ** (1.0 / (g + 1)) * scale
    return EntropyBoundReport(delta, lower, upper, "R0<1")


def ellipsoid_entropy(spec, delta):
    _check_delta(delta)
    g = spec.gamma
    radius = spec.radii[g + 1]
    pref = CONSTANTS["ellipsoid_prefactor"]
    lower = pref * (radius / delta) ** (1.0 / (g + 1))
    if radius >= g + 1:
        return EntropyBoundReport(delta, lower, lower, "R>=gamma+1")
    upper = pref * delta ** (-1.0 / (g + 1))
    return EntropyBoundReport(delta, lower, upper, "R<gamma+1")


def full_holder_entropy(spec, delta):
    """Bounds for the full Hölder class via its polynomial + Hölder-sub split."""
    _check_delta(delta, below_one=True)
    poly = poly_cover_upper_report(spec, delta)
    sub = holder_sub_entropy(spec, delta)
    upper = poly.upper_log + sub.upper_log
    candidates = {
        "B1": poly_pack_lower_B1(spec, delta),
        "B2": poly_pack_B2_feasible(spec, delta).log_lower,
        "holder_sub": sub.lower_log,
    }
    winner = max(candidates, key=candidates.get)
    return EntropyBoundReport(
        delta, candidates[winner], upper, f"upper:{poly.branch}+holder_sub;lower:{winner}"
    )


def poly_sub_entropy(spec, delta):
    """Cover upper bound with the better of the two packing lower bounds."""
    poly = poly_cover_upper_report(spec, delta)
    b1 = poly_pack_lower_B1(spec, delta)
    b2 = poly_pack_B2_feasible(spec, delta).log_lower
    lower, tag = (b1, "B1") if b1 >= b2 else (b2, "B2")
    return EntropyBoundReport(delta, lower, poly.upper_log, f"upper:{poly.branch};lower:{tag}")


def class_entropy(spec, delta):
    """Dispatch on ``spec.kind`` to the matching two-sided bound."""
    handlers = {
        ClassKind.HOLDER_FULL: full_holder_entropy,
        ClassKind.POLY_SUB: poly_sub_entropy,
        ClassKind.HOLDER_SUB: holder_sub_entropy,
        ClassKind.ELLIPSOID: ellipsoid_entropy,
    }
    if spec.kind not in handlers:
        raise ValueError(f"no entropy bound implemented for class kind {spec.kind.value!r}")
    return handlers[spec.kind](spec, delta)


def dstar(d, k):
    """Number of distinct order-``k`` partial derivatives in ``d`` variables."""
    if d < 1 or k < 0:
        raise ValueError(f"need d >= 1 and k >= 0, got d={d}, k={k}")
    value = math.comb(d + k - 1, d - 1)
    if value > DSTAR_LIMIT:
        raise OverflowError(f"dstar(d={d}, k={k}) exceeds the 64-bit integer range")
    return value


def multivariate_entropy(spec, d, delta, sub):
    """Bounds for the d-variate Hölder subclass (``holder_sub_d``) or
    polynomial subclass (``poly_sub_d``); the latter has no lower bound."""
    _check_delta(delta, below_one=True)
    g = spec.gamma
    if sub == "holder_sub_d":
        log_best = max(
            math.log(dstar(d, k - 1)) + math.log(spec.radii[k]) - math.lgamma(k)
            for k in range(1, g + 2)
        )
        rstar = math.exp(max(log_best, 0.0))
        bound = d**d * rstar ** (d / (g + 1)) * delta ** (-d / (g + 1))
        return EntropyBoundReport(delta, bound, bound, "holder_sub_d")
    if sub == "poly_sub_d":
        ds = [dstar(d, k) for k in range(g + 1)]
        terms = [
            math.log(4.0 * (g + 1) * ds[k] / delta) + _log_ratio_factorial(spec.radii[k], k)
            for k in range(g + 1)
        ]
        if min(terms) >= 0:
            upper = math.fsum(ds[k] * terms[k] for k in range(g + 1))
            branch = "poly_sub_d:B1bar"
        else:
            upper = sum(ds) * math.log(1.0 / delta) + math.fsum(
                ds[k] * math.log(spec.radii[k]) for k in range(g + 1)
            )
            branch = "poly_sub_d:B2bar"
        return EntropyBoundReport(delta, None, upper, branch)
    raise ValueError(f"unknown multivariate subclass {sub!r}")


# ----------------------------------------------------------------------
# Legendre machinery


def pochhammer(a, j):
    out = 1.0
    for i in range(j):
        out *= a + i
    return out


def legendre_coeffs(taylor):
    """Legendre coefficients of ``sum_k taylor[k] x^k / k!`` on ``[-1, 1]``.

    ``taylor[k]`` is the k-th derivative at zero.
    """
    taylor = np.asarray(taylor, dtype=float)
    g = len(taylor) - 1
    out = np.zeros(g + 1)
    for k in range(g + 1):
        acc = 0.0
        m = 0
        while k + 2 * m <= g:
            j = k + 2 * m
            acc += taylor[j] / (2.0**j * math.factorial(m) * pochhammer(0.5, k + m + 1))
            m += 1
        out[k] = (k + 0.5) * acc
    return out


def legendre_l2_distance(theta, theta_prime):
    """Unweighted L2[-1, 1] distance between two Legendre expansions."""
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    if theta.shape != theta_prime.shape:
        raise ValueError(f"length mismatch: {theta.shape} vs {theta_prime.shape}")
    k = np.arange(len(theta))
    return float(np.sqrt(np.sum(2.0 / (2 * k + 1) * (theta - theta_prime) ** 2)))


# ----------------------------------------------------------------------
# Constructive sets


class SeparationError(RuntimeError):
    pass


def _pairwise_min_l2(members, domain):
    g = members.shape[1] - 1
    x, w = gauss_legendre(nodes_for_degree(2 * g), *domain)
    values = np.polynomial.polynomial.polyval(x, members.T)
    best = (math.inf, -1, -1)
    for i in range(len(values) - 1):
        diff = values[i + 1 :] - values[i]
        d2 = diff**2 @ w
        j = int(np.argmin(d2))
        if d2[j] < best[0]:
            best = (float(d2[j]), i, i + 1 + j)
    return math.sqrt(max(best[0], 0.0)), best[1], best[2]


def build_packing_set(spec, delta, b=1.0, max_members=PACKING_SIZE_CAP):
    """Grid-plus-gate packing of the polynomial subclass, verified by quadrature.

    The ``M_0`` grid values for the dominant coefficient are spread evenly
    over ``[-R/k!, R/k!]`` so every member stays inside the coefficient box;
    the remaining coefficients are switched on or off by the bits of the
    member index.
    """
    if b < 1:
        raise ValueError("b must be >= 1")
    feas = poly_pack_B2_feasible(spec, delta)
    if not feas.feasible:
        raise ValueError(
            f"packing infeasible at delta={delta}: M0={feas.m0}, need >= {2 ** (spec.gamma + 1)}"
        )
    if feas.m0 > max_members:
        raise ValueError(f"packing of {feas.m0} members exceeds cap {max_members}")
    g = spec.gamma
    kt = feas.k_tilde
    bounds = spec.coefficient_bounds
    grid = np.linspace(-bounds[kt], bounds[kt], feas.m0)
    others = [k for k in range(g + 1) if k != kt]
    gates = np.array(
        [spec.radii[k] * delta / (b * math.factorial(k) * (g + 1)) for k in others]
    )
    members = np.zeros((feas.m0, g + 1))
    members[:, kt] = grid
    for i in range(feas.m0):
        code = i % (2**g) if g > 0 else 0
        for bit, k in enumerate(others):
            if (code >> bit) & 1:
                members[i, k] = gates[bit]
    if np.any(np.abs(members) > bounds * (1 + 1e-12)):
        raise SeparationError("packing member left the coefficient box")
    sep, i, j = _pairwise_min_l2(members, spec.domain)
    if not sep > delta:
        raise SeparationError(
            f"members {i} and {j} are only {sep:.6g} apart (need > {delta:.6g})"
        )
    return PackingSet(members, float(delta), feas.m0, float(b), kt, gates, sep)


def product_cover_axes(spec, delta):
    """Per-coordinate grids whose product is a delta-cover in coefficient l1."""
    _check_delta(delta)
    g = spec.gamma
    share = delta / (g + 1)
    axes = []
    for half in spec.coefficient_bounds:
        n_points = math.ceil(half / share) + 1
        axes.append(np.linspace(-half, half, n_points))
    return axes


def cover_log_size(spec, delta):
    """Log cardinality of the product cover, computed without building it."""
    return math.fsum(math.log(len(a)) for a in product_cover_axes(spec, delta))


def build_product_cover(spec, delta, cap=COVER_SIZE_CAP):
    """Materialise the product cover as an ``(N, gamma+1)`` coefficient array."""
    axes = product_cover_axes(spec, delta)
    size = math.prod(len(a) for a in axes)
    if size > cap:
        raise ValueError(f"cover of size {size} exceeds cap {cap}")
    return np.array(list(itertools.product(*axes)))


def cover_check(spec, delta, n_samples=1000, rng=None):
    """Largest l1 gap from uniformly drawn coefficient vectors to the cover.

    A value ``<= delta`` certifies the sampled points are covered; the l1 gap
    bounds the sup-norm gap of the polynomials on ``[-1, 1]``.
    """
    rng = np.random.default_rng(rng)
    axes = product_cover_axes(spec, delta)
    bounds = spec.coefficient_bounds
    thetas = rng.uniform(-bounds, bounds, size=(n_samples, len(bounds)))
    gaps = np.zeros(n_samples)
    for k, axis in enumerate(axes):
        idx = np.clip(np.searchsorted(axis, thetas[:, k]), 1, len(axis) - 1)
        gaps += np.minimum(np.abs(thetas[:, k] - axis[idx - 1]), np.abs(thetas[:, k] - axis[idx]))
    return float(gaps.max())

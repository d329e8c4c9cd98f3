"""Monte Carlo harness: data generation, certified test functions, MISE sweeps."""

from __future__ import annotations

import hashlib
import math
import os
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy import linalg, stats

from phasefit import krr, regime
from phasefit.quadrature import composite_gauss_legendre

PRNG_ID = "numpy.random.PCG64"
SEED_MASK = (1 << 64) - 1
BUMP_GRID = 2048
MAX_FAILURE_FRACTION = 0.10
_CERT_RTOL = 1e-12


class CertificateError(ValueError):
    """A test function failed its class-membership check."""


class MonteCarloError(RuntimeError):
    pass


@dataclass(frozen=True)
class TestFunction:
    """Callable truth on [0, 1] with the evidence that it lies in its class."""

    __test__ = False  # keep pytest from collecting this as a test class

    name: str
    params: dict
    func: object = field(repr=False)
    certificate: dict = field(default_factory=dict)
    poly: Polynomial | None = field(default=None, repr=False)

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))


def _sobolev_norm_poly(p, gamma):
    """Norm from the initial-derivatives-plus-energy formula, exact for polynomials."""
    head = sum(float(p.deriv(k)(0.0)) ** 2 if k else float(p(0.0)) ** 2 for k in range(gamma + 1))
    top = p.deriv(gamma + 1)
    energy = (top * top).integ()
    return math.sqrt(head + float(energy(1.0) - energy(0.0)))


def poly_star(gamma, c_bar=1.0):
    """Vertex of the coefficient box ``|theta_0| <= C/6``, ``|theta_k| <= C/(6 gamma k!)``."""
    if gamma < 0 or not c_bar > 0:
        raise ValueError("poly_star needs gamma >= 0 and c_bar > 0")
    theta = [c_bar / 6.0] + [c_bar / (6.0 * gamma * math.factorial(k)) for k in range(1, gamma + 1)]
    p = Polynomial(theta)
    norm = _sobolev_norm_poly(p, gamma)
    cert = {"class": "sobolev", "gamma": gamma, "c_bar": c_bar, "norm": norm, "coefficients": theta}
    if norm > c_bar * (1 + _CERT_RTOL):
        raise CertificateError(f"PolyStar norm {norm} exceeds {c_bar}")
    return TestFunction("PolyStar", {"gamma": gamma, "c_bar": c_bar}, p, cert, p)


def bump(gamma, radii=None, c_bar=1.0, grid=BUMP_GRID):
    """``b x^(g+1) (1-x)^(g+1)`` with ``b`` the largest scale keeping every
    derivative up to order ``g+1`` within its radius on a ``grid``-point mesh.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    radii = tuple(float(r) for r in (radii if radii is not None else [1.0] * (gamma + 2)))
    if len(radii) != gamma + 2 or min(radii) <= 0:
        raise ValueError(f"need {gamma + 2} positive radii, got {radii}")
    base = Polynomial([0.0, 1.0]) ** (gamma + 1) * Polynomial([1.0, -1.0]) ** (gamma + 1)
    mesh = np.linspace(0.0, 1.0, grid)
    peaks = [np.max(np.abs(base.deriv(k)(mesh))) if k else np.max(np.abs(base(mesh))) for k in range(gamma + 2)]
    b = float(1.0 / max(pk / r for pk, r in zip(peaks, radii)))
    p = b * base

    ratios = [float(b * pk / r) for pk, r in zip(peaks, radii)]
    norm = _sobolev_norm_poly(p, gamma)
    cert = {
        "class": "holder_full+sobolev",
        "gamma": gamma,
        "b": b,
        "grid_points": grid,
        "derivative_ratios": ratios,
        "sobolev_norm": norm,
        "c_bar": c_bar,
    }
    if max(ratios) > 1 + _CERT_RTOL:
        raise CertificateError(f"Bump derivative bound violated: {ratios}")
    if norm > c_bar * (1 + _CERT_RTOL):
        raise CertificateError(f"Bump Sobolev norm {norm} exceeds {c_bar}")
    return TestFunction("Bump", {"gamma": gamma, "radii": list(radii), "c_bar": c_bar}, p, cert, p)


def ellipsoid_member(gamma, radius, m_terms, seed=0, c=1.0):
    """Cosine-basis member with ``sum theta_m^2 / mu_m = R^2``, ``mu_m = (c m)^(-2(g+1))``."""
    if m_terms < 1 or not radius > 0 or not c > 0:
        raise ValueError("ellipsoid_member needs m_terms >= 1, radius > 0, c > 0")
    m = np.arange(1, m_terms + 1, dtype=float)
    mu = (c * m) ** (-2.0 * (gamma + 1))
    signs = np.random.Generator(np.random.PCG64(seed)).choice([-1.0, 1.0], size=m_terms)
    theta = radius * np.sqrt(mu) / math.sqrt(m_terms) * signs
    norm_sq = float(np.sum(theta**2 / mu))
    freqs = (m - 1.0) * math.pi
    scale = np.where(m == 1, 1.0, math.sqrt(2.0))

    def func(x):
        x = np.asarray(x, dtype=float)
        return np.cos(np.multiply.outer(x, freqs)) @ (scale * theta)

    cert = {
        "class": "ellipsoid",
        "gamma": gamma,
        "basis": "phi_1 = 1, phi_m = sqrt(2) cos((m-1) pi x)",
        "norm_sq": norm_sq,
        "radius_sq": radius**2,
    }
    if not math.isclose(norm_sq, radius**2, rel_tol=1e-12):
        raise CertificateError(f"ellipsoid norm {norm_sq} != {radius ** 2}")
    params = {"gamma": gamma, "radius": radius, "m_terms": m_terms, "seed": seed, "c": c}
    return TestFunction("EllipsoidMember", params, func, cert)


_TRUTHS = {"PolyStar": poly_star, "Bump": bump, "EllipsoidMember": ellipsoid_member}


def test_function(name, **params):
    try:
        builder = _TRUTHS[name]
    except KeyError:
        raise ValueError(f"unknown test function {name!r}; choose from {sorted(_TRUTHS)}") from None
    return builder(**params)


test_function.__test__ = False


def gen_data(truth, n, sigma, seed):
    """Uniform design on [0, 1] with Gaussian noise of s.d. ``sigma``."""
    if n < 1 or sigma < 0:
        raise ValueError("gen_data needs n >= 1 and sigma >= 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    xs = rng.random(n)
    noise = rng.standard_normal(n)
    ys = truth(xs) + sigma * noise if sigma > 0 else truth(xs)
    return xs, np.asarray(ys, dtype=float)


def ise(f_hat, f, quad_points=256):
    """``int_0^1 (f_hat - f)^2`` by composite Gauss-Legendre."""
    if quad_points < 8:
        raise ValueError("quad_points must be >= 8")
    x, w = composite_gauss_legendre(quad_points, 0.0, 1.0)
    diff = np.asarray(f_hat(x), dtype=float) - np.asarray(f(x), dtype=float)
    return float(np.dot(w, diff * diff))


def smse(f_hat, f, xs):
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("smse needs at least one point")
    diff = np.asarray(f_hat(xs), dtype=float) - np.asarray(f(xs), dtype=float)
    return float(np.mean(diff * diff))


def kl_pair(f, g, n, sigma, quad_points=256):
    """KL divergence between the data laws under truths ``f`` and ``g``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return n / (2.0 * sigma**2) * ise(f, g, quad_points)


# -- experiment configuration ----------------------------------------------

_FIXED = re.compile(r"^Fixed\((\d+)\)$")
TOKENS = ("GammaStar", "GammaMax", "Heuristic")


def parse_degree_token(token):
    """Normalise a degree token; plain integers mean ``Fixed(k)``."""
    if isinstance(token, bool):
        raise ValueError(f"bad degree token {token!r}")
    if isinstance(token, int):
        if token < 0:
            raise ValueError(f"bad degree token {token!r}")
        return f"Fixed({token})"
    if token in TOKENS or _FIXED.match(str(token)):
        return str(token)
    raise ValueError(f"bad degree token {token!r}; use GammaStar, GammaMax, Heuristic or Fixed(k)")


@dataclass
class ExperimentConfig:
    n_grid: list
    sigma: float
    truth: dict
    degrees: list
    lambda_multiplier: float = 1.0
    replications: int = 100
    quadrature_points: int = 256
    seed: int = 0
    density: str = "Uniform01"

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        self.degrees = [parse_degree_token(t) for t in self.degrees]
        if not self.n_grid or min(self.n_grid) < 1:
            raise ValueError("n_grid must be a non-empty list of positive sizes")
        if not self.degrees:
            raise ValueError("degrees must not be empty")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.lambda_multiplier > 0:
            raise ValueError("lambda_multiplier must be positive")
        if self.quadrature_points < 8:
            raise ValueError("quadrature_points must be >= 8")
        if not 0 <= self.seed <= SEED_MASK:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.density != "Uniform01":
            raise ValueError(f"unsupported density {self.density!r}")
        if "id" not in self.truth:
            raise ValueError("truth needs an 'id'")

    @property
    def gamma_true(self):
        return int(self.truth.get("params", {}).get("gamma", 0))

    def build_truth(self):
        return test_function(self.truth["id"], **self.truth.get("params", {}))


@dataclass
class MiseResult:
    n: int
    degree_used: int
    lam: float
    mise_mean: float
    mise_stderr: float
    smse_mean: float
    replications: int
    seed: int
    stderr_defined: bool = True
    failures: int = 0
    degree_token: str = ""
    sigma: float = float("nan")
    gamma_true: int = 0


def derive_seed(seed, n, degree, rep):
    """Per-replication seed: ``seed XOR blake2b(n, degree, rep)`` folded to 64 bits."""
    digest = hashlib.blake2b(f"{n}:{degree}:{rep}".encode(), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) & SEED_MASK


def resolve_degree(token, n, sigma, gamma):
    """Map a degree token to ``(kernel order, lambda)`` before the multiplier.

    GammaStar follows the regime: order ``g*`` with ``(g*+1)/n`` when small-n,
    order ``g`` with the classical rule otherwise. GammaMax and Fixed(k) use
    the classical rule for their order. Heuristic uses order ``h-1`` with the
    small-n rule ``h/n``.
    """
    token = parse_degree_token(token)
    if token == "GammaStar":
        if sigma == 0:
            # noiseless data sit in the large-n regime for every n
            return gamma, krr.classical_lambda(n, gamma)
        rep = regime.classify(n, sigma**2, gamma)
        order = rep.gamma_star if rep.regime == regime.SMALL_N else gamma
        return order, krr.lambda_rule(rep)
    if token == "GammaMax":
        return gamma, krr.classical_lambda(n, gamma)
    if token == "Heuristic":
        h = regime.heuristic_degree(n)
        return h - 1, h / n
    order = int(_FIXED.match(token).group(1))
    return order, krr.classical_lambda(n, order)


def mise_mc(config, n, degree, lam, truth=None, token=""):
    """Average ISE and SMSE of order-``degree`` KRR over ``config.replications`` datasets."""
    truth = truth if truth is not None else config.build_truth()
    if n < degree + 1:
        warnings.warn(f"n={n} is below degree+1={degree + 1}", stacklevel=2)
    ises, smses, failures, last_error = [], [], 0, None
    for r in range(1, config.replications + 1):
        xs, ys = gen_data(truth, n, config.sigma, derive_seed(config.seed, n, degree, r))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                model = krr.fit(degree, xs, ys, lam)
        except (krr.FitError, linalg.LinAlgError) as exc:
            failures += 1
            last_error = exc
            continue
        ises.append(ise(model, truth, config.quadrature_points))
        fitted = krr.fitted_values(model, ys)
        smses.append(float(np.mean((fitted - truth(xs)) ** 2)))
    if failures > MAX_FAILURE_FRACTION * config.replications or not ises:
        raise MonteCarloError(
            f"{failures}/{config.replications} fits failed at n={n}, degree={degree}: {last_error}"
        )
    ises = np.asarray(ises)
    reps = len(ises)
    stderr = float(np.std(ises, ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return MiseResult(
        n=n,
        degree_used=degree,
        lam=float(lam),
        mise_mean=float(ises.mean()),
        mise_stderr=stderr,
        smse_mean=float(np.mean(smses)),
        replications=reps,
        seed=config.seed,
        stderr_defined=reps > 1,
        failures=failures,
        degree_token=token,
        sigma=config.sigma,
        gamma_true=config.gamma_true,
    )


def _thread_count():
    cap = os.environ.get("PHASEFIT_THREADS")
    if cap is None:
        return 1
    try:
        return max(1, int(cap))
    except ValueError:
        raise ValueError(f"PHASEFIT_THREADS must be an integer, got {cap!r}") from None


def sweep(config, threads=None):
    """One row per ``(n, degree token)``, ordered by ``n_grid`` then ``degrees``."""
    truth = config.build_truth()
    gamma = config.gamma_true
    cells = []
    for n in config.n_grid:
        for token in config.degrees:
            order, lam = resolve_degree(token, n, config.sigma, gamma)
            cells.append((n, order, lam * config.lambda_multiplier, token))

    def run(cell):
        n, order, lam, token = cell
        return mise_mc(config, n, order, lam, truth=truth, token=token)

    threads = threads if threads is not None else _thread_count()
    if threads <= 1:
        return [run(c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map preserves input order, so rows come back in cell order
        return list(pool.map(run, cells))


def slope_fit(ns, mises):
    """OLS of ``log(mise)`` on ``log(n)``: ``(slope, intercept, r_squared)``."""
    res = _log_regression(ns, mises)
    return float(res.slope), float(res.intercept), float(res.rvalue**2)


def slope_ci(ns, mises, level=0.95):
    """Two-sided t confidence interval for the log-log slope."""
    res = _log_regression(ns, mises)
    dof = len(ns) - 2
    half = stats.t.ppf(0.5 + level / 2.0, dof) * res.stderr
    return float(res.slope - half), float(res.slope + half)


def _log_regression(ns, mises):
    ns = np.asarray(ns, dtype=float)
    mises = np.asarray(mises, dtype=float)
    if ns.shape != mises.shape or ns.size < 3:
        raise ValueError("slope_fit needs at least three (n, mise) pairs")
    if np.any(ns <= 0) or np.any(mises <= 0):
        raise ValueError("slope_fit needs positive n and mise values")
    return stats.linregress(np.log(ns), np.log(mises))

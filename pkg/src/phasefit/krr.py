"""Kernel ridge regression with Sobolev kernels.

The fitted function is ``f(x) = n^{-1/2} sum_i pi_i K(x, x_i)`` with
``pi = (K_n + lam I)^{-1} y / sqrt(n)`` and ``K_n`` the ``1/n``-scaled
Gram matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from phasefit.kernels import SobolevKernel, cross_kernel, kernel_matrix, rkhs_norm_sq

JITTER_SCALE = 1e-10
RESIDUAL_RTOL = 1e-8
ROUNDING_FACTOR = 4.0
LAMBDA_MIN = 1e-10
LAMBDA_MAX = 1e6
NORM_RTOL = 1e-6
# order-0 fits switch to the O(n) tridiagonal solver above this size
BANDED_MIN_N = 256


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class KrrModel:
    order_k: int
    xs: np.ndarray
    pi_hat: np.ndarray
    lam: float
    rkhs_norm: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.pi_hat) != len(self.xs):
            raise ValueError("pi_hat and xs differ in length")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")

    @property
    def n(self):
        return len(self.xs)

    def __call__(self, x):
        return predict(self, x)


def lambda_rule(regime, sigma=1.0, r_radius=None):
    """Regularisation level for the degree the regime recommends.

    ``r_radius`` switches to the ellipsoid form that rescales the large-n
    rule by ``R^{-4(g+1)/(2g+3)}``. ``sigma`` does not enter the rules and
    is accepted for call-site symmetry.
    """
    if regime.n < 1:
        raise ValueError("lambda_rule needs n >= 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    n = regime.n
    if regime.regime == "SmallN" or regime.regime == "Analytic":
        return (regime.gamma_star + 1) / n
    g = regime.gamma
    lam = classical_lambda(n, g)
    if r_radius is not None:
        lam *= r_radius ** (-4.0 * (g + 1) / (2 * g + 3))
    return lam


def classical_lambda(n, order_k):
    """``(1/n)^{2(k+1)/(2k+3)}``, the large-n rule for an order-``k`` kernel."""
    return (1.0 / n) ** (2.0 * (order_k + 1) / (2 * order_k + 3))


def _validate_data(xs, ys):
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.size == 0 or xs.shape != ys.shape:
        raise ValueError(f"need matching non-empty xs and ys, got {xs.shape} and {ys.shape}")
    if np.any(np.isnan(xs)) or np.any(np.isnan(ys)):
        raise ValueError("NaN in training data")
    if np.any(xs < 0) or np.any(xs > 1):
        raise ValueError("design points must lie in [0, 1]")
    return xs, ys


def _dense_solve(km, rhs, lam):
    a = km.entries + lam * np.eye(km.n)
    factor = linalg.cho_factor(a, lower=True, check_finite=False)
    pi = linalg.cho_solve(factor, rhs, check_finite=False)
    for _ in range(2):
        resid = rhs - a @ pi
        pi = pi + linalg.cho_solve(factor, resid, check_finite=False)
    return pi


def _extended_solve(km, rhs, lam, sweeps=6):
    """Refinement with long-double residuals.

    Near lambda_min the system has condition number ~1/lam and a float64
    solve leaves ~1e-6 relative noise in pi'K pi, enough to make the norm
    curve non-monotone. Residuals in extended precision remove it.
    """
    a = km.entries + lam * np.eye(km.n)
    factor = linalg.cho_factor(a, lower=True, check_finite=False)
    a_ext = km.entries.astype(np.longdouble)
    a_ext[np.diag_indices(km.n)] += np.longdouble(lam)
    b_ext = np.asarray(rhs, dtype=np.longdouble)
    pi = linalg.cho_solve(factor, rhs, check_finite=False).astype(np.longdouble)
    for _ in range(sweeps):
        resid = (b_ext - a_ext @ pi).astype(float)
        pi = pi + linalg.cho_solve(factor, resid, check_finite=False)
    return pi


def _extended_norm(km, pi_ext):
    return max(float(pi_ext @ (km.entries.astype(np.longdouble) @ pi_ext)), 0.0)


class _BrownianGram:
    """Order-0 Gram matrix in factored form.

    With sorted points, ``1 + min(x_i, x_j) = sum_{l <= min(i,j)} d_l`` where
    ``d_1 = 1 + x_1`` and ``d_l = x_l - x_{l-1}``, so ``K = L D L^T`` with
    ``L`` the lower-triangular matrix of ones.
    """

    def __init__(self, xs):
        self.order = np.argsort(xs, kind="stable")
        xs_sorted = xs[self.order]
        n = len(xs)
        d = np.diff(xs_sorted, prepend=0.0)
        d[0] += 1.0
        self.d = d / n
        self.n = n

    def matvec(self, v):
        vs = v[self.order]
        # L D L^T v = cumsum(d * reverse-cumsum(v))
        tail = np.cumsum(vs[::-1])[::-1]
        out_sorted = np.cumsum(self.d * tail)
        out = np.empty_like(out_sorted)
        out[self.order] = out_sorted
        return out

    def solve(self, rhs, lam):
        # (L D L^T + lam I) pi = b  <=>  (D + lam T) w = L^{-1} b,
        # pi = L^{-T} w, where T = L^{-1} L^{-T} is tridiagonal.
        n = self.n
        b = rhs[self.order]
        lb = np.diff(b, prepend=0.0)
        ab = np.zeros((2, n))
        diag = np.full(n, 2.0 * lam)
        diag[0] = lam
        ab[1] = self.d + diag
        ab[0, 1:] = -lam
        w = linalg.solveh_banded(ab, lb, check_finite=False)
        pi_sorted = w - np.append(w[1:], 0.0)
        out = np.empty_like(pi_sorted)
        out[self.order] = pi_sorted
        return out


def fit(kernel_order, xs, ys, lam, method="auto"):
    """Fit KRR weights; see module docstring for the estimator.

    ``method`` is ``dense`` (Cholesky of the Gram matrix), ``banded``
    (order 0 only, tridiagonal reformulation) or ``auto``.
    """
    return _fit(kernel_order, xs, ys, lam, method, extended=False)


def _fit(kernel_order, xs, ys, lam, method, extended):
    xs, ys = _validate_data(xs, ys)
    if not lam >= 0 or not math.isfinite(lam):
        raise ValueError(f"lambda must be a finite non-negative number, got {lam}")
    n = len(xs)
    if n < kernel_order + 1:
        warnings.warn(
            f"n={n} design points for an order-{kernel_order} kernel; fit is underdetermined",
            stacklevel=2,
        )
    if method == "auto":
        method = "banded" if kernel_order == 0 and n >= BANDED_MIN_N else "dense"
    if method == "banded" and kernel_order != 0:
        raise ValueError("banded solver only covers the order-0 kernel")
    rhs = ys / math.sqrt(n)

    if method == "banded":
        op = _BrownianGram(xs)
        matvec, solve, km = op.matvec, op.solve, None
        trace = float((1.0 + xs).sum() / n)
    else:
        km = kernel_matrix(SobolevKernel(kernel_order), xs)
        matvec = km.entries.__matmul__
        solver = _extended_solve if extended else _dense_solve
        solve = lambda b, l: solver(km, b, l)  # noqa: E731
        trace = float(np.trace(km.entries))

    jitter = 0.0
    try:
        pi = solve(rhs, lam)
        if not np.all(np.isfinite(pi)):
            raise linalg.LinAlgError("non-finite solution")
    except (linalg.LinAlgError, ValueError):
        jitter = JITTER_SCALE * trace / n
        try:
            pi = solve(rhs, lam + jitter)
        except (linalg.LinAlgError, ValueError) as exc:
            raise FitError(f"system singular even with jitter {jitter:.3e}") from exc

    lam_eff = lam + jitter
    norm = _extended_norm(km, pi) if extended else None
    pi = np.asarray(pi, dtype=float)
    resid = float(np.max(np.abs(matvec(pi) + lam_eff * pi - rhs)))
    # Gram entries are positive, so matvec(|pi|) is |A| |pi|; the second term is
    # the rounding floor of any double-precision pi, which dominates when
    # lam is tiny and |pi| ~ 1/lam.
    abs_pi = np.abs(pi)
    floor = ROUNDING_FACTOR * n * np.finfo(float).eps * float(np.max(matvec(abs_pi) + lam_eff * abs_pi))
    tol = RESIDUAL_RTOL * (1.0 + float(np.max(np.abs(ys)))) + floor
    if not resid <= tol:
        raise FitError(f"solver residual {resid:.3e} exceeds {tol:.3e}")
    if norm is None:
        norm = max(float(pi @ matvec(pi)), 0.0)
    meta = {"method": method, "jitter": jitter, "residual": resid, "residual_tol": tol}
    xs = xs.copy()
    xs.setflags(write=False)
    pi.setflags(write=False)
    return KrrModel(int(kernel_order), xs, pi, float(lam_eff), norm, meta)


def predict(model, x):
    """Evaluate the fitted function at scalar or array ``x`` in [0, 1]."""
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = cross_kernel(SobolevKernel(model.order_k), x, model.xs)
    out = k @ model.pi_hat / math.sqrt(model.n)
    return float(out[0]) if scalar else out


def fitted_values(model, ys):
    """Fitted values at the training points without forming the Gram matrix.

    From ``(K_n + lam I) pi = y / sqrt(n)`` the fit at ``x_i`` is
    ``y_i - sqrt(n) lam pi_i``; accurate to the solver residual.
    """
    ys = np.asarray(ys, dtype=float).ravel()
    if ys.shape != model.pi_hat.shape:
        raise ValueError("ys does not match the fitted model")
    return ys - math.sqrt(model.n) * model.lam * model.pi_hat


def _norm_curve(km, rhs):
    # the exact computation _fit(extended=True) performs, so the bisection
    # target and the returned model agree bit for bit
    def norm_at(lam):
        return _extended_norm(km, _extended_solve(km, rhs, lam))

    return norm_at


def fit_constrained(kernel_order, xs, ys, c_bar, lambda_min=LAMBDA_MIN, lambda_max=LAMBDA_MAX):
    """Least squares over the RKHS ball of radius ``c_bar``.

    Solved through the penalised dual: bisection on ``log lambda`` until the
    fitted RKHS norm squared matches ``c_bar**2`` to ``NORM_RTOL``.
    """
    if not c_bar > 0:
        raise ValueError("c_bar must be positive")
    xs, ys = _validate_data(xs, ys)
    target = c_bar**2
    model = _fit(kernel_order, xs, ys, lambda_min, "dense", extended=True)
    if model.rkhs_norm <= target:
        return model
    km = kernel_matrix(SobolevKernel(kernel_order), xs)
    norm_at = _norm_curve(km, ys / math.sqrt(len(xs)))
    if norm_at(lambda_max) > target:
        raise FitError(f"norm still above c_bar^2 at lambda={lambda_max:g}")
    lo, hi = math.log(lambda_min), math.log(lambda_max)
    best_lam, best_gap = math.exp(hi), math.inf
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        lam = math.exp(mid)
        value = norm_at(lam)
        gap = abs(value - target)
        if gap < best_gap:
            best_lam, best_gap = lam, gap
        if gap <= 0.1 * NORM_RTOL * target or hi - lo <= 1e-15:
            break
        if value > target:
            lo = mid
        else:
            hi = mid
    model = _fit(kernel_order, xs, ys, best_lam, "dense", extended=True)
    if abs(model.rkhs_norm - target) > NORM_RTOL * target:
        raise FitError(
            f"constrained fit missed the radius: |{model.rkhs_norm:.9g} - {target:.9g}|"
        )
    return model


def training_smse(model, ys):
    ys = np.asarray(ys, dtype=float)
    return float(np.mean((predict(model, model.xs) - ys) ** 2))


__all__ = [
    "FitError",
    "KrrModel",
    "classical_lambda",
    "fit",
    "fit_constrained",
    "fitted_values",
    "lambda_rule",
    "predict",
    "rkhs_norm_sq",
    "training_smse",
]

"""Kernel (RKHS) interpolation: Gram solves, prediction, the power function,
maximum-likelihood parameter search, error metrics and synthetic black boxes.

The interpolant is the minimum-norm function matching the data, equivalently
the BLUP of Kriging; with a polynomial trend the universal-Kriging system is
solved by generalized least squares on the trend and kernel interpolation of
the residuals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .designs import Design
from .errors import ConfigurationError, FitError, ValidationError

DEFAULT_NUGGET = 1e-10
MAX_NUGGET = 1e-6

_TREND_DEGREES = ("none", "constant", "linear", "quadratic")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters.

    ``gaussian_isotropic`` is exp(-theta * ||x-y||^2) (one positive theta,
    exponent fixed at 2). ``generalized_exponential`` is
    exp(-sum_j theta_j |x_j - y_j|^nu) with per-axis rates and 0 < nu <= 2.
    """

    family: str
    theta: np.ndarray
    nu: float = 2.0

    def __post_init__(self):
        if self.family not in ("gaussian_isotropic", "generalized_exponential"):
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        th = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if np.any(th <= 0):
            raise ConfigurationError("theta must be positive")
        if not (0 < self.nu <= 2):
            raise ConfigurationError("nu must lie in (0, 2]")
        if self.family == "gaussian_isotropic":
            if self.nu != 2.0:
                raise ConfigurationError("gaussian_isotropic fixes nu = 2")
            if th.size != 1:
                raise ConfigurationError("gaussian_isotropic takes a single theta")
        object.__setattr__(self, "theta", th)

    def theta_for_dim(self, dim: int) -> np.ndarray:
        if self.theta.size == 1:
            return np.full(dim, float(self.theta[0]))
        if self.theta.size != dim:
            raise ConfigurationError(
                f"theta has length {self.theta.size}, expected 1 or {dim}"
            )
        return self.theta


@dataclass(frozen=True)
class TrendSpec:
    """Polynomial trend: none, constant, linear or quadratic."""

    degree: str = "none"

    def __post_init__(self):
        if self.degree not in _TREND_DEGREES:
            raise ConfigurationError(f"trend degree must be one of {_TREND_DEGREES}")

    def basis_size(self, dim: int) -> int:
        return {
            "none": 0,
            "constant": 1,
            "linear": 1 + dim,
            "quadratic": 1 + dim + dim * (dim + 1) // 2,
        }[self.degree]

    def basis(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        n, d = pts.shape
        if self.degree == "none":
            return np.empty((n, 0))
        cols = [np.ones(n)]
        if self.degree in ("linear", "quadratic"):
            cols.extend(pts[:, j] for j in range(d))
        if self.degree == "quadratic":
            for j in range(d):
                for l in range(j, d):
                    cols.append(pts[:, j] * pts[:, l])
        return np.column_stack(cols)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """K(x, y) for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ConfigurationError("kernel_eval needs points of equal dimension")
    th = spec.theta_for_dim(x.size)
    return float(np.exp(-np.sum(th * np.abs(x - y) ** spec.nu)))


def gram_matrix(spec: KernelSpec, xs: np.ndarray, zs: np.ndarray | None = None) -> np.ndarray:
    """K[X, Z] (or K[X, X]), accumulated one axis at a time."""
    xs = np.atleast_2d(xs)
    zs = xs if zs is None else np.atleast_2d(zs)
    th = spec.theta_for_dim(xs.shape[1])
    acc = np.zeros((xs.shape[0], zs.shape[0]))
    for j in range(xs.shape[1]):
        diff = np.abs(xs[:, j, None] - zs[None, :, j])
        if spec.nu == 2.0:
            acc += th[j] * diff * diff
        else:
            acc += th[j] * diff**spec.nu
    return np.exp(-acc)


@dataclass(frozen=True)
class Interpolator:
    """Fitted kernel interpolation state; immutable, safe to share."""

    design: Design
    values: np.ndarray
    spec: KernelSpec
    trend: TrendSpec
    nugget: float
    coefficients: np.ndarray
    trend_coefficients: np.ndarray
    _cho: tuple = field(repr=False, default=None)


def _factorize(gram: np.ndarray, nugget: float):
    """Cholesky of gram + nugget*I, escalating the nugget tenfold as needed."""
    eta = nugget
    while True:
        try:
            cho = cho_factor(gram + eta * np.eye(gram.shape[0]), lower=True)
            return cho, eta
        except np.linalg.LinAlgError:
            if eta >= MAX_NUGGET:
                scaled = gram + eta * np.eye(gram.shape[0])
                cond = float(np.linalg.cond(scaled))
                raise FitError(
                    f"Gram factorization failed at nugget {eta:g} "
                    f"(condition estimate {cond:.3e})"
                ) from None
            eta = eta * 10.0 if eta > 0 else DEFAULT_NUGGET


def fit(
    design: Design,
    values,
    spec: KernelSpec,
    trend: TrendSpec = TrendSpec("none"),
    nugget: float = DEFAULT_NUGGET,
) -> Interpolator:
    """Solve the (universal-)Kriging system for the given data.

    With no trend this is (K + eta I) c = f. With a trend the coefficients
    are the GLS solution and the kernel part interpolates the residuals, so
    exact interpolation holds as eta -> 0.
    """
    f = np.asarray(values, dtype=float).ravel()
    n = design.n
    if f.size != n:
        raise ConfigurationError(f"got {f.size} values for {n} design points")
    p = trend.basis_size(design.dim)
    if n < p:
        raise ConfigurationError(f"trend {trend.degree!r} needs at least {p} points")
    gram = gram_matrix(spec, design.points)
    cho, eta = _factorize(gram, nugget)
    if p == 0:
        coef = cho_solve(cho, f)
        beta = np.empty(0)
    else:
        basis = trend.basis(design.points)
        ainv_basis = cho_solve(cho, basis)
        ainv_f = cho_solve(cho, f)
        normal = basis.T @ ainv_basis
        beta = np.linalg.solve(normal, basis.T @ ainv_f)
        coef = cho_solve(cho, f - basis @ beta)
    return Interpolator(
        design=design,
        values=f,
        spec=spec,
        trend=trend,
        nugget=eta,
        coefficients=coef,
        trend_coefficients=beta,
        _cho=cho,
    )


def _cho_of(interp: Interpolator):
    if interp._cho is not None:
        return interp._cho
    gram = gram_matrix(interp.spec, interp.design.points)
    return cho_factor(gram + interp.nugget * np.eye(interp.design.n), lower=True)


def predict(interp: Interpolator, x) -> float:
    """Interpolant value at one point."""
    return float(predict_many(interp, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def predict_many(interp: Interpolator, xs: np.ndarray) -> np.ndarray:
    """Interpolant values at rows of xs."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    cross = gram_matrix(interp.spec, xs, interp.design.points)
    out = cross @ interp.coefficients
    if interp.trend.degree != "none":
        out = out + interp.trend.basis(xs) @ interp.trend_coefficients
    return out


def power_function(interp: Interpolator, x) -> float:
    """Norm of the pointwise error functional (Kriging standard deviation).

    Only defined here for trend-free interpolation, where the uniform error
    bound |f - s| <= ||f|| * P(x) applies.
    """
    if interp.trend.degree != "none":
        raise ConfigurationError("power_function requires trend 'none'")
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    k_vec = gram_matrix(interp.spec, x2, interp.design.points)[0]
    cho = _cho_of(interp)
    quad = float(k_vec @ cho_solve(cho, k_vec))
    return math.sqrt(max(0.0, 1.0 - quad))


# ---------------------------------------------------------------------------
# maximum likelihood


def log_likelihood(
    design: Design,
    values,
    spec: KernelSpec,
    trend: TrendSpec = TrendSpec("none"),
    nugget: float = DEFAULT_NUGGET,
) -> float:
    """Profiled Gaussian-process log-likelihood (process variance maximized out)."""
    f = np.asarray(values, dtype=float).ravel()
    n = design.n
    gram = gram_matrix(spec, design.points)
    cho, _ = _factorize(gram, nugget)
    if trend.degree != "none":
        basis = trend.basis(design.points)
        beta = np.linalg.solve(basis.T @ cho_solve(cho, basis), basis.T @ cho_solve(cho, f))
        resid = f - basis @ beta
    else:
        resid = f
    sigma2 = float(resid @ cho_solve(cho, resid)) / n
    if sigma2 <= 0:
        sigma2 = 1e-300
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    return -0.5 * n * math.log(sigma2) - 0.5 * logdet


def mle_fit(
    design: Design,
    values,
    family: str,
    theta_bounds: tuple[float, float] = (1e-2, 1e4),
    nu_bounds: tuple[float, float] = (0.5, 2.0),
    budget: int = 120,
    rng: np.random.Generator | None = None,
    trend: TrendSpec = TrendSpec("none"),
    nugget: float = DEFAULT_NUGGET,
    starts: int = 3,
) -> KernelSpec:
    """Best kernel parameters found by multi-start coordinate search.

    The search walks log(theta) (and nu for the generalized exponential)
    with shrinking steps, spending at most ``budget`` likelihood
    evaluations; the first start is the center of the bounds, later starts
    are random. Returns the best spec evaluated, ill-conditioned points
    are skipped.
    """
    if design.n < 3:
        raise ConfigurationError("mle_fit needs at least 3 points")
    if not (0 < theta_bounds[0] < theta_bounds[1]):
        raise ConfigurationError("theta_bounds must be positive and ordered")
    if not (0 < nu_bounds[0] < nu_bounds[1] <= 2.0):
        raise ConfigurationError("nu_bounds must be ordered within (0, 2]")
    if budget < 1:
        raise ConfigurationError("budget must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    d = design.dim
    log_lo, log_hi = math.log(theta_bounds[0]), math.log(theta_bounds[1])
    n_theta = 1 if family == "gaussian_isotropic" else d
    with_nu = family == "generalized_exponential"

    def make_spec(params: np.ndarray) -> KernelSpec:
        theta = np.exp(params[:n_theta])
        nu = float(params[n_theta]) if with_nu else 2.0
        return KernelSpec(family=family, theta=theta, nu=nu)

    evals = 0
    best_ll = -np.inf
    best_spec = None

    def evaluate(params: np.ndarray) -> float:
        nonlocal evals, best_ll, best_spec
        evals += 1
        spec = make_spec(params)
        try:
            ll = log_likelihood(design, values, spec, trend=trend, nugget=nugget)
        except FitError:
            return -np.inf
        if ll > best_ll:
            best_ll = ll
            best_spec = spec
        return ll

    center = np.full(n_theta, 0.5 * (log_lo + log_hi))
    if with_nu:
        center = np.append(center, 0.5 * (nu_bounds[0] + nu_bounds[1]))
    start_points = [center]
    for _ in range(starts - 1):
        p = log_lo + (log_hi - log_lo) * rng.random(n_theta)
        if with_nu:
            p = np.append(p, nu_bounds[0] + (nu_bounds[1] - nu_bounds[0]) * rng.random())
        start_points.append(p)

    n_params = n_theta + (1 if with_nu else 0)
    lower = np.full(n_params, log_lo)
    upper = np.full(n_params, log_hi)
    if with_nu:
        lower[-1], upper[-1] = nu_bounds

    for start in start_points:
        if evals >= budget:
            break
        cur = np.clip(start, lower, upper)
        cur_ll = evaluate(cur)
        steps = 0.25 * (upper - lower)
        while evals < budget and np.max(steps / (upper - lower)) > 1e-3:
            moved = False
            for axis in range(n_params):
                for sign in (1.0, -1.0):
                    if evals >= budget:
                        break
                    cand = cur.copy()
                    cand[axis] = np.clip(cand[axis] + sign * steps[axis], lower[axis], upper[axis])
                    if cand[axis] == cur[axis]:
                        continue
                    ll = evaluate(cand)
                    if ll > cur_ll:
                        cur, cur_ll = cand, ll
                        moved = True
                        break
            if not moved:
                steps *= 0.5
    if best_spec is None:
        raise FitError("all likelihood evaluations were ill-conditioned")
    return best_spec


# ---------------------------------------------------------------------------
# error metrics and synthetic black boxes


@dataclass(frozen=True)
class ErrorReport:
    mre: float
    max_re: float
    mse: float
    n_test: int

    def to_dict(self) -> dict:
        return {"mre": self.mre, "max_re": self.max_re, "mse": self.mse, "n_test": self.n_test}


def error_metrics(truth, predictions) -> ErrorReport:
    """Mean/max relative error and mean squared error of predictions."""
    t = np.asarray(truth, dtype=float).ravel()
    p = np.asarray(predictions, dtype=float).ravel()
    if t.size != p.size or t.size < 1:
        raise ConfigurationError("truth and predictions must have equal nonzero length")
    zero = np.flatnonzero(t == 0.0)
    if zero.size:
        raise ValidationError(
            f"relative error undefined: truth is zero at index {int(zero[0])}"
        )
    rel = np.abs((t - p) / t)
    return ErrorReport(
        mre=float(rel.mean()),
        max_re=float(rel.max()),
        mse=float(((t - p) ** 2).mean()),
        n_test=int(t.size),
    )


class SyntheticBlackbox:
    """Deterministic smooth test function, bounded away from zero."""

    def __init__(self, kind: str, dim: int, seed: int):
        if kind not in ("rkhs_mixture", "smooth_ridge"):
            raise ConfigurationError(f"unknown blackbox kind {kind!r}")
        self.kind = kind
        self.dim = dim
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed & 0x7FFFFFFF, 0xB1ACB0]))
        if kind == "rkhs_mixture":
            self.n_bumps = 8
            self.centers = rng.random((self.n_bumps, dim))
            self.amplitudes = 0.5 + rng.random(self.n_bumps)
            self.theta = 8.0
            self.offset = 2.0
        else:
            w = rng.standard_normal(dim)
            self.w1 = w / np.linalg.norm(w)
            w2 = rng.standard_normal(dim)
            self.w2 = w2 / np.linalg.norm(w2)
            self.offset = 3.0

    def __call__(self, x) -> float | np.ndarray:
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if self.kind == "rkhs_mixture":
            sq = ((pts[:, None, :] - self.centers[None, :, :]) ** 2).sum(-1)
            out = self.offset + np.exp(-self.theta * sq) @ self.amplitudes
        else:
            r1 = pts @ self.w1
            r2 = pts @ self.w2
            out = self.offset + np.sin(2.0 * math.pi * r1) + 0.5 * r2 * r2
        return float(out[0]) if single else out

    def matched_kernel(self) -> KernelSpec:
        """Kernel generating the rkhs_mixture bumps (for span-membership tests)."""
        if self.kind != "rkhs_mixture":
            raise ConfigurationError("matched_kernel applies to rkhs_mixture only")
        return KernelSpec(family="gaussian_isotropic", theta=np.array([self.theta]), nu=2.0)


def synthetic_blackbox(kind: str, dim: int, seed: int) -> SyntheticBlackbox:
    return SyntheticBlackbox(kind, dim, seed)


# ---------------------------------------------------------------------------
# model export / import


def interpolator_to_json(interp: Interpolator) -> str:
    payload = {
        "design": interp.design.points.tolist(),
        "domain_label": interp.design.domain_label,
        "values": interp.values.tolist(),
        "kernel": {
            "family": interp.spec.family,
            "theta": interp.spec.theta.tolist(),
            "nu": interp.spec.nu,
        },
        "trend": interp.trend.degree,
        "nugget": interp.nugget,
        "coefficients": interp.coefficients.tolist(),
        "trend_coefficients": interp.trend_coefficients.tolist(),
    }
    return json.dumps(payload, indent=2)


def interpolator_from_json(text: str) -> Interpolator:
    payload = json.loads(text)
    spec = KernelSpec(
        family=payload["kernel"]["family"],
        theta=np.asarray(payload["kernel"]["theta"], dtype=float),
        nu=float(payload["kernel"]["nu"]),
    )
    return Interpolator(
        design=Design(points=np.asarray(payload["design"], dtype=float),
                      domain_label=payload.get("domain_label", "")),
        values=np.asarray(payload["values"], dtype=float),
        spec=spec,
        trend=TrendSpec(payload["trend"]),
        nugget=float(payload["nugget"]),
        coefficients=np.asarray(payload["coefficients"], dtype=float),
        trend_coefficients=np.asarray(payload["trend_coefficients"], dtype=float),
        _cho=None,
    )

"""Analytic predictions for the mutation statistics of a coalescent point process.

Each function returns an :class:`AnalyticPrediction`. Closed forms are used
where they exist and carry a zero error bound; everything else goes through
the quadrature routines of :mod:`coalpoint.numerics`. Diverging first-order
rates are reported as the value ``INFINITE`` rather than as errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from . import _kernels
from .genealogy import DefectiveLawError, open_uniform
from .numerics import (
    QuadratureResult,
    integrate_cumulative,
    integrate_finite,
    integrate_semi_infinite,
)
from .scale_model import BirthDeath, CriticalBD, ScaleModel, Stable, Yule, format_model

__all__ = [
    "INFINITE",
    "AnalyticPrediction",
    "MonteCarloEstimate",
    "limit_sites_rate",
    "clt_variance",
    "expected_site_count_exact",
    "limit_site_spectrum",
    "limit_site_spectrum_mc_form",
    "brownian_growth_constant",
    "phi",
    "stable_laplace_transform",
    "limit_allele_fraction",
    "limit_allele_spectrum",
    "allele_spectrum_series",
    "spectrum_limit_applicable",
]

INFINITE = math.inf

_TOL = 1e-12


@dataclass(frozen=True)
class AnalyticPrediction:
    value: float
    error_bound: float
    formula_id: str
    inputs: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.error_bound >= 0:
            raise ValueError("error bound must be nonnegative")

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    reps: int


def _inputs(model=None, theta=None, **extra):
    out = {}
    if model is not None:
        out["model"] = format_model(model)
    if theta is not None:
        out["theta"] = float(theta)
    out.update(extra)
    return out


def _check_theta(theta, positive=False):
    if not math.isfinite(theta) or theta < 0 or (positive and theta == 0):
        raise ValueError("theta must be " + ("positive" if positive else "nonnegative") + " and finite")


def _is_closed(model: ScaleModel) -> bool:
    return model.horizon is None and model._moments_closed() is not None


def _power(base_log1p_arg, k):
    """(1 - q)**(k-1) from q, staying in log space so large k cannot underflow."""
    if k == 1:
        return np.ones_like(base_log1p_arg)
    with np.errstate(divide="ignore"):
        return np.exp((k - 1) * np.log1p(-base_log1p_arg))


def _mass_center(model: ScaleModel, k: int) -> float:
    """Where (1 - 1/W)^(k-1) / W^2 peaks, roughly: survival near 1/(k+1)."""
    if k <= 1 or model.defect_mass() >= 1.0 / (k + 1):
        return model.median()
    return max(model.median(), float(model.sample(1.0 / (k + 1))))


def _integrate_x(model: ScaleModel, f, tail_exponent=None, k: int = 1) -> QuadratureResult:
    """int f over the support of H, with f vanishing at the top of a bounded support.

    For the k-dependent integrands the mass drifts outwards as k grows; the
    partition is seeded with a geometric grid around its center.
    """
    center = _mass_center(model, k)
    points = center * 2.0 ** np.arange(-12, 2)
    if model.horizon is not None:
        return integrate_finite(f, 0.0, model.horizon, _TOL, points=points)
    return integrate_semi_infinite(
        f, _TOL, tail_decay_hint=tail_exponent, split=4.0 * center, points=points,
    )


# -- first-order rate and CLT ----------------------------------------------------

def _mean_with_error(model: ScaleModel) -> Tuple[float, float]:
    mean, _ = model.moments()
    return mean, (0.0 if _is_closed(model) or math.isinf(mean) else _TOL)


def limit_sites_rate(model: ScaleModel, theta: float) -> AnalyticPrediction:
    """lim S_n / n = theta E(H); INFINITE when E(H) diverges."""
    _check_theta(theta)
    inputs = _inputs(model, theta)
    if theta == 0:
        return AnalyticPrediction(0.0, 0.0, "sites_rate", inputs)
    mean, err = _mean_with_error(model)
    return AnalyticPrediction(theta * mean, theta * err, "sites_rate", inputs)


def clt_variance(model: ScaleModel, theta: float) -> AnalyticPrediction:
    """Variance of the Gaussian limit of sqrt(n) (S_n/n - theta E H)."""
    _check_theta(theta)
    mean, var = model.moments()
    if not (math.isfinite(mean) and math.isfinite(var)):
        raise ValueError("CLT inapplicable: branch length has infinite mean or variance")
    err = 0.0 if _is_closed(model) and not isinstance(model, BirthDeath) else (theta + theta**2) * 1e-11
    return AnalyticPrediction(
        theta * mean + theta**2 * var, err if theta else 0.0, "clt_variance", _inputs(model, theta)
    )


# -- site frequency spectrum ---------------------------------------------------

def expected_site_count_exact(model: ScaleModel, theta: float, n: int, k: int) -> AnalyticPrediction:
    """E S_n(k) = theta int (1-1/W)^(k-1) ((n-k-1)/W^2 + 2/W) dx."""
    _check_theta(theta)
    if not (isinstance(n, (int, np.integer)) and isinstance(k, (int, np.integer))):
        raise TypeError("n and k must be integers")
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= n-1, got k={k}, n={n}")
    inputs = _inputs(model, theta, n=int(n), k=int(k))
    if theta == 0:
        return AnalyticPrediction(0.0, 0.0, "expected_site_count", inputs)
    mean, _ = model.moments()
    if math.isinf(mean):
        return AnalyticPrediction(INFINITE, 0.0, "expected_site_count", inputs)

    def inner(x):
        inv = 1.0 / model.effective_scale(x)
        return inv * inv * _power(inv, k)

    def outer(x):
        inv = 1.0 / model.effective_scale(x)
        return inv * _power(inv, k)

    a = _integrate_x(model, inner, k=k)
    b = _integrate_x(model, outer, k=k)
    value = theta * ((n - k - 1) * a.value + 2.0 * b.value)
    err = theta * ((n - k - 1) * a.error_estimate + 2.0 * b.error_estimate)
    return AnalyticPrediction(value, err, "expected_site_count", inputs)


def spectrum_limit_applicable(model: ScaleModel) -> Tuple[bool, str]:
    """Whether int W^-2 < inf, i.e. E min(H_1, H_2) < inf."""
    p = model.survival_tail_exponent()
    if p is None or 2.0 * p > 1.0:
        return True, ""
    if p == 0:
        return False, "defective branch law: min(H_1, H_2) is infinite with positive probability"
    return False, f"survival decays like x^-{p:g}, so E min(H_1, H_2) is infinite"


def limit_site_spectrum(
    model: ScaleModel, theta: float, k: int, method: str = "auto"
) -> AnalyticPrediction:
    """lim S_n(k)/n = theta int W^-2 (1 - 1/W)^(k-1) dx.

    ``method`` is ``"auto"`` (closed form when known), ``"closed"`` or
    ``"quadrature"``.
    """
    _check_theta(theta)
    if k < 1:
        raise ValueError("k must be at least 1")
    ok, why = spectrum_limit_applicable(model)
    if not ok:
        raise ValueError(f"spectrum limit inapplicable: {why}")
    inputs = _inputs(model, theta, k=int(k))
    if theta == 0:
        return AnalyticPrediction(0.0, 0.0, "site_spectrum_limit", inputs)
    closed = None
    if model.horizon is None and isinstance(model, Yule):
        closed = theta / (model.a * k * (k + 1)), "site_spectrum_limit_yule"
    elif model.horizon is None and isinstance(model, CriticalBD):
        closed = theta / (model.a * k), "site_spectrum_limit_critical"
    if method == "closed" and closed is None:
        raise ValueError(f"no closed form for {model.family}")
    if closed is not None and method in ("auto", "closed"):
        return AnalyticPrediction(closed[0], 0.0, closed[1], inputs)
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")

    def f(x):
        inv = 1.0 / model.effective_scale(x)
        return inv * inv * _power(inv, k)

    p = model.survival_tail_exponent()
    res = _integrate_x(model, f, None if p is None else 2.0 * p, k=k)
    return AnalyticPrediction(theta * res.value, theta * res.error_estimate, "site_spectrum_limit", inputs)


def limit_site_spectrum_mc_form(
    model: ScaleModel, theta: float, k: int, stream: np.random.Generator, reps: int = 10**5
) -> MonteCarloEstimate:
    """Monte Carlo estimate of theta E (min(H_1, H_{k+1}) - max(H_2..H_k))^+."""
    _check_theta(theta)
    if k < 1:
        raise ValueError("k must be at least 1")
    if reps < 2:
        raise ValueError("need at least two replicates for a standard error")
    if theta == 0:
        return MonteCarloEstimate(0.0, 0.0, reps)
    if model.defect_mass() > 0:
        raise DefectiveLawError("defective branch law: apply horizon or condition_finite")
    draws = np.asarray(model.sample(open_uniform(stream, (reps, k + 1))))
    gaps = theta * _kernels.spectrum_gap(draws)
    return MonteCarloEstimate(float(gaps.mean()), float(gaps.std(ddof=1) / math.sqrt(reps)), reps)


# -- superlinear regimes -------------------------------------------------------

def brownian_growth_constant(model: ScaleModel, theta: float) -> AnalyticPrediction:
    """lim S_n / (n ln n) = theta / c for W = 1 + c x (in probability)."""
    _check_theta(theta)
    if model.horizon is None and isinstance(model, CriticalBD):
        c = model.a
    elif model.horizon is None and isinstance(model, Stable) and model.alpha == 2:
        c = model.c
    else:
        raise ValueError("Brownian growth constant needs W = 1 + c x (CriticalBD or Stable with alpha = 2)")
    return AnalyticPrediction(theta / c, 0.0, "brownian_growth", _inputs(model, theta))


def _check_alpha(alpha):
    if not 1 < alpha < 2:
        raise ValueError("phi and the stable limit need alpha in (1, 2)")


def _phi_with_error(alpha, x):
    _check_alpha(alpha)
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("phi needs x > 0")
    s = 1.0 - alpha

    def f(u):
        return np.power(u, s) * np.exp(-u)

    out = np.empty(x.shape)
    err = np.zeros(x.shape)
    finite = np.isfinite(x)
    if np.any(finite):
        xs = x[finite]
        ints, errs = integrate_cumulative(f, xs, _TOL, singular_exponent_at_0=s)
        out[finite] = np.power(xs, s) * np.exp(-xs) + ints
        err[finite] = errs
    if not np.all(finite):
        whole = integrate_semi_infinite(f, _TOL, singular_exponent_at_0=s)
        out[~finite] = whole.value
        err[~finite] = whole.error_estimate
    return out, err


def phi(alpha: float, x):
    """x^(1-alpha) e^-x + int_0^x s^(1-alpha) e^-s ds, decreasing to Gamma(2-alpha)."""
    out, _ = _phi_with_error(alpha, x)
    return out if out.ndim else float(out)


def stable_laplace_transform(alpha: float, c: float, theta: float, lam: float) -> AnalyticPrediction:
    """lim E exp(-lam S_n / n^beta), beta = 1/(alpha-1), for W = 1 + c x^(alpha-1).

    Evaluated as int_0^inf e^-v exp(-kappa phi(v)) dv with
    kappa = theta^(alpha-1) lam^(alpha-1) / c.
    """
    _check_alpha(alpha)
    if not c > 0:
        raise ValueError("c must be positive")
    _check_theta(theta, positive=True)
    if not lam >= 0:
        raise ValueError("lambda must be nonnegative")
    beta = 1.0 / (alpha - 1.0)
    inputs = {"alpha": float(alpha), "c": float(c), "theta": float(theta), "lambda": float(lam), "beta": beta}
    if lam == 0:
        return AnalyticPrediction(1.0, 0.0, "stable_laplace", inputs)
    kappa = (theta * lam) ** (alpha - 1.0) / c
    errs = []

    def f(v):
        ph, e = _phi_with_error(alpha, v)
        errs.append(float(np.max(e)) if e.size else 0.0)
        return np.exp(-v - kappa * ph)

    res = integrate_semi_infinite(f, 1e-11)
    # |d/dphi exp(-kappa phi)| <= kappa, and the outer weights integrate to at most 1
    inner = kappa * max(errs, default=0.0)
    return AnalyticPrediction(res.value, res.error_estimate + inner, "stable_laplace", inputs)


# -- allelic partition -----------------------------------------------------------

def _allele_integral(model: ScaleModel, theta: float, g) -> QuadratureResult:
    """int theta e^{-theta x} g(W_theta(x)) dx, after u = 1 - e^{-theta x}."""
    top = 1.0 if model.horizon is None else -math.expm1(-theta * model.horizon)

    def f(u):
        with np.errstate(divide="ignore"):
            x = -np.log1p(-u) / theta
        return g(np.asarray(model.w_theta(theta, x), dtype=float))

    # high-order terms concentrate where W_theta is large; seed a grid in x
    x = np.geomspace(1e-3, 64.0, 17) / theta
    if model.horizon is not None:
        # below a horizon W_theta blows up like 1/(t - x)
        x = np.concatenate([x, model.horizon * (1.0 - 2.0 ** -np.arange(1.0, 40.0))])
    points = -np.expm1(-theta * x)
    return integrate_finite(f, 0.0, top, _TOL, points=points[points < top])


def limit_allele_fraction(model: ScaleModel, theta: float, method: str = "auto") -> AnalyticPrediction:
    """lim A_n / n = int theta e^{-theta x} / W_theta(x) dx."""
    _check_theta(theta)
    inputs = _inputs(model, theta)
    if theta == 0:
        return AnalyticPrediction(0.0, 0.0, "allele_fraction", inputs)
    closed = model.horizon is None and isinstance(model, CriticalBD)
    if method == "closed" and not closed:
        raise ValueError(f"no closed form for {model.family}")
    if closed and method in ("auto", "closed"):
        t = theta / model.a
        return AnalyticPrediction(t * math.log1p(1.0 / t), 0.0, "allele_fraction_critical", inputs)
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    res = _allele_integral(model, theta, lambda w: 1.0 / w)
    return AnalyticPrediction(res.value, res.error_estimate, "allele_fraction", inputs)


def limit_allele_spectrum(
    model: ScaleModel, theta: float, k: int, method: str = "auto"
) -> AnalyticPrediction:
    """lim A_n(k) / n = int theta e^{-theta x} W_theta^-2 (1 - 1/W_theta)^(k-1) dx."""
    _check_theta(theta, positive=True)
    if k < 1:
        raise ValueError("k must be at least 1")
    inputs = _inputs(model, theta, k=int(k))
    closed = model.horizon is None and isinstance(model, CriticalBD)
    if method == "closed" and not closed:
        raise ValueError(f"no closed form for {model.family}")
    if closed and method in ("auto", "closed"):
        t = theta / model.a
        value = math.exp(math.log(t / k) - k * math.log1p(t))
        return AnalyticPrediction(value, 0.0, "allele_spectrum_critical", inputs)
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")

    def g(w):
        inv = 1.0 / w
        return inv * inv * _power(inv, k)

    res = _allele_integral(model, theta, g)
    return AnalyticPrediction(res.value, res.error_estimate, "allele_spectrum", inputs)


def allele_spectrum_series(
    model: ScaleModel, theta: float, tol: float = 1e-12, max_k: int = 10**4, method: str = "auto"
):
    """limit_allele_spectrum for k = 1, 2, ... until the terms drop below ``tol``.

    Returns the list of predictions. Stops early only once a term is below
    ``tol`` and the terms have started to decrease.
    """
    out = []
    prev = math.inf
    for k in range(1, max_k + 1):
        pred = limit_allele_spectrum(model, theta, k, method)
        out.append(pred)
        if pred.value < tol and pred.value <= prev:
            break
        prev = pred.value
    return out

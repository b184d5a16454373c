"""Branch-length laws given by their scale function ``W``.

A branch length ``H`` satisfies ``P(H > x) = 1 / W(x)``. Four families have
explicit scale functions:

============  =====================================  =========================
family        W(x)                                   parameters
============  =====================================  =========================
Yule          exp(a x)                               a > 0
BirthDeath    (d - b exp((b - d) x)) / (d - b)        b > 0, d != b
CriticalBD    1 + a x                                a > 0
Stable        1 + c x**(alpha - 1)                   1 < alpha <= 2, c > 0
============  =====================================  =========================

Any model may carry a ``horizon`` t, in which case branch lengths follow the
law conditioned on ``H < t``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np

from .numerics import integrate_cumulative, integrate_finite, integrate_semi_infinite

_EPS = np.finfo(float).eps

__all__ = [
    "ScaleModel",
    "Yule",
    "BirthDeath",
    "CriticalBD",
    "Stable",
    "parse_model",
    "format_model",
    "evaluate",
    "defect_mass",
    "condition_finite",
    "bernoulli_census",
    "sample_branch_length",
    "w_theta",
    "moments",
]

ArrayLike = Union[float, np.ndarray]


class ScaleModel:
    """Base class; subclasses supply ``_W``, ``_dW``, ``_W_inv`` and ``_survival``.

    The underscore methods describe the untruncated law. The public methods
    apply the horizon, if any.
    """

    horizon: Optional[float]

    # -- family hooks -------------------------------------------------------
    def _W(self, x):
        raise NotImplementedError

    def _dW(self, x):
        raise NotImplementedError

    def _W_inv(self, w):
        raise NotImplementedError

    def _survival(self, x):
        return 1.0 / self._W(x)

    def _W_sup(self) -> float:
        """Limit of W at infinity."""
        return math.inf

    def _check_horizon(self):
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")

    # -- public -------------------------------------------------------------
    @property
    def family(self) -> str:
        return type(self).__name__

    @property
    def upper(self) -> float:
        """Right end of the support of H (excluding a possible atom at infinity)."""
        return math.inf if self.horizon is None else float(self.horizon)

    def scale(self, x: ArrayLike) -> ArrayLike:
        """The family scale function W (ignores the horizon)."""
        return self._W(_check_x(x))

    def scale_derivative(self, x: ArrayLike) -> ArrayLike:
        return self._dW(_check_x(x))

    def survival(self, x: ArrayLike) -> ArrayLike:
        """P(H > x), conditioned on H < horizon when a horizon is set."""
        x = _check_x(x)
        if self.horizon is None:
            return self._survival(x)
        self._check_below_horizon(x)
        tail = self._survival(self.horizon)
        return (self._survival(x) - tail) / (1.0 - tail)

    def effective_scale(self, x: ArrayLike) -> ArrayLike:
        """1 / survival(x); equals W for untruncated models."""
        x = _check_x(x)
        if self.horizon is None:
            return self._W(x)
        self._check_below_horizon(x)
        wt = self._W(self.horizon)
        return (wt - 1.0) * self._W(x) / (wt - self._W(x))

    def effective_scale_derivative(self, x: ArrayLike) -> ArrayLike:
        x = _check_x(x)
        if self.horizon is None:
            return self._dW(x)
        self._check_below_horizon(x)
        wt = self._W(self.horizon)
        return (wt - 1.0) * wt * self._dW(x) / (wt - self._W(x)) ** 2

    def _check_below_horizon(self, x):
        if np.any(np.asarray(x) >= self.horizon):
            raise ValueError(f"x must lie below the horizon t={self.horizon}")

    def evaluate(self, x: float) -> Tuple[float, float, float]:
        """Return ``(W(x), W'(x), survival(x))``."""
        return float(self.scale(x)), float(self.scale_derivative(x)), float(self.survival(x))

    def defect_mass(self) -> float:
        """P(H = inf). Only untruncated subcritical birth-death laws are defective."""
        if self.horizon is not None:
            return 0.0
        return 1.0 - 1.0 / self._W_sup() if math.isfinite(self._W_sup()) else 0.0

    def sample(self, u: ArrayLike) -> ArrayLike:
        """Invert the survival function: return x with survival(x) = u.

        Draws below the defect mass map to ``inf``.
        """
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("uniform draws must lie in (0, 1)")
        if self.horizon is None:
            w = 1.0 / u
        else:
            tail = self._survival(self.horizon)
            w = 1.0 / (u * (1.0 - tail) + tail)
        with np.errstate(invalid="ignore", divide="ignore"):
            x = np.where(w >= self._W_sup(), np.inf, self._W_inv(np.minimum(w, _below(self._W_sup()))))
        if self.horizon is not None:
            # rounding can land exactly on the horizon for u near 0
            x = np.minimum(x, np.nextafter(self.horizon, 0.0))
        return x if x.ndim else float(x)

    def median(self) -> float:
        """A characteristic length, used to place quadrature split points."""
        if self.defect_mass() >= 0.5:
            return 1.0
        return float(self.sample(0.5))

    # -- mutation-thinned scale function ------------------------------------
    def _w_theta_closed(self, theta, x):
        return None

    def w_theta(self, theta: float, x: ArrayLike, abs_tol: float = 1e-12) -> ArrayLike:
        """``1 + int_0^x W'(u) exp(-theta u) du``.

        Closed form for the finite-variation families; quadrature otherwise
        (stable laws with alpha < 2 and every truncated law).
        """
        if not theta > 0:
            raise ValueError("theta must be positive")
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError("x must be nonnegative")
        if self.horizon is None:
            closed = self._w_theta_closed(theta, x)
            if closed is not None:
                return closed if closed.ndim else float(closed)
        out = np.full(x.shape, math.inf)
        inside = x < self.upper
        if np.any(inside):
            # W_theta <= W, so no point asking for less than rounding level of W;
            # near a horizon the rounding of x itself moves the answer by eps x W'
            top = float(np.max(x[inside]))
            tol = max(abs_tol, 1e-14 * float(self.effective_scale(top)),
                      8.0 * _EPS * top * float(self.effective_scale_derivative(top)) if top > 0 else 0.0)
            out[inside] = 1.0 + integrate_cumulative(
                lambda u: self.effective_scale_derivative(u) * np.exp(-theta * u),
                x[inside], tol, singular_exponent_at_0=self._derivative_exponent_at_0(),
            )[0]
        return out if out.ndim else float(out)

    def w_theta_limit(self, theta: float) -> float:
        """W_theta at infinity, so that P(H^theta = inf) = 1/W_theta(inf)."""
        if not theta > 0:
            raise ValueError("theta must be positive")
        if self.horizon is not None:
            return math.inf
        closed = self._w_theta_limit_closed(theta)
        if closed is not None:
            return closed
        sigma = self._derivative_exponent_at_0()
        return 1.0 + integrate_semi_infinite(
            lambda u: self._dW(u) * np.exp(-theta * u), 1e-12,
            split=1.0 / theta, singular_exponent_at_0=sigma,
        ).value

    def _w_theta_limit_closed(self, theta):
        return None

    def _derivative_exponent_at_0(self):
        return None

    # -- moments --------------------------------------------------------------
    def _moments_closed(self):
        return None

    def moments(self) -> Tuple[float, float]:
        """``(E H, Var H)``; ``inf`` when the defining integral diverges."""
        if self.horizon is None:
            closed = self._moments_closed()
            if closed is not None:
                return closed
        if self.defect_mass() > 0:
            return math.inf, math.inf
        if self.horizon is None:
            # only reached by families with finite moments and no closed variance
            mean = integrate_semi_infinite(self.survival, 1e-12, split=self.median()).value
            second = integrate_semi_infinite(
                lambda x: 2.0 * x * self.survival(x), 1e-12, split=self.median()
            ).value
        else:
            t = self.horizon
            mean = integrate_finite(lambda x: self.survival(x), 0.0, t, 1e-12).value
            second = integrate_finite(lambda x: 2.0 * x * self.survival(x), 0.0, t, 1e-12).value
        return mean, second - mean * mean

    # -- transforms -----------------------------------------------------------
    def census(self, p: float) -> "ScaleModel":
        raise NotImplementedError

    def condition_finite(self) -> "ScaleModel":
        raise ValueError("condition_finite applies only to subcritical birth-death laws")

    def truncate(self, horizon: float) -> "ScaleModel":
        return replace(self, horizon=horizon)

    # -- tail metadata for quadrature -----------------------------------------
    def survival_tail_exponent(self) -> Optional[float]:
        """p with survival(x) ~ C x**-p, or None for geometric decay / bounded support."""
        return None


def _check_x(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("x must be nonnegative")
    return arr if arr.ndim else float(arr)


def _below(w):
    return w if not math.isfinite(w) else np.nextafter(w, 0.0)


def _check_census_p(p):
    if not 0 < p <= 1:
        raise ValueError("census probability must lie in (0, 1]")


@dataclass(frozen=True)
class Yule(ScaleModel):
    a: float = 1.0
    horizon: Optional[float] = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("Yule birth rate must be positive")
        self._check_horizon()

    def _W(self, x):
        return np.exp(self.a * x)

    def _dW(self, x):
        return self.a * np.exp(self.a * x)

    def _W_inv(self, w):
        return np.log(w) / self.a

    def _survival(self, x):
        return np.exp(-self.a * x)

    def _w_theta_closed(self, theta, x):
        r = self.a - theta
        if r == 0:
            return 1.0 + self.a * x
        return 1.0 + self.a * np.expm1(r * x) / r

    def _w_theta_limit_closed(self, theta):
        return math.inf if self.a >= theta else 1.0 + self.a / (theta - self.a)

    def _moments_closed(self):
        return 1.0 / self.a, 1.0 / self.a**2

    def census(self, p):
        _check_census_p(p)
        if self.horizon is not None:
            raise ValueError("census is defined for untruncated laws only")
        if p == 1:
            return self
        return BirthDeath(self.a * p, -self.a * (1.0 - p))


@dataclass(frozen=True)
class BirthDeath(ScaleModel):
    """Linear birth-death law with birth rate ``b`` and death rate ``d``.

    ``d`` may be negative: that is what a Bernoulli census of a supercritical
    law produces (``d - b (1 - p)``), and the scale function stays valid.
    """

    b: float = 1.0
    d: float = 0.5
    horizon: Optional[float] = None

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("birth rate must be positive")
        if self.b == self.d:
            raise ValueError("b == d is the critical law; use CriticalBD")
        self._check_horizon()

    @property
    def r(self):
        return self.b - self.d

    def _W(self, x):
        return (self.d - self.b * np.exp(self.r * x)) / (self.d - self.b)

    def _dW(self, x):
        return self.b * np.exp(self.r * x)

    def _W_inv(self, w):
        return np.log((self.d - w * (self.d - self.b)) / self.b) / self.r

    def _survival(self, x):
        if self.r > 0:
            e = np.exp(-self.r * x)
            return self.r * e / (self.b - self.d * e)
        return (self.d - self.b) / (self.d - self.b * np.exp(self.r * x))

    def _W_sup(self):
        return math.inf if self.r > 0 else self.d / (self.d - self.b)

    def _w_theta_closed(self, theta, x):
        s = self.r - theta
        if s == 0:
            return 1.0 + self.b * x
        return 1.0 + self.b * np.expm1(s * x) / s

    def _w_theta_limit_closed(self, theta):
        s = self.r - theta
        return math.inf if s >= 0 else 1.0 - self.b / s

    def _moments_closed(self):
        if self.r < 0:
            return math.inf, math.inf
        if self.d == 0:
            return 1.0 / self.b, 1.0 / self.b**2
        mean = math.log(self.b / self.r) / self.d
        return mean, self._variance(mean)

    def _variance(self, mean):
        second = integrate_semi_infinite(
            lambda x: 2.0 * x * self._survival(x), 1e-13, split=1.0 / self.r
        ).value
        return second - mean * mean

    def census(self, p):
        _check_census_p(p)
        if self.horizon is not None:
            raise ValueError("census is defined for untruncated laws only")
        if p == 1:
            return self
        return BirthDeath(self.b * p, self.d - self.b * (1.0 - p))

    def survival_tail_exponent(self):
        if self.horizon is None and self.r < 0:
            return 0.0
        return None

    def condition_finite(self):
        if self.r >= 0 or self.horizon is not None:
            raise ValueError("condition_finite applies only to untruncated subcritical laws (b < d)")
        return BirthDeath(self.d, self.b)


@dataclass(frozen=True)
class CriticalBD(ScaleModel):
    a: float = 1.0
    horizon: Optional[float] = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("critical rate must be positive")
        self._check_horizon()

    def _W(self, x):
        return 1.0 + self.a * x

    def _dW(self, x):
        return self.a + 0.0 * x

    def _W_inv(self, w):
        return (w - 1.0) / self.a

    def _w_theta_closed(self, theta, x):
        return 1.0 - self.a * np.expm1(-theta * x) / theta

    def _w_theta_limit_closed(self, theta):
        return 1.0 + self.a / theta

    def _moments_closed(self):
        return math.inf, math.inf

    def census(self, p):
        _check_census_p(p)
        if self.horizon is not None:
            raise ValueError("census is defined for untruncated laws only")
        return CriticalBD(self.a * p)

    def survival_tail_exponent(self):
        return None if self.horizon is not None else 1.0


@dataclass(frozen=True)
class Stable(ScaleModel):
    """Stable law in censused form, W = 1 + c x**(alpha - 1).

    ``c`` is a census intensity and may take any positive value.
    """

    alpha: float = 1.5
    c: float = 1.0
    horizon: Optional[float] = None

    def __post_init__(self):
        if not 1 < self.alpha <= 2:
            raise ValueError("stable index must lie in (1, 2]")
        if not self.c > 0:
            raise ValueError("census intensity must be positive")
        self._check_horizon()

    def _W(self, x):
        return 1.0 + self.c * np.power(x, self.alpha - 1.0)

    def _dW(self, x):
        if self.alpha == 2:
            return self.c + 0.0 * x
        with np.errstate(divide="ignore"):
            return self.c * (self.alpha - 1.0) * np.power(x, self.alpha - 2.0)

    def _W_inv(self, w):
        return np.power((w - 1.0) / self.c, 1.0 / (self.alpha - 1.0))

    def _derivative_exponent_at_0(self):
        return self.alpha - 2.0 if self.alpha < 2 else None

    def _w_theta_closed(self, theta, x):
        if self.alpha == 2:
            return 1.0 - self.c * np.expm1(-theta * x) / theta
        return None

    def _w_theta_limit_closed(self, theta):
        a = self.alpha
        return 1.0 + self.c * math.gamma(a) * theta ** (1.0 - a)

    def _moments_closed(self):
        return math.inf, math.inf

    def census(self, p):
        if not p > 0:
            raise ValueError("census intensity must be positive")
        if self.horizon is not None:
            raise ValueError("census is defined for untruncated laws only")
        return Stable(self.alpha, self.c * p)

    def survival_tail_exponent(self):
        return None if self.horizon is not None else self.alpha - 1.0


# -- functional interface -----------------------------------------------------

def evaluate(model: ScaleModel, x: float) -> Tuple[float, float, float]:
    return model.evaluate(x)


def defect_mass(model: ScaleModel) -> float:
    return model.defect_mass()


def condition_finite(model: ScaleModel) -> ScaleModel:
    return model.condition_finite()


def bernoulli_census(model: ScaleModel, p: float) -> ScaleModel:
    return model.census(p)


def sample_branch_length(model: ScaleModel, u: ArrayLike) -> ArrayLike:
    return model.sample(u)


def w_theta(model: ScaleModel, theta: float, x: ArrayLike) -> ArrayLike:
    return model.w_theta(theta, x)


def moments(model: ScaleModel) -> Tuple[float, float]:
    return model.moments()


# -- model specification grammar ---------------------------------------------

_FAMILIES = {
    "yule": (Yule, {"a": "a"}),
    "bd": (BirthDeath, {"b": "b", "d": "d"}),
    "critical": (CriticalBD, {"a": "a"}),
    "stable": (Stable, {"alpha": "alpha", "c": "c"}),
}

_SPEC_RE = re.compile(r"^\s*(\w+)\s*:\s*(.*)$")


def parse_model(spec: str) -> ScaleModel:
    """Parse ``yule:a=1.0``, ``bd:b=1.0,d=2.0``, ``critical:a=1.0``,
    ``stable:alpha=1.5,c=1.0``, each optionally followed by ``,horizon=10``."""
    m = _SPEC_RE.match(spec)
    if not m:
        raise ValueError(f"cannot parse model spec {spec!r}")
    name, body = m.group(1).lower(), m.group(2)
    if name not in _FAMILIES:
        raise ValueError(f"unknown family {name!r}; expected one of {sorted(_FAMILIES)}")
    cls, fields = _FAMILIES[name]
    kwargs = {}
    for item in filter(None, (s.strip() for s in body.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"expected key=value in {item!r}")
        if key != "horizon" and key not in fields:
            raise ValueError(f"unknown parameter {key!r} for family {name!r}")
        kwargs[fields.get(key, key)] = float(value)
    missing = set(fields.values()) - set(kwargs)
    if missing:
        raise ValueError(f"missing parameters {sorted(missing)} for family {name!r}")
    return cls(**kwargs)


def format_model(model: ScaleModel) -> str:
    for name, (cls, fields) in _FAMILIES.items():
        if type(model) is cls:
            parts = [f"{k}={float(getattr(model, v))!r}" for k, v in fields.items()]
            if model.horizon is not None:
                parts.append(f"horizon={float(model.horizon)!r}")
            return f"{name}:" + ",".join(parts)
    raise TypeError(f"not a scale model: {model!r}")

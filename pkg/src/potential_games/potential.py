"""Potential functions phi(t, R) and the numerical diagnostics built on them.

Three potential families are supported:

* ``exponential``: ``exp(sqrt(2)*eta*R - eta**2 * t)``, the Hedge potential.
* ``normal_hedge``: ``exp(R**2 / (2(t+1))) / sqrt(t+1)`` for ``R >= 0`` and
  ``1/sqrt(t+1)`` for ``R < 0``.
* ``gaussian_final``: the heat-kernel smoothing of a final potential,
  ``E[f(R + sqrt(T - t) Z)]`` with ``Z ~ N(0, 1)``, evaluated by Gauss-Hermite
  quadrature.

All three solve the driftless backward Kolmogorov equation
``d/dt phi + 1/2 d^2/dR^2 phi = 0`` (NormalHedge only on ``R > 0``).

Every evaluator accepts scalars or numpy arrays for ``R``.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArgumentError, DomainError, PreconditionError

SQRT2 = math.sqrt(2.0)

#: derivatives must exceed this to count as strictly positive
POSITIVITY_TOL = 1e-12
#: default Gauss-Hermite node count
DEFAULT_QUADRATURE_ORDER = 64
#: grid used to validate finals when the caller does not supply one
DEFAULT_GRID = tuple(np.linspace(-4.0, 4.0, 33))
MAX_DERIVATIVE_ORDER = 6

_EPS = np.finfo(float).eps


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def fd_step(order: int, x) -> np.ndarray:
    """Step for a central difference of the given order at ``x``.

    Balances O(h^2) truncation against rounding amplified by ``h**-order``.
    """
    scale = np.maximum(1.0, np.abs(np.asarray(x, dtype=float)))
    return _EPS ** (1.0 / (order + 2)) * scale


def central_difference(fn: Callable, x, order: int, h=None):
    """Central difference approximation of ``fn^(order)`` at ``x``.

    Uses ``sum_j (-1)^j C(n, j) fn(x + (n/2 - j) h) / h^n`` which is second
    order accurate for every ``n`` (half-integer offsets for odd ``n``).
    """
    x = np.asarray(x, dtype=float)
    if h is None:
        h = fd_step(order, x)
    total = np.zeros(np.broadcast(x, h).shape)
    for j in range(order + 1):
        coeff = (-1) ** j * math.comb(order, j)
        total = total + coeff * np.asarray(fn(x + (order / 2.0 - j) * h), dtype=float)
    return total / h**order


# ---------------------------------------------------------------------------
# final potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FinalPotential:
    """A final potential ``f(R)`` together with its declared SP order.

    ``declared_sp_order`` is a claim only; :func:`strict_positivity_report`
    is what validates it before any theorem-dependent use.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    declared_sp_order: int = 2
    name: str = "final"

    def __post_init__(self):
        if self.declared_sp_order not in (2, 4):
            raise ArgumentError(
                f"declared_sp_order must be 2 or 4, got {self.declared_sp_order}"
            )

    def __call__(self, R):
        return np.asarray(self.evaluator(np.asarray(R, dtype=float)), dtype=float)

    def derivative(self, R, order: int):
        if order == 0:
            return self(R)
        return central_difference(self, R, order)


def exp_final(rate: float = 1.0) -> FinalPotential:
    """``f(R) = exp(rate * R)``; in SP{k} for every k when ``rate > 0``."""
    if rate <= 0:
        raise ArgumentError("rate must be positive")
    name = "expfinal" if rate == 1.0 else f"expfinal:rate={rate!r}"
    return FinalPotential(lambda R: np.exp(rate * R), declared_sp_order=4, name=name)


def exp_mixture_final(weights: Sequence[float], rates: Sequence[float]) -> FinalPotential:
    """Positive combination ``sum_i w_i exp(r_i R)``."""
    w = np.asarray(weights, dtype=float)
    r = np.asarray(rates, dtype=float)
    if w.shape != r.shape or w.ndim != 1 or w.size == 0:
        raise ArgumentError("weights and rates must be equal-length, non-empty")
    if np.any(w <= 0) or np.any(r <= 0):
        raise ArgumentError("weights and rates must be positive")

    def f(R):
        R = np.asarray(R, dtype=float)
        return np.exp(np.multiply.outer(R, r)) @ w

    name = "expmix:weights={},rates={}".format(
        ";".join(repr(float(v)) for v in w), ";".join(repr(float(v)) for v in r)
    )
    return FinalPotential(f, declared_sp_order=4, name=name)


def poly_final(coeffs: Sequence[float], grid: Sequence[float] = DEFAULT_GRID,
               sp_order: int = 2) -> FinalPotential:
    """Polynomial final potential, coefficients in ascending powers.

    Raises :class:`PreconditionError` unless it passes SP{sp_order} on ``grid``.
    """
    poly = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    name = "polyfinal:coeffs=" + ";".join(repr(float(c)) for c in poly.coef)
    final = FinalPotential(lambda R: poly(R), declared_sp_order=sp_order, name=name)
    report = strict_positivity_report(final, sp_order, grid)
    if not report.passed:
        raise PreconditionError(f"{name} fails SP{{{sp_order}}} on the validation grid")
    return final


def table_final(path: str | Path) -> FinalPotential:
    """Final potential read from a CSV of ``R,value`` pairs.

    Values must be positive, strictly increasing and convex in R. Between
    nodes the log of the value is interpolated linearly (so each piece is an
    increasing exponential); outside the table the end pieces are extended.
    """
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise ArgumentError(f"bad row in {path}: {rec}") from None
                # header line
    if len(rows) < 3:
        raise ArgumentError(f"{path}: need at least 3 rows")
    xs, ys = map(np.asarray, zip(*rows))
    if np.any(np.diff(xs) <= 0):
        raise ArgumentError(f"{path}: R column must be strictly increasing")
    if np.any(ys <= 0):
        raise ArgumentError(f"{path}: values must be positive")
    slopes = np.diff(ys) / np.diff(xs)
    if np.any(slopes <= 0):
        raise ArgumentError(f"{path}: values must be strictly increasing")
    if np.any(np.diff(slopes) < 0):
        raise ArgumentError(f"{path}: values must be convex")
    logy = np.log(ys)
    log_slopes = np.diff(logy) / np.diff(xs)

    def f(R):
        R = np.asarray(R, dtype=float)
        idx = np.clip(np.searchsorted(xs, R, side="right") - 1, 0, len(xs) - 2)
        return np.exp(logy[idx] + log_slopes[idx] * (R - xs[idx]))

    return FinalPotential(f, declared_sp_order=2, name=f"table:{path}")


# ---------------------------------------------------------------------------
# time-indexed potentials
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def gauss_hermite(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[g(Z)], Z ~ N(0, 1)."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    weights = weights / math.sqrt(2.0 * math.pi)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


@lru_cache(maxsize=16)
def _nh_polys(order: int) -> tuple[np.polynomial.Polynomial, ...]:
    # d^n/dR^n exp(R^2/2) = exp(R^2/2) p_n(R), p_{n+1} = p_n' + R p_n
    polys = [np.polynomial.Polynomial([1.0])]
    x = np.polynomial.Polynomial([0.0, 1.0])
    for _ in range(order):
        p = polys[-1]
        polys.append(p.deriv() + x * p)
    return tuple(polys)


KINDS = ("exponential", "normal_hedge", "gaussian_final")


@dataclass(frozen=True)
class Potential:
    """A time-indexed potential ``phi(t, R)``.

    Use the :meth:`exponential`, :meth:`normal_hedge` and
    :meth:`gaussian_final` constructors rather than the raw initializer.
    """

    kind: str
    eta: float | None = None
    final: FinalPotential | None = None
    horizon: float | None = None
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown potential kind {self.kind!r}")
        if self.kind == "exponential" and not (self.eta and self.eta > 0):
            raise ArgumentError("exponential potential needs eta > 0")
        if self.kind == "gaussian_final":
            if self.final is None or not (self.horizon and self.horizon > 0):
                raise ArgumentError("gaussian_final needs a final potential and horizon > 0")
            if self.quadrature_order < 1:
                raise ArgumentError("quadrature_order must be >= 1")

    # constructors -----------------------------------------------------------

    @classmethod
    def exponential(cls, eta: float = 1.0) -> "Potential":
        return cls("exponential", eta=float(eta), name=f"exp:eta={float(eta)!r}")

    @classmethod
    def normal_hedge(cls) -> "Potential":
        return cls("normal_hedge", name="normalhedge")

    @classmethod
    def gaussian_final(cls, final: FinalPotential, horizon: float,
                       quadrature_order: int = DEFAULT_QUADRATURE_ORDER,
                       grid: Sequence[float] = DEFAULT_GRID) -> "Potential":
        """Gaussian smoothing of ``final`` up to ``horizon``.

        The final potential must pass SP{2} on ``grid``.
        """
        report = strict_positivity_report(final, 2, grid)
        if not report.passed:
            raise PreconditionError(f"final potential {final.name} fails SP{{2}}")
        return cls("gaussian_final", final=final, horizon=float(horizon),
                   quadrature_order=int(quadrature_order),
                   name=f"gaussfinal:final={final.name},horizon={float(horizon)!r}")

    @property
    def analytic_derivative_orders(self) -> frozenset[int]:
        if self.kind == "gaussian_final":
            return frozenset()
        return frozenset(range(1, MAX_DERIVATIVE_ORDER + 1))

    # evaluation -------------------------------------------------------------

    def _check_time(self, t):
        t = float(t)
        if not math.isfinite(t) or t < 0:
            raise DomainError(f"time must be finite and >= 0, got {t}")
        if self.kind == "gaussian_final" and t > self.horizon:
            raise DomainError(f"t={t} exceeds the horizon {self.horizon}")
        return t

    def value(self, t, R):
        t = self._check_time(t)
        R = np.asarray(R, dtype=float)
        if self.kind == "exponential":
            return np.exp(SQRT2 * self.eta * R - self.eta**2 * t)
        if self.kind == "normal_hedge":
            v = t + 1.0
            pos = np.exp(np.maximum(R, 0.0) ** 2 / (2.0 * v))
            return np.where(R >= 0, pos, 1.0) / math.sqrt(v)
        return gaussian_convolve(self.final, self.horizon, t, R, self.quadrature_order)

    def derivative(self, t, R, order: int, kink: str = "raise"):
        """``order``-th partial derivative in R.

        ``kink`` controls NormalHedge at exactly ``R == 0``: ``"raise"``
        (default) or ``"right"`` to use the ``R >= 0`` branch.
        """
        if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_DERIVATIVE_ORDER:
            raise ArgumentError(f"order must be in 1..{MAX_DERIVATIVE_ORDER}, got {order}")
        t = self._check_time(t)
        R = np.asarray(R, dtype=float)
        if self.kind == "exponential":
            rate = SQRT2 * self.eta
            return rate**order * self.value(t, R)
        if self.kind == "normal_hedge":
            if kink == "raise" and np.any(R == 0.0):
                raise DomainError("NormalHedge derivatives are undefined at R = 0")
            v = t + 1.0
            u = R / math.sqrt(v)
            poly = _nh_polys(order)[order]
            pos = self.value(t, R) * poly(u) / v ** (order / 2.0)
            return np.where(R >= 0, pos, 0.0)
        if t == self.horizon:
            return self.final.derivative(R, order)
        return central_difference(lambda r: self.value(t, r), R, order)

    def time_derivative(self, t, R):
        """``d/dt phi(t, R)``."""
        t = self._check_time(t)
        R = np.asarray(R, dtype=float)
        if self.kind == "exponential":
            return -self.eta**2 * self.value(t, R)
        if self.kind == "normal_hedge":
            v = t + 1.0
            pos = self.value(t, R) * (-1.0 / (2.0 * v) - R**2 / (2.0 * v**2))
            return np.where(R >= 0, pos, -0.5 * v**-1.5)
        h = fd_step(1, t)
        lo, hi = max(0.0, t - h), min(self.horizon, t + h)
        return (self.value(hi, R) - self.value(lo, R)) / (hi - lo)


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def evaluate(p: Potential, t: float, R):
    """``phi(t, R)``; returns a float for scalar ``R``."""
    return _scalar(p.value(t, R))


def partial_r(p: Potential, t: float, R, order: int):
    """``d^order phi / dR^order`` at ``(t, R)``, analytic when available."""
    return _scalar(p.derivative(t, R, order))


def kolmogorov_residual(p: Potential, t: float, R):
    """``d/dt phi + 1/2 d^2/dR^2 phi`` at ``(t, R)``."""
    if p.kind == "normal_hedge" and np.any(np.asarray(R) == 0.0):
        raise DomainError("residual undefined at the NormalHedge kink R = 0")
    return _scalar(p.time_derivative(t, R) + 0.5 * p.derivative(t, R, 2))


@dataclass(frozen=True)
class PositivityReport:
    order_checked: int
    grid: tuple[float, ...]
    min_derivative_value: tuple[float, ...]
    passed: bool


def strict_positivity_report(f, k: int, grid: Iterable[float],
                             t: float | None = None) -> PositivityReport:
    """Check that derivatives of orders 0..k are all > ``POSITIVITY_TOL`` on ``grid``.

    ``f`` is a :class:`FinalPotential`, a plain callable of R, or a
    :class:`Potential` frozen at time ``t``. Derivatives come from central
    finite differences.
    """
    if not 0 <= k <= MAX_DERIVATIVE_ORDER:
        raise ArgumentError(f"k must be in 0..{MAX_DERIVATIVE_ORDER}")
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise ArgumentError("grid must be non-empty")
    if isinstance(f, Potential):
        if t is None:
            raise ArgumentError("a Potential needs a fixed time t")
        p, t0 = f, t
        fn = lambda R: p.value(t0, R)  # noqa: E731
    else:
        fn = f
    xs = np.asarray(grid)
    mins = []
    for order in range(k + 1):
        vals = np.asarray(fn(xs), dtype=float) if order == 0 else central_difference(fn, xs, order)
        mins.append(float(np.min(vals)))
    passed = all(m > POSITIVITY_TOL for m in mins)
    return PositivityReport(k, grid, tuple(mins), passed)


def divided_difference_g(f, R, a: float):
    """Fourth divided difference of ``f`` on the grid ``R-2a, ..., R+2a``.

    ``(f(R-2a) - 4f(R-a) + 6f(R) - 4f(R+a) + f(R+2a)) / (24 a^4)``, which is
    ``f''''(xi)/4!`` for some ``xi`` in the window.
    """
    if not a > 0:
        raise ArgumentError(f"a must be positive, got {a}")
    R = np.asarray(R, dtype=float)
    stencil = (f(R - 2 * a) - 4 * f(R - a) + 6 * f(R) - 4 * f(R + a) + f(R + 2 * a))
    return _scalar(np.asarray(stencil, dtype=float) / (24.0 * a**4))


def gaussian_convolve(f, horizon: float, t: float, R,
                      quadrature_order: int = DEFAULT_QUADRATURE_ORDER):
    """``E[f(X)]`` with ``X ~ N(R, horizon - t)`` via Gauss-Hermite quadrature."""
    if quadrature_order < 1:
        raise ArgumentError("quadrature_order must be >= 1")
    if not 0 <= t <= horizon:
        raise DomainError(f"need 0 <= t <= horizon, got t={t}, horizon={horizon}")
    R = np.asarray(R, dtype=float)
    var = horizon - t
    if var == 0:
        return _scalar(np.asarray(f(R), dtype=float))
    nodes, weights = gauss_hermite(int(quadrature_order))
    pts = R[..., None] + math.sqrt(var) * nodes
    return _scalar(np.asarray(f(pts), dtype=float) @ weights)


def divided_difference(f, points: Sequence[float]) -> float:
    """Recursive divided difference ``[x_0, ..., x_n; f]``."""
    xs = np.asarray(points, dtype=float)
    table = np.asarray(f(xs), dtype=float).copy()
    n = len(xs)
    for level in range(1, n):
        table[: n - level] = (table[1 : n - level + 1] - table[: n - level]) / (
            xs[level:] - xs[: n - level]
        )
    return float(table[0])


def n_convexity_check(f, n: int, points: Sequence[float]) -> bool:
    """True iff the n-th divided difference of ``f`` over ``points`` is >= 0."""
    if n < 0 or len(points) != n + 1:
        raise ArgumentError(f"need exactly n+1={n + 1} points")
    xs = np.asarray(points, dtype=float)
    if np.any(np.diff(xs) <= 0):
        raise ArgumentError("points must be strictly increasing")
    return divided_difference(f, xs) >= 0


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


# ---------------------------------------------------------------------------
# specifier mini-language
# ---------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(";") if v.strip()]


def _params(text: str) -> dict[str, str]:
    out = {}
    for part in filter(None, text.split(",")):
        key, sep, val = part.partition("=")
        if not sep:
            raise ArgumentError(f"expected key=value, got {part!r}")
        out[key.strip()] = val.strip()
    return out


def parse_final(desc: str) -> FinalPotential:
    """Parse ``expfinal``, ``expfinal:rate=<r>``, ``expmix:weights=..,rates=..``,
    ``polyfinal:coeffs=c0;c1;...`` or ``table:<path>``."""
    head, _, rest = desc.strip().partition(":")
    try:
        if head == "expfinal":
            params = _params(rest)
            _reject_unknown(params, {"rate"}, desc)
            return exp_final(float(params.get("rate", 1.0)))
        if head == "expmix":
            params = _params(rest)
            _reject_unknown(params, {"weights", "rates"}, desc)
            return exp_mixture_final(_floats(params["weights"]), _floats(params["rates"]))
        if head == "polyfinal":
            params = _params(rest)
            _reject_unknown(params, {"coeffs"}, desc)
            return poly_final(_floats(params["coeffs"]))
        if head == "table":
            return table_final(rest)
    except KeyError as exc:
        raise ArgumentError(f"{desc!r}: missing parameter {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ArgumentError):
            raise
        raise ArgumentError(f"{desc!r}: {exc}") from None
    raise ArgumentError(f"unknown final potential {desc!r}")


_TAIL = re.compile(r",(horizon|order)=([^,]+)$")


def parse_potential(desc: str) -> Potential:
    """Parse ``exp:eta=<f>``, ``normalhedge`` or ``gaussfinal:final=<final>,horizon=<f>``."""
    head, _, rest = desc.strip().partition(":")
    if head == "exp":
        params = _params(rest)
        _reject_unknown(params, {"eta"}, desc)
        return Potential.exponential(float(params.get("eta", 1.0)))
    if head == "normalhedge":
        if rest:
            raise ArgumentError("normalhedge takes no parameters")
        return Potential.normal_hedge()
    if head == "gaussfinal":
        tail = {}
        while (m := _TAIL.search(rest)):
            tail[m.group(1)] = m.group(2)
            rest = rest[: m.start()]
        if not rest.startswith("final=") or "horizon" not in tail:
            raise ArgumentError(f"{desc!r}: expected final=<final>,horizon=<float>")
        return Potential.gaussian_final(
            parse_final(rest[len("final="):]), float(tail["horizon"]),
            int(tail.get("order", DEFAULT_QUADRATURE_ORDER)),
        )
    raise ArgumentError(f"unknown potential {desc!r}")


def _reject_unknown(params: dict, allowed: set, desc: str):
    extra = set(params) - allowed
    if extra:
        raise ArgumentError(f"{desc!r}: unknown parameter(s) {sorted(extra)}")

"""Numerical studies built on the lattice tables: convergence to the Gaussian
limit, the preference of the adversary for small steps, variance clocks,
closed-form regret bounds and the tail-bound / average-potential equivalence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArgumentError, PreconditionError
from .games import GameTrace
from .lattice import (
    backward_table,
    binomial_expectation,
    closed_form_potential,
    level_step,
)
from .measure import RegretState, apb_score, epsilon_regret, srb_check
from .potential import (
    DEFAULT_GRID,
    DEFAULT_QUADRATURE_ORDER,
    POSITIVITY_TOL,
    FinalPotential,
    gaussian_convolve,
    strict_positivity_report,
)
from .serialize import dumps_json

MONOTONICITY_MARGIN = 1e-12
HALF_STEP_TOL = 1e-10
LIMIT_TOL = 1e-6
BOUND_SLACK = 1e-9
BOUND_KINDS = ("exp", "normal_hedge", "uniform")


@dataclass(frozen=True)
class StudyReport:
    study: str
    params: dict
    probes: list
    values: dict
    verdicts: dict
    tolerances: dict
    seed: int | None = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "study": self.study,
            "params": self.params,
            "probes": self.probes,
            "values": self.values,
            "verdicts": self.verdicts,
            "tolerances": self.tolerances,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return dumps_json(self.to_dict())


def _gate(final: FinalPotential, order: int):
    rep = strict_positivity_report(final, order, DEFAULT_GRID)
    if not rep.passed:
        bad = next(n for n, m in enumerate(rep.min_derivative_value) if not m > POSITIVITY_TOL)
        raise PreconditionError(
            f"final potential {getattr(final, 'name', repr(final))} fails SP{{{order}}}: derivative of order {bad} "
            f"reaches {rep.min_derivative_value[bad]:.3g} on the validation grid"
        )


def _probe_index(horizon: float, k: int, t: float) -> int:
    """Iteration index of time ``t`` on the level-``k`` lattice."""
    if not 0.0 <= t <= horizon * (1 + 1e-12):
        raise ArgumentError(f"probe time {t} outside [0, {horizon}]")
    s = level_step(horizon, k)
    x = t / (s * s)
    i = int(round(x))
    if abs(x - i) > 1e-9 * max(1.0, x):
        raise ArgumentError(f"probe time {t} is not on the level-{k} lattice")
    return min(i, 4**k)


def _strictly_decreasing(seq, floor=MONOTONICITY_MARGIN) -> bool:
    """Each entry is smaller than the previous one, unless both are already
    below ``floor`` (agreement up to rounding or quadrature error)."""
    return all(b < a or max(a, b) <= floor for a, b in zip(seq, seq[1:]))


def convergence_study(final: FinalPotential, horizon: float, k_max: int,
                      probes: Sequence[tuple[float, float]] = ((0.0, 0.0),),
                      quadrature_order: int = DEFAULT_QUADRATURE_ORDER) -> StudyReport:
    """Lower and upper level-``k`` potentials against the Gaussian limit.

    For every probe ``(t, R)`` and ``k = 0..k_max`` the closed-form lower and
    upper values are computed together with
    ``gaussian_convolve(final, horizon, t, R)``. Verdicts: the distance of the
    lower value to the limit decreases strictly in ``k``, upper dominates
    lower, and the upper/lower gap decreases.
    """
    _gate(final, 2)
    if k_max < 0:
        raise ArgumentError("k_max must be non-negative")
    probes = [(float(t), float(R)) for t, R in probes]
    values, verdicts = {}, {}
    for t, R in probes:
        key = f"{t!r},{R!r}"
        lower, upper = [], []
        for k in range(k_max + 1):
            i = _probe_index(horizon, k, t)
            lower.append(float(closed_form_potential(final, horizon, k, i, R, "lower")))
            upper.append(float(closed_form_potential(final, horizon, k, i, R, "upper")))
        limit = float(gaussian_convolve(final, horizon, t, R, quadrature_order))
        gap_ul = [u - lo for u, lo in zip(upper, lower)]
        gap_limit = [abs(lo - limit) for lo in lower]
        scale = max(1.0, abs(limit))
        values[key] = {
            "k": list(range(k_max + 1)),
            "lower": lower,
            "upper": upper,
            "limit": limit,
            "upper_minus_lower": gap_ul,
            "lower_to_limit": gap_limit,
        }
        verdicts[f"{key}:lower_to_limit_decreasing"] = _strictly_decreasing(
            gap_limit, LIMIT_TOL * scale)
        verdicts[f"{key}:upper_minus_lower_decreasing"] = _strictly_decreasing(
            gap_ul, MONOTONICITY_MARGIN * scale)
        verdicts[f"{key}:upper_dominates_lower"] = all(g >= -1e-12 * max(1.0, abs(u))
                                                       for g, u in zip(gap_ul, upper))
    return StudyReport(
        "convergence",
        {"final": getattr(final, "name", repr(final)), "horizon": horizon, "k_max": k_max,
         "quadrature_order": quadrature_order},
        [list(p) for p in probes], values, verdicts,
        {"limit_quadrature_relative": LIMIT_TOL, "strict_floor_relative": MONOTONICITY_MARGIN},
    )


def half_step_check(final: FinalPotential, tau: float = 1.0, R: float = 0.0) -> dict:
    """One step of duration ``tau`` against four steps of duration ``tau/4``.

    The four-step value minus the one-step value equals one sixteenth of the
    fourth-difference stencil at spacing ``a = sqrt(tau)``.
    """
    if not tau > 0:
        raise ArgumentError("tau must be positive")
    a = math.sqrt(tau)
    one = float(binomial_expectation(final, 1, a, R))
    four = float(binomial_expectation(final, 4, a / 2.0, R))
    f = lambda x: float(final(np.asarray(x, dtype=float)))  # noqa: E731
    stencil = f(R - 2 * a) - 4 * f(R - a) + 6 * f(R) - 4 * f(R + a) + f(R + 2 * a)
    diff = four - one
    return {
        "tau": tau, "R": R, "one_step": one, "four_step": four,
        "difference": diff, "stencil_over_16": stencil / 16.0,
        "error": abs(diff - stencil / 16.0),
    }


def monotonicity_study(final: FinalPotential, horizon: float, k_max: int,
                       probes: Sequence[tuple[float, float]] | None = None,
                       tau: float = 1.0, R: float = 0.0,
                       margin: float = MONOTONICITY_MARGIN) -> StudyReport:
    """Check that halving the step raises the lower potential.

    Without probes every node of level ``k`` before the horizon is compared
    with the coinciding node of level ``k + 1`` for ``k < k_max``. With
    probes, closed-form values at those ``(t, R)`` points are compared
    instead. The half-step identity is checked at ``(tau, R)``.
    """
    _gate(final, 4)
    if k_max < 1:
        raise ArgumentError("k_max must be at least 1")
    values, verdicts = {}, {}
    if probes is None:
        tables = [backward_table(final, horizon, k, "lower", check=False)
                  for k in range(k_max + 1)]
        for k in range(k_max):
            a, b = tables[k], tables[k + 1]
            diffs = []
            for i in range(a.n_steps):
                j = np.arange(i + 1)
                diffs.append(b.values[4 * i][2 * j + i] - a.values[i])
            d = np.concatenate(diffs)
            values[f"k={k}"] = {"nodes": int(d.size), "min_increase": float(d.min())}
            verdicts[f"k={k}:strict_increase"] = bool(np.all(d > margin))
        probe_list = []
    else:
        probe_list = [[float(t), float(r)] for t, r in probes]
        for t, r in probe_list:
            seq = []
            for k in range(k_max + 1):
                i = _probe_index(horizon, k, t)
                seq.append(float(closed_form_potential(final, horizon, k, i, r, "lower")))
            key = f"{t!r},{r!r}"
            values[key] = {"lower": seq}
            verdicts[f"{key}:strict_increase"] = all(y - x > margin for x, y in zip(seq, seq[1:]))
    hs = half_step_check(final, tau, R)
    values["half_step"] = hs
    verdicts["half_step:four_exceeds_one"] = hs["difference"] > margin
    verdicts["half_step:stencil_identity"] = hs["error"] < HALF_STEP_TOL
    return StudyReport(
        "monotonicity",
        {"final": getattr(final, "name", repr(final)), "horizon": horizon, "k_max": k_max,
         "tau": tau, "R": R},
        probe_list, values, verdicts,
        {"margin": margin, "half_step": HALF_STEP_TOL},
    )


def variance_clock(trace: GameTrace) -> tuple[float, list[float]]:
    """``(V_n, [Var_1, ..., Var_n])`` for a recorded trace.

    ``V_n`` is the sum of clock increments (the H-weighted conditional
    variance in continuous mode). ``Var_i`` is the learner-weighted second
    moment of the losses minus the squared aggregate loss.
    """
    if trace.weights is None or trace.losses is None or trace.states is None:
        raise ArgumentError("trace has no per-step weights; rerun with record_history=True")
    out = []
    for st, w, lm, rec in zip(trace.states, trace.weights, trace.losses, trace.records[1:]):
        pm = st.masses * w
        out.append(float(pm @ lm.second_moment() - rec.ell**2))
    return trace.V_n, out


def bound_value(kind: str, t: float, eps: float, nu: float | None = None) -> float:
    """Closed-form epsilon-regret bound at time ``t``.

    ``exp``: ``sqrt(2 t ln(1/eps))``.
    ``normal_hedge``: ``sqrt((t+1)(2 ln(1/(2 eps)) + ln(t+1)))``, taken as 0
    where the radicand is negative (possible only for ``eps > 1/2``).
    ``uniform``: ``sqrt((t+nu)(ln(t+nu) + 2 ln(1/eps)))``.
    """
    kind = _bound_kind(kind)
    if not 0.0 < eps < 1.0:
        raise ArgumentError(f"eps must be in (0, 1), got {eps}")
    if not t >= 0:
        raise ArgumentError(f"t must be non-negative, got {t}")
    if kind == "exp":
        return math.sqrt(2.0 * t * math.log(1.0 / eps))
    if kind == "normal_hedge":
        rad = (t + 1.0) * (2.0 * math.log(1.0 / (2.0 * eps)) + math.log(t + 1.0))
        return math.sqrt(max(rad, 0.0))
    if nu is None or not nu > 0:
        raise ArgumentError("the uniform bound needs nu > 0")
    rad = (t + nu) * (math.log(t + nu) + 2.0 * math.log(1.0 / eps))
    return math.sqrt(max(rad, 0.0))


def _bound_kind(kind: str) -> str:
    k = kind.replace("-", "_").lower()
    k = {"normalhedge": "normal_hedge", "nh": "normal_hedge", "exponential": "exp"}.get(k, k)
    if k not in BOUND_KINDS:
        raise ArgumentError(f"unknown bound kind {kind!r}; expected one of {BOUND_KINDS}")
    return k


def bound_verification(traces: GameTrace | Iterable[GameTrace], kind: str,
                       eps_grid: Sequence[float], nu: float | None = None,
                       time: str = "iteration") -> StudyReport:
    """Check ``epsilon_regret(state_t, eps) <= bound_value(kind, t, eps)``.

    Every recorded iteration of every trace is checked for every ``eps``.
    ``time="iteration"`` measures ``t`` in rounds; ``time="clock"`` uses the
    game clock of the trace instead.
    """
    if isinstance(traces, GameTrace):
        traces = [traces]
    if time not in ("iteration", "clock"):
        raise ArgumentError("time must be 'iteration' or 'clock'")
    kind = _bound_kind(kind)
    eps_grid = [float(e) for e in eps_grid]
    violations, checks, worst = [], 0, -math.inf
    for n, tr in enumerate(traces):
        cols = {e: _eps_column(tr, e) for e in eps_grid}
        for r_idx, rec in enumerate(tr.records):
            t = float(rec.i) if time == "iteration" else rec.t
            for e in eps_grid:
                reg = cols[e][r_idx]
                b = bound_value(kind, t, e, nu)
                checks += 1
                worst = max(worst, reg - b)
                if reg > b + BOUND_SLACK:
                    violations.append({"trace": n, "iter": rec.i, "t": t, "eps": e,
                                       "regret": reg, "bound": b})
    return StudyReport(
        "bound_verification",
        {"kind": kind, "eps_grid": eps_grid, "nu": nu, "time": time},
        [], {"checks": checks, "violations": violations,
             "worst_margin": worst if checks else None},
        {"no_violations": not violations},
        {"slack": BOUND_SLACK},
        seed=None,
    )


def _eps_column(trace: GameTrace, eps: float) -> list[float]:
    cfg_eps = list(trace.config.eps)
    if eps in cfg_eps:
        j = cfg_eps.index(eps)
        return [r.eps_regret[j] for r in trace.records]
    if trace.states is None:
        raise ArgumentError(f"eps={eps} was not recorded and the trace has no states")
    return [epsilon_regret(s, eps) for s in trace.states]


# -- tail bounds versus average potentials ----------------------------------

def tail_bound_families() -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    """Five positive non-increasing maps into (0, 1] used as tail bounds."""
    return {
        "exponential": lambda R: np.minimum(1.0, np.exp(-np.asarray(R, float))),
        "gaussian": lambda R: np.exp(-0.5 * np.maximum(np.asarray(R, float), 0.0) ** 2),
        "step": lambda R: np.where(np.asarray(R, float) < 1.0, 1.0, 0.25),
        "logistic": lambda R: 1.0 / (1.0 + np.exp(np.asarray(R, float))),
        "power": lambda R: (1.0 + np.maximum(np.asarray(R, float), 0.0)) ** -2.0,
    }


def random_atomic_state(rng: np.random.Generator, max_atoms: int = 12,
                        scale: float = 2.0) -> RegretState:
    n = int(rng.integers(1, max_atoms + 1))
    regrets = rng.normal(0.0, scale, n) + rng.uniform(-1.0, 1.0)
    masses = rng.dirichlet(np.ones(n))
    return RegretState.from_atoms(regrets, masses, normalize=True)


def tail_potential_comparison(state: RegretState, G, margin: float = 1e-6,
                              n_grid: int = 401) -> dict:
    """Evaluate both sides of the tail-bound / average-potential equivalence
    for one state and bound ``G`` with ``phi = 1/G``."""
    lo, hi = state.regrets.min() - 1.0, state.regrets.max() + 1.0
    grid = np.union1d(np.linspace(lo, hi, n_grid), state.regrets)
    apb = apb_score(state, lambda R: 1.0 / G(R))
    return {
        "apb": apb,
        "apb_holds": apb <= 1.0,
        "srb_holds": srb_check(state, G, grid),
        "strict_srb_holds": srb_check(state, G, grid, margin=margin),
    }


def tail_potential_study(n_states: int = 500, seed: int = 0, margin: float = 1e-6) -> StudyReport:
    """Randomized check of both implications between the tail bound ``G``
    and the average-potential bound for ``phi = 1/G``."""
    rng = np.random.default_rng(seed)
    fams = tail_bound_families()
    states = [random_atomic_state(rng) for _ in range(n_states)]
    counts = {"cases": 0, "apb_holds": 0, "srb_holds": 0, "strict_srb_holds": 0,
              "apb_without_srb": 0, "strict_srb_without_apb": 0,
              "srb_without_apb": 0}
    for st in states:
        for G in fams.values():
            c = tail_potential_comparison(st, G, margin)
            counts["cases"] += 1
            for key in ("apb_holds", "srb_holds", "strict_srb_holds"):
                counts[key] += int(c[key])
            counts["apb_without_srb"] += int(c["apb_holds"] and not c["srb_holds"])
            counts["strict_srb_without_apb"] += int(c["strict_srb_holds"]
                                                    and c["apb"] > 1.0 + margin)
            counts["srb_without_apb"] += int(c["srb_holds"] and not c["apb_holds"])
    return StudyReport(
        "tail_potential",
        {"n_states": n_states, "families": sorted(fams), "margin": margin},
        [], counts,
        {"apb_implies_srb": counts["apb_without_srb"] == 0,
         "strict_srb_implies_apb": counts["strict_srb_without_apb"] == 0},
        {"margin": margin},
        seed=seed,
    )

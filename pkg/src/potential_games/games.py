"""Integer, discrete and continuous time game engines and their strategies.

One iteration of every game follows the same order:

1. the adversary fixes the step size ``s_i``;
2. the learner picks a weight function ``P`` with ``Psi (.) P = 1``;
3. the adversary, having seen the weights, picks per-atom loss laws on
   ``[-s_i, s_i]``;
4. the aggregate loss ``ell = Psi (.) (P B)`` is computed and checked
   (``|ell| <= c s_i^2`` outside the integer game);
5. the clock advances (1, ``s_i^2`` or the variance increment ``dt``);
6. every atom ``R`` moves to ``R + ell - y``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DegeneratePotentialError, GameRuleViolation
from .lattice import LatticeTable, backward_table, integer_table, level_step
from .measure import (
    LossMap, RegretState, convolve_step, epsilon_regret, load_expert_losses,
)
from .potential import FinalPotential, Potential
from .serialize import fmt

MODES = ("integer", "discrete", "continuous")
NORMALIZATION_TOL = 1e-12
TIME_TOL = 1e-12


# ---------------------------------------------------------------------------
# configuration and trace
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GameConfig:
    """Parameters of one game run.

    * integer: ``T`` unit steps, scored with the lower potential of ``final``.
    * discrete: level ``k`` on horizon ``horizon``; ``s_k = sqrt(horizon) 2**-k``
      and ``4**k`` iterations are derived.
    * continuous: ``potential`` drives the learner and the clock; at most
      ``n_steps`` iterations of step ``<= max_step`` until the clock reaches
      ``horizon``.
    """

    mode: str
    final: FinalPotential | None = None
    potential: Potential | None = None
    T: int | None = None
    horizon: float | None = None
    k: int | None = None
    max_step: float | None = None
    n_steps: int | None = None
    c: float = 1.0
    seed: int = 0
    eps: tuple[float, ...] = (0.1, 0.01)
    n_experts: int | None = None
    degenerate: str = "error"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ArgumentError(f"mode must be one of {MODES}")
        if self.degenerate not in ("error", "uniform"):
            raise ArgumentError("degenerate must be 'error' or 'uniform'")
        if not self.c > 0:
            raise ArgumentError("c must be positive")
        for e in self.eps:
            if not 0 < e <= 1:
                raise ArgumentError(f"eps values must be in (0, 1], got {e}")
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if self.mode == "integer":
            if self.final is None or self.T is None or self.T < 1:
                raise ArgumentError("integer mode needs final and T >= 1")
        elif self.mode == "discrete":
            if self.final is None or self.horizon is None or self.k is None:
                raise ArgumentError("discrete mode needs final, horizon and k")
            if not self.horizon > 0 or self.k < 0:
                raise ArgumentError("discrete mode needs horizon > 0 and k >= 0")
        else:
            if self.potential is None or self.horizon is None or self.max_step is None:
                raise ArgumentError("continuous mode needs potential, horizon and max_step")
            if not 0 < self.max_step <= 1:
                raise ArgumentError("max_step must be in (0, 1]")
            if not self.horizon > 0:
                raise ArgumentError("horizon must be positive")
            if self.n_steps is None:
                if math.isinf(self.horizon):
                    raise ArgumentError("an unbounded horizon needs n_steps")
                object.__setattr__(
                    self, "n_steps", int(math.ceil(self.horizon / self.max_step**2 - 1e-9))
                )
            if self.n_steps < 1:
                raise ArgumentError("n_steps must be positive")

    @classmethod
    def integer(cls, T: int, final: FinalPotential, **kw) -> "GameConfig":
        return cls("integer", final=final, T=int(T), **kw)

    @classmethod
    def discrete(cls, horizon: float, k: int, final: FinalPotential, **kw) -> "GameConfig":
        return cls("discrete", final=final, horizon=float(horizon), k=int(k), **kw)

    @classmethod
    def continuous(cls, potential: Potential, max_step: float, horizon: float,
                   n_steps: int | None = None, **kw) -> "GameConfig":
        return cls("continuous", potential=potential, max_step=float(max_step),
                   horizon=float(horizon), n_steps=n_steps, **kw)

    @classmethod
    def experts(cls, potential: Potential, n_experts: int, n_steps: int, **kw) -> "GameConfig":
        """Finite-expert mode: ``n_experts`` labelled atoms, losses in [-1, 1],
        the variance clock of ``potential``, no time horizon."""
        kw.setdefault("degenerate", "uniform")
        return cls("continuous", potential=potential, max_step=1.0, horizon=math.inf,
                   n_steps=int(n_steps), n_experts=int(n_experts), **kw)

    @property
    def step_size(self) -> float:
        """Default step: 1 (integer), ``s_k`` (discrete), ``max_step`` (continuous)."""
        if self.mode == "integer":
            return 1.0
        if self.mode == "discrete":
            return level_step(self.horizon, self.k)
        return self.max_step

    @property
    def iterations(self) -> int:
        if self.mode == "integer":
            return self.T
        if self.mode == "discrete":
            return 4**self.k
        return self.n_steps


@dataclass(frozen=True)
class StepRecord:
    i: int
    t: float
    s: float
    ell: float
    dt: float
    score: float
    eps_regret: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class GameTrace:
    """Record of a run. Row 0 is the initial state; row ``i`` holds the
    step size, aggregate loss and clock increment of iteration ``i`` and the
    time, score and eps-regrets after it."""

    config: GameConfig
    records: tuple[StepRecord, ...]
    final_state: RegretState
    V_n: float
    states: tuple[RegretState, ...] | None = None
    weights: tuple[np.ndarray, ...] | None = None
    losses: tuple[LossMap, ...] | None = None
    terminated_early: bool = False

    @property
    def scores(self) -> np.ndarray:
        return np.array([r.score for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def final_score(self) -> float:
        return self.records[-1].score

    @property
    def t_reached(self) -> float:
        return self.records[-1].t

    def header(self) -> list[str]:
        return ["iter", "t", "s", "ell", "dt", "score"] + [
            f"eps_regret_{e!r}" for e in self.config.eps
        ]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for r in self.records:
                w.writerow([r.i, fmt(r.t), fmt(r.s), fmt(r.ell), fmt(r.dt), fmt(r.score)]
                           + [fmt(v) for v in r.eps_regret])


@dataclass
class StepContext:
    """What a strategy sees when it moves."""

    i: int
    t: float
    state: RegretState
    config: GameConfig
    rng: np.random.Generator
    s: float | None = None
    weights: np.ndarray | None = None
    tables: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# learner strategies
# ---------------------------------------------------------------------------

def _normalize(state: RegretState, raw: np.ndarray) -> np.ndarray:
    Z = float(state.masses @ raw)
    if not Z > 0 or not math.isfinite(Z):
        raise DegeneratePotentialError(f"weight normalizer Z = {Z!r}")
    return raw / Z


def _shifted_difference(table: LatticeTable, i: int, R: np.ndarray) -> np.ndarray:
    sigma = table.offset
    return 0.5 * (table.at(i, R + sigma) - table.at(i, R - sigma))


def learner_weights_integer(table: LatticeTable, i: int, state: RegretState) -> np.ndarray:
    """P_I after ``i`` completed steps: proportional to
    ``(phi(i+1, R+2) - phi(i+1, R-2)) / 2`` on the upper table."""
    if i + 1 > table.n_steps:
        raise ArgumentError(f"table has {table.n_steps} steps, cannot weight step {i + 1}")
    return _normalize(state, _shifted_difference(table, i + 1, state.regrets))


def learner_weights_discrete(table: LatticeTable, t: float, state: RegretState,
                             k: int) -> np.ndarray:
    """P_D(k) at time ``t``: shifted difference of the level-``k`` upper
    potential at ``t + s_k^2`` with offsets ``+-s_k (1 + s_k)``."""
    if table.k != k:
        raise ArgumentError(f"table is level {table.k}, not {k}")
    pos = t / table.time_step
    i = int(round(pos))
    if abs(pos - i) > 1e-9:
        raise ArgumentError(f"t={t} is not on the level-{k} time grid")
    return learner_weights_integer(table, i, state)


def learner_weights_continuous(p: Potential, t: float, state: RegretState,
                               degenerate: str = "error") -> np.ndarray:
    """P^cc: proportional to ``d phi / dR`` at each atom.

    NormalHedge atoms at exactly ``R = 0`` get weight zero (the derivative
    of both branches vanishes there). With ``degenerate="uniform"`` an all-
    zero derivative falls back to uniform weights instead of raising.
    """
    raw = np.asarray(p.derivative(t, state.regrets, 1, kink="right"), dtype=float)
    try:
        return _normalize(state, raw)
    except DegeneratePotentialError:
        if degenerate == "uniform":
            return np.ones(len(state))
        raise


class Learner:
    name = "learner"

    def weights(self, ctx: StepContext) -> np.ndarray:
        raise NotImplementedError


class PotentialLearner(Learner):
    """P_I, P_D(k) or P^cc depending on the game mode."""

    name = "potential"

    def weights(self, ctx):
        cfg = ctx.config
        if cfg.mode == "integer":
            return learner_weights_integer(ctx.tables["upper"], ctx.i, ctx.state)
        if cfg.mode == "discrete":
            return learner_weights_discrete(ctx.tables["upper"], ctx.t, ctx.state, cfg.k)
        return learner_weights_continuous(cfg.potential, ctx.t, ctx.state, cfg.degenerate)


class UniformLearner(Learner):
    name = "uniform"

    def weights(self, ctx):
        return np.ones(len(ctx.state))


class RandomLearner(Learner):
    """Random positive weights, normalized; draws from the run's generator."""

    name = "random"

    def weights(self, ctx):
        return _normalize(ctx.state, ctx.rng.uniform(0.01, 1.0, len(ctx.state)))


_LEARNERS = {"potential": PotentialLearner, "uniform": UniformLearner, "random": RandomLearner}


def make_learner(desc) -> Learner:
    if isinstance(desc, Learner):
        return desc
    try:
        return _LEARNERS[desc]()
    except KeyError:
        raise ArgumentError(f"unknown learner {desc!r}; choose from {sorted(_LEARNERS)}") from None


# ---------------------------------------------------------------------------
# adversary strategies
# ---------------------------------------------------------------------------

ADVERSARY_KINDS = ("random_walk", "biased", "constant")


def adversary_loss_map(kind: str, state: RegretState, s: float = 1.0, p: float = 0.5,
                       l: float = 0.0) -> LossMap:
    """Atom-independent loss laws: random walk ``+-s``, biased ``+s`` w.p.
    ``p``, or the constant loss ``l``."""
    kind = kind.replace("-", "_")
    if not 0 < s <= 1:
        raise ArgumentError(f"s must be in (0, 1], got {s}")
    n = len(state)
    if kind == "random_walk":
        return LossMap.uniform(s, [s, -s], [0.5, 0.5], n)
    if kind == "biased":
        if not 0 <= p <= 1:
            raise ArgumentError(f"p must be in [0, 1], got {p}")
        return LossMap.uniform(s, [s, -s], [p, 1.0 - p], n)
    if kind == "constant":
        if abs(l) > s:
            raise ArgumentError(f"|l| must be <= s, got l={l}, s={s}")
        return LossMap.uniform(s, [l], [1.0], n)
    raise ArgumentError(f"unknown adversary kind {kind!r}")


def aggregate_loss(state: RegretState, weights: np.ndarray, losses: LossMap,
                   limit: float | None = None, step: int | None = None) -> float:
    """``ell = sum_atoms mass * P * B``; raises if ``|ell| > limit``."""
    if losses.n_atoms != len(state) or len(weights) != len(state):
        raise ArgumentError("weights and losses must align with the state")
    ell = float(np.sum(state.masses * weights * losses.bias()))
    if limit is not None and abs(ell) > limit * (1 + 1e-9):
        raise GameRuleViolation(f"aggregate loss {ell!r} exceeds the bound {limit!r}", step)
    return ell


def time_increment(state: RegretState, losses: LossMap, ell: float, p: Potential,
                   t: float, degenerate: str = "error") -> float:
    """Variance clock increment ``dt = sum mass * H * E[(y - ell)^2]`` with
    ``H`` the normalized second R-derivative of the potential."""
    d2 = np.asarray(p.derivative(t, state.regrets, 2, kink="right"), dtype=float)
    ZH = float(state.masses @ d2)
    if not ZH > 0:
        if degenerate != "uniform":
            raise DegeneratePotentialError(f"Z^H = {ZH!r}")
        H = np.ones(len(state))
    else:
        H = d2 / ZH
    return float(np.sum(state.masses * H * losses.second_moment_about(ell)))


class Adversary:
    """Base adversary: plays the configured default step size."""

    name = "adversary"

    def step_size(self, ctx: StepContext) -> float:
        return ctx.config.step_size

    def loss_map(self, ctx: StepContext) -> LossMap:
        raise NotImplementedError

    def exhausted(self, ctx: StepContext) -> bool:
        return False


class KindAdversary(Adversary):
    """One of the atom-independent kinds at every step."""

    def __init__(self, kind: str, p: float = 0.5, l: float = 0.0, s: float | None = None):
        kind = kind.replace("-", "_")
        if kind not in ADVERSARY_KINDS:
            raise ArgumentError(f"unknown adversary kind {kind!r}")
        self.kind, self.p, self.l, self.s = kind, float(p), float(l), s
        self.name = kind

    def step_size(self, ctx):
        return self.s if self.s is not None else ctx.config.step_size

    def loss_map(self, ctx):
        return adversary_loss_map(self.kind, ctx.state, ctx.s, self.p, self.l)


class ScriptedAdversary(Adversary):
    """Per-iteration rows ``(kind, param1, param2)``.

    ``random_walk``: param1 = s. ``biased``: param1 = s, param2 = p.
    ``constant``: param1 = l, param2 = s (default: the configured step).
    """

    name = "scripted"

    def __init__(self, rows: Sequence[tuple]):
        self.rows = []
        for row in rows:
            kind = str(row[0]).replace("-", "_")
            if kind not in ADVERSARY_KINDS:
                raise ArgumentError(f"unknown scripted kind {row[0]!r}")
            params = [float(x) if x not in (None, "") else None for x in row[1:3]]
            params += [None] * (2 - len(params))
            self.rows.append((kind, *params))

    @classmethod
    def from_csv(cls, path: str | Path) -> "ScriptedAdversary":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            need = {"iter", "kind", "param1", "param2"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise ArgumentError(f"{path}: header must be iter,kind,param1,param2")
            recs = sorted(reader, key=lambda r: int(r["iter"]))
        iters = [int(r["iter"]) for r in recs]
        if not iters:
            raise ArgumentError(f"{path}: empty script")
        if iters != list(range(iters[0], iters[0] + len(iters))):
            raise ArgumentError(f"{path}: iter column must be consecutive")
        return cls([(r["kind"], r["param1"], r["param2"]) for r in recs])

    def _row(self, ctx):
        return self.rows[ctx.i]

    def exhausted(self, ctx):
        return ctx.i >= len(self.rows)

    def step_size(self, ctx):
        kind, a, b = self._row(ctx)
        s = b if kind == "constant" else a
        return s if s is not None else ctx.config.step_size

    def loss_map(self, ctx):
        kind, a, b = self._row(ctx)
        if kind == "random_walk":
            return adversary_loss_map(kind, ctx.state, ctx.s)
        if kind == "biased":
            return adversary_loss_map(kind, ctx.state, ctx.s, p=0.5 if b is None else b)
        return adversary_loss_map(kind, ctx.state, ctx.s, l=a or 0.0)


class RandomAdversary(Adversary):
    """Independent random loss laws at every atom (support of ``support``
    points drawn uniformly in ``[-s, s]``, Dirichlet probabilities).

    In discrete and continuous modes the draw is shifted so that the
    aggregate loss against the learner's weights is zero, keeping the move
    legal.
    """

    name = "random"

    def __init__(self, support: int = 3):
        if support < 1:
            raise ArgumentError("support must be >= 1")
        self.support = support

    def loss_map(self, ctx):
        n, s, rng = len(ctx.state), ctx.s, ctx.rng
        vals = rng.uniform(-s, s, (n, self.support))
        probs = rng.dirichlet(np.ones(self.support), n)
        if ctx.config.mode != "integer":
            ell = float(np.sum(ctx.state.masses * ctx.weights * np.sum(vals * probs, axis=1)))
            # shrink towards 0 until legal; scaling keeps support inside [-s, s]
            limit = ctx.config.c * s * s
            if abs(ell) > limit:
                vals = vals * (limit / abs(ell))
        return LossMap(s, vals, probs)


class MixedAdversary(Adversary):
    """Each step draws one atom-independent law, all legal under ``|ell| <= c s^2``:

    * the ``+-s`` random walk;
    * a biased coin with ``|B| <= c s^2``;
    * a constant loss ``|l| <= c s^2``;
    * a lazy walk: ``+-s`` w.p. ``q/2`` each, else 0;
    * a constant with jumps: ``+-s/2`` w.p. 2/3 and ``-+s`` w.p. 1/3, zero
      mean. The only skewed law in the family; half-steps keep the regrets
      on a lattice so atoms keep merging.
    """

    name = "mixed"

    def loss_map(self, ctx):
        s, rng, n = ctx.s, ctx.rng, len(ctx.state)
        limit = ctx.config.c * s * s
        choice = rng.integers(5)
        if choice == 0:
            return adversary_loss_map("random_walk", ctx.state, s)
        if choice == 1:
            bias = min(limit / s, 1.0)
            return adversary_loss_map("biased", ctx.state, s,
                                      p=0.5 + 0.5 * bias * rng.uniform(-1.0, 1.0))
        if choice == 2:
            return adversary_loss_map("constant", ctx.state, s,
                                      l=min(limit, s) * rng.uniform(-1.0, 1.0))
        q = rng.uniform(0.0, 0.5)
        if choice == 3:
            return LossMap.uniform(s, [s, -s, 0.0], [q / 2, q / 2, 1.0 - q], n)
        sign = 1.0 if rng.integers(2) else -1.0
        return LossMap.uniform(s, [sign * s / 2, -sign * s], [2.0 / 3.0, 1.0 / 3.0], n)


class ExpertLossAdversary(Adversary):
    """Replays a finite-expert loss matrix (rows: iterations, columns: experts)."""

    name = "experts"

    def __init__(self, losses, names: Sequence | None = None):
        self.losses = np.asarray(losses, dtype=float)
        if self.losses.ndim != 2 or np.any(np.abs(self.losses) > 1):
            raise ArgumentError("expert losses must be a 2-d array with entries in [-1, 1]")
        self.names = tuple(names) if names is not None else tuple(range(self.losses.shape[1]))
        self._col = {name: j for j, name in enumerate(self.names)}

    @classmethod
    def from_csv(cls, path) -> "ExpertLossAdversary":
        names, mat = load_expert_losses(path)
        return cls(mat, names)

    def exhausted(self, ctx):
        return ctx.i >= self.losses.shape[0]

    def step_size(self, ctx):
        return 1.0

    def loss_map(self, ctx):
        if ctx.state.labels is None:
            raise ArgumentError("expert losses need a labelled state")
        cols = [self._col[lab] for lab in ctx.state.labels]
        return LossMap.point_losses(1.0, self.losses[ctx.i, cols])


def random_expert_losses(n_experts: int, T: int, seed: int) -> np.ndarray:
    """``T x n_experts`` matrix of iid fair +-1 losses."""
    rng = np.random.default_rng(seed)
    return rng.choice(np.array([-1.0, 1.0]), size=(int(T), int(n_experts)))


def make_adversary(desc) -> Adversary:
    """Parse ``random-walk``, ``biased:p=<p>``, ``constant:l=<l>``, ``random``,
    ``mixed``, ``script:<path>`` or ``experts:<path>``."""
    if isinstance(desc, Adversary):
        return desc
    head, _, rest = str(desc).partition(":")
    head = head.replace("-", "_")
    if head == "script":
        return ScriptedAdversary.from_csv(rest)
    if head == "experts":
        return ExpertLossAdversary.from_csv(rest)
    params = {}
    for part in filter(None, rest.split(",")):
        key, sep, val = part.partition("=")
        if not sep:
            raise ArgumentError(f"adversary parameter {part!r} is not key=value")
        params[key.strip()] = float(val)
    if head == "random":
        return RandomAdversary(int(params.pop("support", 3)))
    if head == "mixed":
        return MixedAdversary()
    if head in ADVERSARY_KINDS:
        allowed = {"random_walk": {"s"}, "biased": {"s", "p"}, "constant": {"s", "l"}}[head]
        extra = set(params) - allowed
        if extra:
            raise ArgumentError(f"unknown adversary parameter(s) {sorted(extra)}")
        return KindAdversary(head, p=params.get("p", 0.5), l=params.get("l", 0.0),
                             s=params.get("s"))
    raise ArgumentError(f"unknown adversary {desc!r}")


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

def _tables(cfg: GameConfig) -> dict:
    if cfg.mode == "integer":
        return {side: integer_table(cfg.final, cfg.T, side) for side in ("lower", "upper")}
    if cfg.mode == "discrete":
        return {side: backward_table(cfg.final, cfg.horizon, cfg.k, side)
                for side in ("lower", "upper")}
    return {}


def _score(cfg: GameConfig, tables: dict, state: RegretState, i: int, t: float) -> float:
    if cfg.mode == "continuous":
        vals = cfg.potential.value(t, state.regrets)
    else:
        vals = tables["lower"].at(i, state.regrets)
    return float(state.masses @ vals)


def run_game(config: GameConfig, learner="potential", adversary="random_walk",
             initial_state: RegretState | None = None, record_history: bool = True) -> GameTrace:
    """Play one game and return its trace.

    The trace score is ``Psi(t) (.) phi(t)`` with the lower (adversary)
    potential in the integer and discrete modes and the configured potential
    in continuous mode. Raises :class:`GameRuleViolation` naming the
    iteration on any illegal adversary move.
    """
    cfg = config
    learner, adversary = make_learner(learner), make_adversary(adversary)
    rng = np.random.default_rng(cfg.seed)
    tables = _tables(cfg)
    if initial_state is None:
        initial_state = (RegretState.experts(cfg.n_experts) if cfg.n_experts
                         else RegretState.point_mass(0.0))
    state, t = initial_state, 0.0
    horizon = cfg.horizon if cfg.mode != "integer" else float(cfg.T)

    def snapshot(i, t, s, ell, dt, st):
        return StepRecord(i, t, s, ell, dt, _score(cfg, tables, st, i, t),
                          tuple(epsilon_regret(st, e) for e in cfg.eps))

    records = [snapshot(0, 0.0, 0.0, 0.0, 0.0, state)]
    states, weights_hist, losses_hist = [state], [], []
    early = False
    for i in range(cfg.iterations):
        if cfg.mode == "continuous" and t >= horizon - TIME_TOL:
            break
        ctx = StepContext(i, t, state, cfg, rng, tables=tables)
        if adversary.exhausted(ctx):
            if cfg.mode != "continuous":
                raise ArgumentError(f"adversary script ended at iteration {i} of {cfg.iterations}")
            early = True
            break
        s = float(adversary.step_size(ctx))
        _check_step(cfg, s, t, i)
        ctx.s = s
        w = np.asarray(learner.weights(ctx), dtype=float)
        if w.shape != (len(state),) or np.any(w < 0):
            raise ArgumentError(f"learner returned invalid weights at step {i}")
        if abs(float(state.masses @ w) - 1.0) > NORMALIZATION_TOL * max(1.0, np.max(w)):
            raise ArgumentError(f"learner weights not normalized at step {i}")
        ctx.weights = w
        losses = adversary.loss_map(ctx)
        if losses.n_atoms != len(state):
            raise GameRuleViolation("loss map does not cover every atom", i)
        if np.any((np.abs(losses.values) > s * (1 + 1e-12)) & (losses.probs > 0)):
            raise GameRuleViolation(f"loss outside [-{s}, {s}]", i)
        limit = None if cfg.mode == "integer" else cfg.c * s * s
        ell = aggregate_loss(state, w, losses, limit=limit, step=i)
        if cfg.mode == "integer":
            dt = 1.0
        elif cfg.mode == "discrete":
            dt = s * s
        else:
            dt = time_increment(state, losses, ell, cfg.potential, t, cfg.degenerate)
            if t + dt > horizon + TIME_TOL:
                early = True
                break
        state = convolve_step(state, losses, ell)
        if cfg.mode == "integer":
            t = float(i + 1)
        elif cfg.mode == "discrete":
            t = (i + 1) * s * s
        else:
            t = horizon if abs(t + dt - horizon) <= TIME_TOL else t + dt
        records.append(snapshot(i + 1, t, s, ell, dt, state))
        if record_history:
            states.append(state)
            weights_hist.append(w)
            losses_hist.append(losses)
    if cfg.mode == "continuous" and t < horizon - TIME_TOL and len(records) - 1 < cfg.iterations:
        early = True
    V_n = float(sum(r.dt for r in records[1:]))
    return GameTrace(
        cfg, tuple(records), state, V_n,
        tuple(states) if record_history else None,
        tuple(weights_hist) if record_history else None,
        tuple(losses_hist) if record_history else None,
        early,
    )


def _check_step(cfg: GameConfig, s: float, t: float, i: int) -> None:
    if not s > 0:
        raise GameRuleViolation(f"step size must be positive, got {s}", i)
    if cfg.mode == "integer":
        if s != 1.0:
            raise GameRuleViolation(f"integer game steps are 1, got {s}", i)
    elif cfg.mode == "discrete":
        bound = min(math.sqrt(max(cfg.horizon - t, 0.0)), 1.0)
        if abs(s - cfg.step_size) > 1e-15 * max(1.0, s):
            raise ArgumentError(f"level-{cfg.k} game uses step {cfg.step_size!r}, got {s!r}")
        if s > bound * (1 + 1e-12):
            raise GameRuleViolation(f"step {s} exceeds min(sqrt(T - t), 1) = {bound}", i)
    elif s > cfg.max_step * (1 + 1e-12):
        raise GameRuleViolation(f"step {s} exceeds the maximal step {cfg.max_step}", i)


def with_seed(config: GameConfig, seed: int) -> GameConfig:
    return replace(config, seed=int(seed))

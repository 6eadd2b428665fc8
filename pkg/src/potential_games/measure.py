"""Finite atomic regret measures and the operations on them.

A :class:`RegretState` is the game state: a probability measure over regret
values made of finitely many atoms. Splitting an atom into several (as the
random-walk adversary does) is how arbitrary divisibility is realised.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, DomainError, ResourceError
from .serialize import fmt

MASS_TOL = 1e-12
MERGE_TOL = 1e-9
MAX_ATOMS = 2**20


@dataclass(frozen=True, eq=False)
class RegretState:
    """Atoms ``(regret, mass)`` sorted by regret, masses summing to one.

    Unlabelled atoms closer than :data:`MERGE_TOL` are merged. Labelled
    states (one atom per expert) are never merged, since each label is a
    distinct action.
    """

    regrets: np.ndarray
    masses: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        r = np.asarray(self.regrets, dtype=float)
        m = np.asarray(self.masses, dtype=float)
        if r.ndim != 1 or r.shape != m.shape or r.size == 0:
            raise ArgumentError("regrets and masses must be equal-length 1-d arrays")
        if not np.all(np.isfinite(r)):
            raise ArgumentError("regrets must be finite")
        if np.any(m <= 0):
            raise ArgumentError("all masses must be positive")
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise ArgumentError(f"masses sum to {m.sum()!r}, not 1")
        if np.any(np.diff(r) < 0):
            raise ArgumentError("atoms must be sorted by regret")
        if self.labels is None and r.size > 1 and np.min(np.diff(r)) <= MERGE_TOL:
            raise ArgumentError("unlabelled atoms closer than the merge tolerance")
        if self.labels is not None and len(self.labels) != r.size:
            raise ArgumentError("labels must align with atoms")
        r.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "regrets", r)
        object.__setattr__(self, "masses", m)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_atoms(cls, regrets, masses, labels=None, normalize: bool = False) -> "RegretState":
        """Build a state from unsorted, possibly duplicated atoms.

        Zero-mass atoms are dropped; with ``normalize`` the masses are
        rescaled to sum to one (used to remove round-off drift).
        """
        r = np.asarray(regrets, dtype=float).ravel()
        m = np.asarray(masses, dtype=float).ravel()
        if r.shape != m.shape:
            raise ArgumentError("regrets and masses must have the same length")
        if np.any(m < 0):
            raise ArgumentError("masses must be non-negative")
        keep = m > 0
        if labels is not None:
            labels = np.asarray(labels, dtype=object)[keep]
        r, m = r[keep], m[keep]
        if r.size == 0:
            raise ArgumentError("state has no mass")
        order = np.argsort(r, kind="stable")
        r, m = r[order], m[order]
        if labels is not None:
            labels = tuple(labels[order])
        else:
            r, m = _merge(r, m)
        if r.size > MAX_ATOMS:
            raise ResourceError(f"state has {r.size} atoms, cap is {MAX_ATOMS}")
        if normalize:
            m = m / m.sum()
        return cls(r, m, labels)

    @classmethod
    def point_mass(cls, regret: float = 0.0) -> "RegretState":
        return cls(np.array([float(regret)]), np.array([1.0]))

    @classmethod
    def experts(cls, n: int, labels: Sequence | None = None) -> "RegretState":
        """``n`` equally weighted labelled atoms at regret 0."""
        if n < 1:
            raise ArgumentError("need at least one expert")
        labels = tuple(labels) if labels is not None else tuple(range(n))
        return cls(np.zeros(n), np.full(n, 1.0 / n), labels)

    def __len__(self):
        return self.regrets.size

    def __eq__(self, other):
        if not isinstance(other, RegretState):
            return NotImplemented
        return (self.labels == other.labels
                and np.array_equal(self.regrets, other.regrets)
                and np.array_equal(self.masses, other.masses))

    __hash__ = None

    def mean(self) -> float:
        return float(self.masses @ self.regrets)

    def variance(self) -> float:
        mu = self.mean()
        return float(self.masses @ (self.regrets - mu) ** 2)

    def tail(self, R) -> np.ndarray:
        """``mass{rho >= R}`` for each threshold in ``R``."""
        R = np.asarray(R, dtype=float)
        # suffix sums over sorted atoms
        suffix = np.concatenate([np.cumsum(self.masses[::-1])[::-1], [0.0]])
        idx = np.searchsorted(self.regrets, R, side="left")
        return suffix[idx]

    def close_to(self, other: "RegretState", atol: float = 1e-12) -> bool:
        return (len(self) == len(other)
                and np.allclose(self.regrets, other.regrets, rtol=0, atol=atol)
                and np.allclose(self.masses, other.masses, rtol=0, atol=atol))


def _merge(r: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if r.size < 2:
        return r, m
    starts = np.concatenate([[True], np.diff(r) > MERGE_TOL])
    if starts.all():
        return r, m
    group = np.cumsum(starts) - 1
    mass = np.bincount(group, weights=m)
    center = np.bincount(group, weights=m * r) / mass
    return center, mass


@dataclass(frozen=True, eq=False)
class LossMap:
    """Per-atom finite-support loss distributions on ``[-s, s]``.

    ``values`` and ``probs`` have shape ``(n_atoms, support)``; rows with a
    smaller support are padded with zero-probability entries.
    """

    step_size: float
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        s = float(self.step_size)
        if not 0 < s <= 1:
            raise ArgumentError(f"step size must be in (0, 1], got {s}")
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        p = np.atleast_2d(np.asarray(self.probs, dtype=float))
        if v.shape != p.shape:
            raise ArgumentError("values and probs must have the same shape")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > MASS_TOL):
            raise ArgumentError("each per-atom distribution must sum to one")
        if np.any((np.abs(v) > s * (1 + 1e-12)) & (p > 0)):
            raise ArgumentError(f"loss outside [-{s}, {s}]")
        object.__setattr__(self, "step_size", s)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, s: float, values, probs, n_atoms: int) -> "LossMap":
        """Same distribution at every atom."""
        v = np.broadcast_to(np.asarray(values, dtype=float), (n_atoms, len(values)))
        p = np.broadcast_to(np.asarray(probs, dtype=float), (n_atoms, len(probs)))
        return cls(s, v, p)

    @classmethod
    def from_distributions(cls, s: float, dists: Sequence[tuple[Sequence[float], Sequence[float]]]) -> "LossMap":
        width = max(len(v) for v, _ in dists)
        vals = np.zeros((len(dists), width))
        probs = np.zeros((len(dists), width))
        for i, (v, p) in enumerate(dists):
            vals[i, : len(v)] = v
            probs[i, : len(p)] = p
        return cls(s, vals, probs)

    @classmethod
    def point_losses(cls, s: float, losses) -> "LossMap":
        """Deterministic per-atom losses (finite-expert mode)."""
        losses = np.asarray(losses, dtype=float)
        return cls(s, losses[:, None], np.ones((losses.size, 1)))

    @property
    def n_atoms(self) -> int:
        return self.values.shape[0]

    def bias(self) -> np.ndarray:
        """Per-atom mean loss ``B(R)``."""
        return np.sum(self.values * self.probs, axis=1)

    def second_moment_about(self, ell: float) -> np.ndarray:
        """Per-atom ``E[(y - ell)^2]``."""
        return np.sum(self.probs * (self.values - ell) ** 2, axis=1)

    def second_moment(self) -> np.ndarray:
        return np.sum(self.probs * self.values**2, axis=1)


@dataclass(frozen=True)
class BoundFunction:
    """A non-increasing bound ``G: R -> [0, 1]`` on tail probabilities."""

    G: Callable[[np.ndarray], np.ndarray]
    name: str = "G"

    def __call__(self, R):
        return np.asarray(self.G(np.asarray(R, dtype=float)), dtype=float)

    def check(self, grid) -> bool:
        """Verify monotonicity and range on a sorted grid."""
        vals = self(np.sort(np.asarray(grid, dtype=float)))
        return bool(np.all(np.diff(vals) <= 1e-15) and np.all((vals >= 0) & (vals <= 1)))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def score(state: RegretState, potential, t: float | None = None) -> float:
    """``Psi (.) phi``: the state-average of the potential.

    ``potential`` is a :class:`~potential_games.potential.Potential` (then
    ``t`` is required) or any callable of the regret array.
    """
    if hasattr(potential, "value"):
        if t is None:
            raise ArgumentError("a time-indexed potential needs t")
        vals = potential.value(t, state.regrets)
    else:
        vals = potential(state.regrets)
    return float(state.masses @ np.asarray(vals, dtype=float))


def epsilon_regret(state: RegretState, eps: float) -> float:
    """Regret of the top-``eps`` fraction of mass.

    The regret of the atom at which the cumulative mass, counted from the
    largest regret downwards, first reaches ``eps``.
    """
    if not 0 < eps <= 1:
        raise ArgumentError(f"eps must be in (0, 1], got {eps}")
    cum = np.cumsum(state.masses[::-1])
    idx = int(np.searchsorted(cum, eps - MASS_TOL, side="left"))
    idx = min(idx, len(state) - 1)
    return float(state.regrets[::-1][idx])


def binomial_dist(n: int, s: float) -> RegretState:
    """Law of a sum of ``n`` independent fair ``+-s`` coin flips."""
    if n < 0 or int(n) != n:
        raise ArgumentError("n must be a non-negative integer")
    if not s > 0:
        raise ArgumentError("s must be positive")
    n = int(n)
    j = np.arange(n + 1)
    return RegretState.from_atoms((2 * j - n) * s, binomial_weights(n), normalize=True)


def binomial_weights(n: int) -> np.ndarray:
    """``C(n, j) / 2^n`` for ``j = 0..n``.

    Exact integer arithmetic up to n = 60, log-space accumulation above.
    """
    if n <= 60:
        return np.array([math.comb(n, j) for j in range(n + 1)], dtype=float) / 2.0**n
    j = np.arange(n + 1)
    lgam = np.array([math.lgamma(x + 1) for x in range(n + 1)])
    logw = lgam[n] - lgam[j] - lgam[n - j] - n * math.log(2.0)
    return np.exp(logw)


def convolve_step(state: RegretState, losses: LossMap, ell: float) -> RegretState:
    """Apply one round of losses: atom ``(R, m)`` becomes ``(R + ell - y, m q(y))``.

    Regret is the learner's loss minus the action's loss, so it grows when
    the action beats the learner.
    """
    if losses.n_atoms != len(state):
        raise ArgumentError(
            f"loss map has {losses.n_atoms} rows but the state has {len(state)} atoms"
        )
    if state.labels is not None:
        if np.any(np.count_nonzero(losses.probs, axis=1) != 1):
            raise ArgumentError("labelled states accept only deterministic per-atom losses")
        y = np.sum(losses.values * losses.probs, axis=1)
        return RegretState.from_atoms(state.regrets + ell - y, state.masses,
                                      labels=state.labels, normalize=True)
    new_r = state.regrets[:, None] + ell - losses.values
    new_m = state.masses[:, None] * losses.probs
    if np.count_nonzero(new_m) > MAX_ATOMS * 4:
        raise ResourceError("convolution would exceed the atom cap")
    return RegretState.from_atoms(new_r, new_m, normalize=True)


def srb_check(state: RegretState, G, grid, margin: float = 0.0) -> bool:
    """Simultaneous regret bound: ``mass{rho >= R} <= G(R)`` on every grid point.

    With ``margin > 0`` the bound must hold with that much slack
    (``tail <= G - margin``); otherwise a ``1e-12`` tolerance is allowed.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise ArgumentError("grid must be non-empty")
    tail = state.tail(grid)
    bound = np.asarray(G(grid), dtype=float)
    if margin > 0:
        return bool(np.all(tail <= bound - margin))
    return bool(np.all(tail <= bound + MASS_TOL))


def apb_score(state: RegretState, phi) -> float:
    """``Psi (.) phi`` for a positive potential of regret alone; compare with 1."""
    vals = np.asarray(phi(state.regrets), dtype=float)
    if np.any(~(vals > 0)):
        raise DomainError("potential must be positive at every atom")
    return float(state.masses @ vals)


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

def load_state_csv(path: str | Path) -> RegretState:
    """Read ``regret,mass[,label]`` rows (header required)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"regret", "mass"} <= set(reader.fieldnames):
            raise ArgumentError(f"{path}: header must contain regret,mass")
        rows = list(reader)
    if not rows:
        raise ArgumentError(f"{path}: no atoms")
    regrets = [float(r["regret"]) for r in rows]
    masses = [float(r["mass"]) for r in rows]
    labels = None
    if "label" in reader.fieldnames and any(r.get("label") for r in rows):
        labels = [r["label"] for r in rows]
    if abs(sum(masses) - 1.0) > MASS_TOL:
        raise ArgumentError(f"{path}: masses sum to {sum(masses)!r}")
    if labels is not None:
        order = np.argsort(regrets, kind="stable")
        return RegretState(np.asarray(regrets)[order], np.asarray(masses)[order],
                           tuple(labels[i] for i in order))
    return RegretState.from_atoms(regrets, masses)


def save_state_csv(state: RegretState, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["regret", "mass"] + (["label"] if state.labels is not None else [])
        w.writerow(header)
        for i, (r, m) in enumerate(zip(state.regrets, state.masses)):
            row = [fmt(r), fmt(m)]
            if state.labels is not None:
                row.append(state.labels[i])
            w.writerow(row)


def load_expert_losses(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a finite-expert loss matrix: one row per iteration, one column per expert.

    A header row of expert names is optional. Entries must lie in [-1, 1].
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ArgumentError(f"{path}: empty loss file")
    try:
        [float(v) for v in rows[0]]
        names = [f"e{j}" for j in range(len(rows[0]))]
    except ValueError:
        names, rows = rows[0], rows[1:]
    try:
        mat = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ArgumentError(f"{path}: {exc}") from None
    if mat.ndim != 2 or mat.shape[1] != len(names):
        raise ArgumentError(f"{path}: ragged loss matrix")
    if np.any(np.abs(mat) > 1):
        raise ArgumentError(f"{path}: losses must lie in [-1, 1]")
    return names, mat

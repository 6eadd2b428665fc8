"""Game lattices, backward induction and the binomial closed forms.

Level ``k`` of the discrete game uses step ``s_k = sqrt(T) 2**-k`` and
``4**k`` iterations of duration ``s_k**2``. Its lower potential is obtained by
averaging the final potential at ``R +- s_k`` backwards in time, the upper
potential by averaging at ``R +- s_k (1 + s_k)``. The integer game is the
special case ``s = 1`` (offsets 1 and 2).

Node ``(i, j)`` of a table sits at time ``i * time_step`` and regret
``(2j - i) * offset`` where ``offset`` is the averaging offset of that side,
so upper tables live on their own (coarser) lattice and no interpolation is
ever needed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ArgumentError, PreconditionError, ResourceError
from .measure import binomial_weights
from .potential import DEFAULT_GRID, FinalPotential, strict_positivity_report
from .serialize import fmt

SIDES = ("lower", "upper")
MAX_LEVEL = 12
MAX_NODES = 60_000_000
ON_LATTICE_TOL = 1e-9


def level_step(horizon: float, k: int) -> float:
    """``s_k = sqrt(horizon) * 2**-k``."""
    return math.sqrt(horizon) * 2.0**-k


def side_offset(step: float, side: str) -> float:
    if side == "lower":
        return step
    if side == "upper":
        return step * (1.0 + step)
    raise ArgumentError(f"side must be 'lower' or 'upper', got {side!r}")


def binomial_expectation(final, n: int, sigma: float, R0) -> np.ndarray | float:
    """``E[final(R0 + X)]`` with ``X`` a sum of ``n`` fair ``+-sigma`` steps."""
    R0 = np.asarray(R0, dtype=float)
    w = binomial_weights(n)
    shifts = (2.0 * np.arange(n + 1) - n) * sigma
    flat = R0.ravel()
    out = np.empty(flat.size)
    chunk = max(1, 2_000_000 // (n + 1))
    for lo in range(0, flat.size, chunk):
        pts = flat[lo : lo + chunk, None] + shifts
        out[lo : lo + chunk] = np.asarray(final(pts), dtype=float) @ w
    out = out.reshape(R0.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class LatticeTable:
    """Upper or lower potential values on a game lattice."""

    final: FinalPotential
    side: str
    n_steps: int
    step: float
    time_step: float
    horizon: float
    k: int | None
    values: tuple

    @property
    def offset(self) -> float:
        return side_offset(self.step, self.side)

    def time(self, i: int) -> float:
        return i * self.time_step

    def regret(self, i: int, j) -> np.ndarray | float:
        return (2 * np.asarray(j) - i) * self.offset

    def value(self, i: int, j: int) -> float:
        return float(self.values[i][j])

    def column(self, i: int) -> np.ndarray:
        """All node values at iteration ``i`` (``j = 0..i``)."""
        return self.values[i]

    def at(self, i: int, R) -> np.ndarray | float:
        """Potential at iteration ``i`` and arbitrary regrets ``R``.

        Lattice nodes are read from the table; other regrets use the
        binomial closed form, which the recursion matches everywhere.
        """
        if not 0 <= i <= self.n_steps:
            raise ArgumentError(f"iteration {i} outside 0..{self.n_steps}")
        R = np.asarray(R, dtype=float)
        if i == self.n_steps:
            out = self.final(R)
        else:
            pos = (R / self.offset + i) / 2.0
            j = np.rint(pos)
            on = (np.abs(pos - j) * 2.0 * self.offset <= ON_LATTICE_TOL) & (j >= 0) & (j <= i)
            out = np.empty(R.shape)
            if np.any(on):
                out[on] = self.values[i][j[on].astype(int)]
            if np.any(~on):
                out[~on] = binomial_expectation(self.final, self.n_steps - i, self.offset, R[~on])
        out = np.asarray(out, dtype=float)
        return float(out) if out.ndim == 0 else out

    def nodes(self) -> Iterator[tuple[int, int, float, float, float]]:
        for i, col in enumerate(self.values):
            t = self.time(i)
            for j, v in enumerate(col):
                yield i, j, t, (2 * j - i) * self.offset, float(v)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "t", "R", "value"])
            for i, j, t, R, v in self.nodes():
                w.writerow([i, j, fmt(t), fmt(R), fmt(v)])


def _require_sp(final: FinalPotential, order: int):
    if not strict_positivity_report(final, order, DEFAULT_GRID).passed:
        name = getattr(final, "name", repr(final))
        raise PreconditionError(f"final potential {name} fails SP{{{order}}}")


def _build(final, side, n, step, time_step, horizon, k) -> LatticeTable:
    nodes = (n + 1) * (n + 2) // 2
    if nodes > MAX_NODES:
        raise ResourceError(f"lattice with {n} steps has {nodes} nodes (cap {MAX_NODES})")
    sigma = side_offset(step, side)
    cols = [None] * (n + 1)
    cols[n] = np.asarray(final((2.0 * np.arange(n + 1) - n) * sigma), dtype=float)
    for i in range(n, 0, -1):
        nxt = cols[i]
        cols[i - 1] = 0.5 * (nxt[1:] + nxt[:-1])
    for c in cols:
        c.flags.writeable = False
    return LatticeTable(final, side, n, step, time_step, horizon, k, tuple(cols))


def backward_table(final: FinalPotential, horizon: float, k: int, side: str,
                   check: bool = True) -> LatticeTable:
    """Level-``k`` lower or upper potential table by backward induction."""
    if side not in SIDES:
        raise ArgumentError(f"side must be one of {SIDES}")
    if not horizon > 0:
        raise ArgumentError("horizon must be positive")
    if k < 0 or int(k) != k:
        raise ArgumentError("k must be a non-negative integer")
    if k > MAX_LEVEL:
        raise ResourceError(f"k={k} exceeds the maximum level {MAX_LEVEL}")
    if check:
        _require_sp(final, 2)
    s = level_step(horizon, k)
    return _build(final, side, 4**k, s, s * s, horizon, int(k))


def integer_table(final: FinalPotential, T: int, side: str, check: bool = True) -> LatticeTable:
    """Integer-game table: ``T`` unit steps, offsets 1 (lower) and 2 (upper)."""
    if T < 1 or int(T) != T:
        raise ArgumentError("T must be a positive integer")
    if side not in SIDES:
        raise ArgumentError(f"side must be one of {SIDES}")
    if check:
        _require_sp(final, 2)
    return _build(final, side, int(T), 1.0, 1.0, float(T), None)


def closed_form_potential(final: FinalPotential, horizon: float, k: int, i: int, R0,
                          side: str):
    """Exact level-``k`` potential at iteration ``i`` by binomial summation."""
    n_total = 4**k
    if not 0 <= i <= n_total:
        raise ArgumentError(f"i must be in 0..{n_total}")
    s = level_step(horizon, k)
    return binomial_expectation(final, n_total - i, side_offset(s, side), R0)

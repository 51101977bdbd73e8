"""How often a victim's attendance over a few sessions singles them out.

For each trial and victim, pick ``g`` of the victim's attended sessions (at
random, or as a contiguous run of them) and check whether any other victim
shows the same attendance pattern on exactly those sessions.
"""

from __future__ import annotations

import csv
import os
from typing import Iterable

import numpy as np

from ..errors import ConfigError


def _check(attendance, g: int, trials: int) -> np.ndarray:
    a = np.asarray(attendance).astype(bool)
    if a.ndim != 2:
        raise ConfigError("attendance must be a victims x sessions matrix")
    if isinstance(g, bool) or not isinstance(g, (int, np.integer)) or g <= 0:
        raise ConfigError(f"g must be a positive integer, got {g!r}")
    if g > a.shape[1]:
        raise ConfigError(f"g={g} exceeds the {a.shape[1]} sessions")
    if trials <= 0:
        raise ConfigError("trials must be positive")
    return a


def _pad(rng: np.random.Generator, chosen: np.ndarray, row: np.ndarray, g: int) -> np.ndarray:
    # victims with fewer than g attended sessions are topped up with unattended ones
    short = g - len(chosen)
    if short <= 0:
        return chosen
    absent = np.flatnonzero(~row)
    return np.concatenate([chosen, rng.choice(absent, size=short, replace=False)])


def _distinct(a: np.ndarray, u: int, cols: np.ndarray) -> bool:
    sub = a[:, cols]
    same = np.all(sub == sub[u], axis=1)
    same[u] = False
    return not same.any()


def _run(attendance, g, trials, seed, pick) -> float:
    a = _check(attendance, g, trials)
    p = a.shape[0]
    if p == 0:
        return 0.0
    fractions = np.empty(trials)
    for t in range(trials):
        rng = np.random.default_rng([seed, t])  # one stream per trial
        hits = 0
        for u in range(p):
            cols = _pad(rng, pick(rng, np.flatnonzero(a[u]), g), a[u], g)
            hits += _distinct(a, u, cols)
        fractions[t] = hits / p
    return float(fractions.mean())


def _random_subset(rng, attended, g):
    if len(attended) <= g:
        return attended
    return np.sort(rng.choice(attended, size=g, replace=False))


def _contiguous_run(rng, attended, g):
    if len(attended) <= g:
        return attended
    start = int(rng.integers(0, len(attended) - g + 1))
    return attended[start : start + g]


def rand_g_distinguishability(attendance, g: int, trials: int = 20, seed: int = 0) -> float:
    """Mean fraction of victims singled out by ``g`` random attended sessions."""
    return _run(attendance, g, trials, seed, _random_subset)


def cont_g_distinguishability(attendance, g: int, trials: int = 20, seed: int = 0) -> float:
    """As the random variant, with ``g`` consecutive attended sessions."""
    return _run(attendance, g, trials, seed, _contiguous_run)


def feasibility_curve(attendance, gs: Iterable[int], mode: str = "rand", trials: int = 20, seed: int = 0):
    fn = {"rand": rand_g_distinguishability, "cont": cont_g_distinguishability}.get(mode)
    if fn is None:
        raise ConfigError(f"unknown feasibility mode {mode!r}; expected 'rand' or 'cont'")
    return [(int(g), fn(attendance, int(g), trials, seed)) for g in gs]


def write_curve(path: str | os.PathLike, curve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["g", "mean_distinguishability"])
        for g, value in curve:
            w.writerow([g, repr(float(value))])

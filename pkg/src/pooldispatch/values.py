"""Post-decision value estimation with hierarchical spatial aggregation.

Every vehicle's state one epoch after acting is projected, at each
aggregation level, onto a compact key: (epoch, vehicle zone, multiset of
pending drop-off zones, committed passengers, demand-volume bucket,
nearby-vehicle bucket). Each key holds a smoothed value estimate updated from
LP duals with an adaptive bias/noise-tracking step size; a level's weight in
the blended estimate shrinks with its estimated variance plus squared bias,
so coarse levels dominate early and fine levels take over as they accumulate
observations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

_EPS = 1e-12


class PostKey(NamedTuple):
    """Aggregated post-decision vehicle attribute at one level."""

    epoch: int
    zone: int
    drop_zones: tuple
    onboard: int
    volume_bucket: int
    nearby_bucket: int


class ValueEntry:
    """Running statistics for one key: estimate, bias, total variation,
    step-size recursion state."""

    __slots__ = ("estimate", "bias", "total_var", "lam", "n")

    def __init__(self, estimate=0.0, bias=0.0, total_var=0.0, lam=0.0, n=0):
        self.estimate = estimate
        self.bias = bias
        self.total_var = total_var
        self.lam = lam
        self.n = n

    def __repr__(self):
        return (f"ValueEntry(estimate={self.estimate!r}, bias={self.bias!r}, "
                f"total_var={self.total_var!r}, lam={self.lam!r}, n={self.n})")


@dataclass
class BakfConfig:
    """Adaptive step-size constants (bias-adjusted Kalman-style filter)."""

    eta0: float = 10.0       # inner smoothing: eta_n = eta0 / (eta0 + n - 1)
    alpha_min: float = 0.001
    prior_total_var: float = 1.0  # stands in for unvisited levels' variation


@dataclass
class AuxConfig:
    """Bucketing of the exogenous context carried in post-decision keys."""

    volume_buckets: int = 5
    volume_max: float = 10.0   # set to 2 x mean arrival rate by the CLI
    nearby_buckets: int = 5
    nearby_max: float = 20.0

    def volume_bucket(self, count: int) -> int:
        return _bucket(count, self.volume_max, self.volume_buckets)

    def nearby_bucket(self, count: int) -> int:
        return _bucket(count, self.nearby_max, self.nearby_buckets)


def _bucket(value: float, vmax: float, n: int) -> int:
    if n <= 1 or vmax <= 0:
        return 0
    idx = int(value * n / vmax)
    return min(max(idx, 0), n - 1)


def smooth(value: float, observation: float, alpha: float) -> float:
    """One exponential-smoothing application."""
    return (1.0 - alpha) * value + alpha * observation


def bakf_step(entry: ValueEntry, observation: float, cfg: BakfConfig) -> float:
    """Advance one entry by one observation; returns the step size used.

    The error is measured against the pre-update estimate; bias and total
    variation are smoothed with the inner rate, then the step size is 1 for
    the first observation, 1/n for the next two, and afterwards
    1 - noise_variance / total_variation with
    noise_variance = (total_var - bias^2) / (1 + lam), clamped to
    [alpha_min, 1]. A vanishing total variation (deterministic stream) falls
    back to the harmonic step 1/n. The estimate itself, lam, and n are
    updated in place.
    """
    n_new = entry.n + 1
    err = observation - entry.estimate
    eta = cfg.eta0 / (cfg.eta0 + n_new - 1)
    entry.bias = smooth(entry.bias, err, eta)
    entry.total_var = smooth(entry.total_var, err * err, eta)
    if n_new == 1:
        alpha = 1.0
    elif n_new in (2, 3):
        alpha = 1.0 / n_new
    elif entry.total_var <= _EPS:
        alpha = 1.0 / n_new
    else:
        noise_var = (entry.total_var - entry.bias ** 2) / (1.0 + entry.lam)
        alpha = 1.0 - noise_var / entry.total_var
        alpha = min(1.0, max(cfg.alpha_min, alpha))
    entry.estimate = smooth(entry.estimate, observation, alpha)
    entry.lam = (1.0 - alpha) ** 2 * entry.lam + alpha ** 2
    entry.n = n_new
    return alpha


def total_variation_of(entry: ValueEntry | None, cfg: BakfConfig) -> float:
    """Variance-plus-squared-bias mass that sets a level's weight."""
    if entry is None or entry.n == 0:
        return cfg.prior_total_var
    return entry.lam * entry.total_var + entry.bias ** 2


def compute_weights(entries, cfg: BakfConfig) -> np.ndarray:
    """Normalized inverse-variation weights across aggregation levels."""
    inv = np.array([1.0 / max(total_variation_of(e, cfg), _EPS) for e in entries],
                   dtype=np.float64)
    return inv / inv.sum()


class ValueTable:
    """Per-level dictionaries of post-decision value entries."""

    def __init__(self, hierarchy, n_epochs: int, aux: AuxConfig,
                 bakf: BakfConfig | None = None):
        self.hierarchy = hierarchy
        self.n_epochs = int(n_epochs)
        self.aux = aux
        self.bakf = bakf or BakfConfig()
        self.levels: list[dict[PostKey, ValueEntry]] = [
            {} for _ in range(hierarchy.n_levels)]

    # -- projection ---------------------------------------------------------

    def project(self, level: int, epoch: int, node: int, drop_nodes,
                onboard: int, volume_bucket: int, nearby_bucket: int) -> PostKey:
        """Aggregate one post-decision vehicle state at one level."""
        h = self.hierarchy
        zones = tuple(sorted(h.zone(level, d) for d in drop_nodes))
        return PostKey(int(epoch), h.zone(level, node), zones, int(onboard),
                       int(volume_bucket), int(nearby_bucket))

    def keys_for(self, epoch: int, node: int, drop_nodes, onboard: int,
                 volume_bucket: int, nearby_bucket: int) -> tuple:
        return tuple(self.project(g, epoch, node, drop_nodes, onboard,
                                  volume_bucket, nearby_bucket)
                     for g in range(self.hierarchy.n_levels))

    # -- estimation ---------------------------------------------------------

    def estimate(self, keys) -> float:
        """Weighted blend across levels; epoch-horizon states are worth 0."""
        if keys[0].epoch >= self.n_epochs:
            return 0.0
        entries = [self.levels[g].get(k) for g, k in enumerate(keys)]
        w = compute_weights(entries, self.bakf)
        return float(sum(wg * (e.estimate if e is not None else 0.0)
                         for wg, e in zip(w, entries)))

    def update(self, keys, observation: float) -> None:
        """Feed one dual observation into every level's entry for this state."""
        for g, k in enumerate(keys):
            entry = self.levels[g].get(k)
            if entry is None:
                entry = self.levels[g][k] = ValueEntry()
            bakf_step(entry, float(observation), self.bakf)

    def entry_counts(self) -> list[int]:
        return [len(lv) for lv in self.levels]

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        """One line per entry: t|g|zone|drops|onboard|vol|near|est|bias|tv|lam|n."""
        with open(path, "w") as fh:
            fh.write(f"# levels={self.hierarchy.n_levels} epochs={self.n_epochs}\n")
            for g, lv in enumerate(self.levels):
                for key in sorted(lv):
                    e = lv[key]
                    drops = ",".join(str(z) for z in key.drop_zones)
                    fh.write(f"{key.epoch}|{g}|{key.zone}|{drops}|{key.onboard}"
                             f"|{key.volume_bucket}|{key.nearby_bucket}"
                             f"|{e.estimate!r}|{e.bias!r}|{e.total_var!r}"
                             f"|{e.lam!r}|{e.n}\n")

    def load(self, path) -> "ValueTable":
        """Populate from a save() dump (entries replace current contents)."""
        self.levels = [{} for _ in range(self.hierarchy.n_levels)]
        with open(path) as fh:
            for ln in fh:
                ln = ln.strip()
                if not ln or ln.startswith("#"):
                    continue
                parts = ln.split("|")
                if len(parts) != 12:
                    raise ValueError(f"bad value-table line {ln!r}")
                epoch, g, zone = int(parts[0]), int(parts[1]), int(parts[2])
                drops = tuple(int(x) for x in parts[3].split(",")) if parts[3] else ()
                key = PostKey(epoch, zone, drops, int(parts[4]), int(parts[5]),
                              int(parts[6]))
                self.levels[g][key] = ValueEntry(
                    float(parts[7]), float(parts[8]), float(parts[9]),
                    float(parts[10]), int(parts[11]))
        return self

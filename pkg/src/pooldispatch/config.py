"""Experiment configuration: file format, overrides, scenario assembly.

Configs are flat YAML mappings; every key has a default documented in
CONFIG_TEMPLATE (also written by `pooldispatch init`). Command-line flags and
`--set key=value` pairs override file values. The `sweep` mapping lists
alternative values per axis; points are the cartesian product, evaluated with
shared demand paths and fleet placements so policy comparisons are paired.

Anything wrong with the configuration itself raises ConfigError, which the
CLI maps to exit code 1; failures while running (I/O, solver, simulation)
exit 2.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .demand import build_synthetic_model, load_model
from .network import (
    build_aggregation,
    generate_grid,
    load_network,
    remove_edges,
    select_rebalance_points,
)
from .routing import Limits
from .simulate import Scenario
from .values import AuxConfig


class ConfigError(ValueError):
    """Bad configuration value, file, or combination."""


CONFIG_TEMPLATE = """\
# pooldispatch experiment configuration (YAML). Every key is optional and
# shown with its default; command-line flags override file values.

# --- road network -----------------------------------------------------------
network_file: null          # load this network file instead of generating
grid_rows: 15               # generated grid height
grid_cols: 15               # generated grid width
weight_min: 20              # arc travel-time range, seconds
weight_max: 40
directed: false             # per-direction independent weights when true
remove_edges_fraction: 0.0  # fraction of edges removed (connectivity kept)

# --- demand -----------------------------------------------------------------
model_file: null            # fitted arrival model; synthesized when null
requests_files: []          # recorded demand days (CSV); replaces sampling
n_epochs: 40                # horizon T (decision epochs per day)
mean_requests_per_epoch: 16.0  # synthetic arrival curve mean
count_std: 1.0              # per-epoch request count standard deviation
demand_seed: 7              # synthetic-model shape seed (hot zones, OD table)

# --- service limits ---------------------------------------------------------
wait_max: 90                # max pickup wait, seconds
delay_max: 90               # max extra ride time beyond direct travel
groups_max: 3               # max co-riding request groups per vehicle
capacity_max: 6             # max passengers on board
delta: 60                   # epoch length, seconds

# --- spatial aggregation and context buckets --------------------------------
zone_counts: null           # zones per level; default [n, ~n/9, ~n/25]
rebalance_level: null       # zone level anchoring relocations (default coarsest)
volume_buckets: 5           # request-volume bucket count
volume_max: null            # volume bucket ceiling; default 2 x mean rate
nearby_buckets: 5           # nearby-vehicle bucket count
nearby_max: 20.0            # nearby bucket ceiling

# --- fleet and policies -----------------------------------------------------
fleet_size: 100
rebalancing: true           # allow idle-vehicle relocation (value-guided policy)
myopic_rebalancing: false   # the myopic baseline never repositions by default
policies: [myopic, adp]     # policies evaluated at every sweep point

# --- training ---------------------------------------------------------------
iterations: 200             # forward-pass training iterations N
table_file: null            # value table to evaluate with / resume from

# --- evaluation protocol ----------------------------------------------------
replicates: 5               # demand days per sweep point (paired across policies)
seed: 0                     # master seed for everything stochastic
workers: 1                  # worker processes for evaluation episodes
out_dir: runs/exp           # all outputs land here

# --- sweeps -----------------------------------------------------------------
# Lists of values per axis; points are the cartesian product. `wait_delay`
# sets wait_max and delay_max together. Example:
#   sweep:
#     wait_delay: [60, 90, 120]
sweep: {}
"""

_SWEEP_AXES = {
    "wait_delay", "wait_max", "delay_max", "groups_max", "capacity_max",
    "remove_edges_fraction", "rebalancing", "fleet_size",
    "mean_requests_per_epoch", "iterations",
}


@dataclass
class ExperimentConfig:
    network_file: str | None = None
    grid_rows: int = 15
    grid_cols: int = 15
    weight_min: int = 20
    weight_max: int = 40
    directed: bool = False
    remove_edges_fraction: float = 0.0

    model_file: str | None = None
    requests_files: list = field(default_factory=list)
    n_epochs: int = 40
    mean_requests_per_epoch: float = 16.0
    count_std: float = 1.0
    demand_seed: int = 7

    wait_max: int = 90
    delay_max: int = 90
    groups_max: int = 3
    capacity_max: int = 6
    delta: int = 60

    zone_counts: list | None = None
    rebalance_level: int | None = None
    volume_buckets: int = 5
    volume_max: float | None = None
    nearby_buckets: int = 5
    nearby_max: float = 20.0

    fleet_size: int = 100
    rebalancing: bool = True
    myopic_rebalancing: bool = False
    policies: list = field(default_factory=lambda: ["myopic", "adp"])

    iterations: int = 200
    table_file: str | None = None

    replicates: int = 5
    seed: int = 0
    workers: int = 1
    out_dir: str = "runs/exp"

    sweep: dict = field(default_factory=dict)

    def limits(self) -> Limits:
        try:
            return Limits(self.wait_max, self.delay_max, self.groups_max,
                          self.capacity_max, self.delta).validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self) -> "ExperimentConfig":
        self.limits()
        if self.n_epochs < 1:
            raise ConfigError("n_epochs must be >= 1")
        if self.fleet_size < 1:
            raise ConfigError("fleet_size must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.replicates < 0:
            raise ConfigError("replicates must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0.0 <= self.remove_edges_fraction < 1.0:
            raise ConfigError("remove_edges_fraction must be in [0, 1)")
        if self.network_file is None and (self.grid_rows < 1 or self.grid_cols < 1
                                          or self.grid_rows * self.grid_cols < 2):
            raise ConfigError("grid needs at least two nodes")
        if self.network_file is None and not 1 <= self.weight_min <= self.weight_max:
            raise ConfigError("need 1 <= weight_min <= weight_max")
        if not self.policies:
            raise ConfigError("policies must not be empty")
        for p in self.policies:
            if p not in ("myopic", "adp"):
                raise ConfigError(f"unknown policy {p!r}")
        if len(set(self.policies)) != len(self.policies):
            raise ConfigError("duplicate policy")
        if self.zone_counts is not None:
            if not self.zone_counts or any(int(z) < 1 for z in self.zone_counts):
                raise ConfigError("zone_counts must be positive")
        if not isinstance(self.sweep, dict):
            raise ConfigError("sweep must be a mapping of axis -> value list")
        for axis, vals in self.sweep.items():
            if axis not in _SWEEP_AXES:
                raise ConfigError(f"unknown sweep axis {axis!r} "
                                  f"(allowed: {sorted(_SWEEP_AXES)})")
            if not isinstance(vals, (list, tuple)) or not vals:
                raise ConfigError(f"sweep axis {axis!r} needs a non-empty list")
        return self


_FIELD_NAMES = {f.name for f in dataclasses.fields(ExperimentConfig)}


def config_from_mapping(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**data)
    return cfg.validate()


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read a YAML config file (optional) and apply key=value overrides."""
    data: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config parse error: {exc}") from None
        if loaded is not None:
            if not isinstance(loaded, dict):
                raise ConfigError("config root must be a mapping")
            data.update(loaded)
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        try:
            data[key] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"bad override value {raw!r}: {exc}") from None
    return config_from_mapping(data)


# ---------------------------------------------------------------------------
# sweep expansion

def _fmt_axis_value(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    return str(value)


def sweep_points(cfg: ExperimentConfig):
    """Expand the sweep mapping into (label, point-config) pairs.

    Axes iterate in sorted name order, values in listed order; with no sweep
    the single point is labeled "base". Point configs carry an empty sweep.
    """
    axes = sorted(cfg.sweep)
    if not axes:
        return [("base", dataclasses.replace(cfg, sweep={}))]
    points = [([], {})]
    for axis in axes:
        nxt = []
        for label_parts, sets in points:
            for val in cfg.sweep[axis]:
                parts = label_parts + [f"{axis}={_fmt_axis_value(val)}"]
                d = dict(sets)
                if axis == "wait_delay":
                    d["wait_max"] = int(val)
                    d["delay_max"] = int(val)
                else:
                    d[axis] = val
                nxt.append((parts, d))
        points = nxt
    out = []
    for label_parts, sets in points:
        point = dataclasses.replace(cfg, sweep={}, **sets)
        point.validate()
        out.append((";".join(label_parts), point))
    return out


def slugify(label: str) -> str:
    """Turn a sweep-point label into a filename fragment."""
    out = []
    for ch in label:
        if ch.isalnum():
            out.append(ch)
        elif ch in "=;,":
            out.append({"=": "-", ";": "__", ",": "_"}[ch])
        elif ch == ".":
            out.append("p")
        else:
            out.append("_")
    return "".join(out)


# ---------------------------------------------------------------------------
# scenario assembly

def default_zone_counts(n_nodes: int) -> list[int]:
    """Three levels by default: exact, ~9-node zones, ~25-node zones."""
    counts = [n_nodes]
    for divisor in (9, 25):
        z = max(1, round(n_nodes / divisor))
        if z < counts[-1]:
            counts.append(z)
    return counts


def pickup_counts_from_model(model) -> dict[int, int]:
    """Expected pickups per location, scaled to integers for the point picker."""
    if model is None:
        return {}
    return {int(o): int(round(float(p) * 1_000_000))
            for o, p in zip(model.origins.tolist(), model.origin_probs.tolist())}


def build_network(cfg: ExperimentConfig):
    if cfg.network_file is not None:
        net = load_network(cfg.network_file)
    else:
        net = generate_grid(cfg.grid_rows, cfg.grid_cols,
                            (cfg.weight_min, cfg.weight_max),
                            seed=cfg.seed, directed=cfg.directed)
    if cfg.remove_edges_fraction > 0.0:
        net = remove_edges(net, cfg.remove_edges_fraction, seed=cfg.seed)
    return net


def build_model(cfg: ExperimentConfig, net, hierarchy):
    """Arrival model for sampling: loaded from file or synthesized."""
    if cfg.model_file is not None:
        model = load_model(cfg.model_file)
        if model.n_epochs != cfg.n_epochs:
            raise ConfigError(
                f"model horizon {model.n_epochs} != n_epochs {cfg.n_epochs}")
        return model
    return build_synthetic_model(net, hierarchy, cfg.n_epochs,
                                 cfg.mean_requests_per_epoch, cfg.demand_seed,
                                 count_std=cfg.count_std)


def build_scenario(cfg: ExperimentConfig, *, need_model: bool = True) -> Scenario:
    """Materialize the full simulation scenario a config describes."""
    net = build_network(cfg)
    zone_counts = ([int(z) for z in cfg.zone_counts]
                   if cfg.zone_counts is not None
                   else default_zone_counts(net.n_nodes))
    try:
        hierarchy = build_aggregation(net, zone_counts, seed=cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    model = None
    if need_model or cfg.model_file is not None:
        model = build_model(cfg, net, hierarchy)

    volume_max = cfg.volume_max
    if volume_max is None:
        mean_rate = model.mean_rate() if model is not None else 0.0
        volume_max = 2.0 * mean_rate if mean_rate > 0 else 10.0
    aux = AuxConfig(volume_buckets=cfg.volume_buckets,
                    volume_max=float(volume_max),
                    nearby_buckets=cfg.nearby_buckets,
                    nearby_max=float(cfg.nearby_max))

    rebalance_points: list[int] = []
    if cfg.rebalancing:
        level = (cfg.rebalance_level if cfg.rebalance_level is not None
                 else hierarchy.n_levels - 1)
        if not 0 <= level < hierarchy.n_levels:
            raise ConfigError(f"rebalance_level {level} outside hierarchy")
        rebalance_points = select_rebalance_points(
            net, hierarchy, level, pickup_counts_from_model(model))

    return Scenario(net=net, oracle=net.oracle(), hierarchy=hierarchy,
                    limits=cfg.limits(), n_epochs=cfg.n_epochs,
                    fleet_size=cfg.fleet_size,
                    rebalance_points=rebalance_points, aux=aux, model=model)

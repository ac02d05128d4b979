"""Demand model: timed request batches over a road network.

Time is discretized into decision epochs of `delta` seconds; epoch t (1-based)
starts at (t - 1) * delta. Requests arriving during an epoch are presented as
an unordered batch at its start. Each request carries a hard drop-off deadline

    deadline = epoch_start + wait_max + direct_travel + delay_max

so wait budget that goes unused at pickup rolls over into extra delay slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_GROUP_SIZE = 4  # passenger group sizes are 1..4


class DemandError(ValueError):
    """Malformed demand input."""


@dataclass(eq=False)
class Request:
    """One passenger group wanting origin -> destination.

    Identity semantics: two requests are interchangeable only through class
    grouping in the matching layer, never via field equality.
    """

    id: int
    epoch: int
    origin: int
    destination: int
    passengers: int
    deadline: int
    picked_up: bool = False


def compute_deadline(epoch_start_seconds: int, wait_max: int,
                     direct_travel: int, delay_max: int) -> int:
    """Latest acceptable drop-off second for a request arriving at epoch start."""
    return int(epoch_start_seconds) + int(wait_max) + int(direct_travel) + int(delay_max)


@dataclass
class SamplePath:
    """A realized demand day: raw request rows without deadlines.

    Rows are (epoch, origin, destination, passengers, id); deadlines depend on
    service limits and are stamped by `realize`, so one path can be replayed
    under different wait/delay settings (paired replication).
    """

    n_epochs: int
    rows: list = field(default_factory=list)

    def count(self, epoch: int) -> int:
        return sum(1 for r in self.rows if r[0] == epoch)

    @property
    def total(self) -> int:
        return len(self.rows)


def realize(path: SamplePath, oracle, wait_max: int, delay_max: int,
            delta: int) -> dict[int, list[Request]]:
    """Instantiate per-epoch Request batches with deadlines for given limits."""
    out: dict[int, list[Request]] = {t: [] for t in range(1, path.n_epochs + 1)}
    for epoch, orig, dest, pax, rid in path.rows:
        start = (epoch - 1) * delta
        direct = oracle.time(orig, dest)
        out[epoch].append(Request(
            id=rid, epoch=epoch, origin=orig, destination=dest, passengers=pax,
            deadline=compute_deadline(start, wait_max, direct, delay_max)))
    return out


# ---------------------------------------------------------------------------
# arrival model

@dataclass
class ArrivalModel:
    """Per-epoch arrival curve plus OD and group-size distributions.

    `rates[t-1]` is the mean request count of epoch t; counts are sampled
    from a normal with std `count_std`, truncated at 0 and rounded half-up.
    `origins`/`origin_probs` give the pickup marginal; `dest_probs[origin]`
    is the destination row conditioned on the origin (rows sum to 1).
    `size_probs` is the distribution over group sizes 1..4.
    """

    n_epochs: int
    rates: np.ndarray
    count_std: float
    origins: np.ndarray
    origin_probs: np.ndarray
    dest_probs: dict[int, tuple[np.ndarray, np.ndarray]]
    size_probs: np.ndarray

    def mean_rate(self) -> float:
        return float(np.mean(self.rates)) if len(self.rates) else 0.0

    def validate(self) -> "ArrivalModel":
        if len(self.rates) != self.n_epochs:
            raise DemandError("rate curve length != epoch count")
        if np.any(self.rates < 0):
            raise DemandError("negative arrival rate")
        if len(self.origins) != len(self.origin_probs):
            raise DemandError("origin table shape mismatch")
        if len(self.origins) and not np.isclose(self.origin_probs.sum(), 1.0):
            raise DemandError("origin probabilities must sum to 1")
        for orig, (dests, probs) in self.dest_probs.items():
            if len(dests) == 0 or not np.isclose(probs.sum(), 1.0):
                raise DemandError(f"destination row for {orig} must sum to 1")
            if orig in dests:
                raise DemandError(f"destination row for {orig} contains itself")
        if len(self.size_probs) != MAX_GROUP_SIZE or not np.isclose(self.size_probs.sum(), 1.0):
            raise DemandError("size distribution must cover 1..4 and sum to 1")
        return self


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def sample_path(model: ArrivalModel, seed) -> SamplePath:
    """Draw one demand day; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    rows = []
    rid = 0
    for t in range(1, model.n_epochs + 1):
        raw = rng.normal(model.rates[t - 1], model.count_std)
        count = _round_half_up(max(0.0, float(raw)))
        for _ in range(count):
            oi = rng.choice(len(model.origins), p=model.origin_probs)
            orig = int(model.origins[oi])
            dests, probs = model.dest_probs[orig]
            dest = int(dests[rng.choice(len(dests), p=probs)])
            pax = 1 + int(rng.choice(MAX_GROUP_SIZE, p=model.size_probs))
            rows.append((t, orig, dest, pax, rid))
            rid += 1
    return SamplePath(model.n_epochs, rows)


def fit_arrival_model(paths, n_epochs=None, count_std: float = 1.0) -> ArrivalModel:
    """Fit rates, OD rows, and size distribution from observed day(s).

    Accepts a single SamplePath or a sequence of them; rates are the per-epoch
    means across days.
    """
    if isinstance(paths, SamplePath):
        paths = [paths]
    paths = list(paths)
    if not paths:
        raise DemandError("need at least one day to fit")
    if n_epochs is None:
        n_epochs = max(p.n_epochs for p in paths)
    counts = np.zeros((len(paths), n_epochs), dtype=np.float64)
    od: dict[int, dict[int, int]] = {}
    sizes = np.zeros(MAX_GROUP_SIZE, dtype=np.float64)
    for d, p in enumerate(paths):
        for epoch, orig, dest, pax, _rid in p.rows:
            counts[d, epoch - 1] += 1
            od.setdefault(orig, {}).setdefault(dest, 0)
            od[orig][dest] += 1
            if not 1 <= pax <= MAX_GROUP_SIZE:
                raise DemandError(f"group size {pax} outside 1..{MAX_GROUP_SIZE}")
            sizes[pax - 1] += 1
    rates = counts.mean(axis=0)
    total = sum(sum(row.values()) for row in od.values())
    if total == 0:
        origins = np.empty(0, dtype=np.int64)
        origin_probs = np.empty(0, dtype=np.float64)
        dest_probs = {}
        size_probs = np.full(MAX_GROUP_SIZE, 1.0 / MAX_GROUP_SIZE)
    else:
        origins = np.array(sorted(od), dtype=np.int64)
        origin_probs = np.array(
            [sum(od[o].values()) / total for o in origins], dtype=np.float64)
        dest_probs = {}
        for o in origins.tolist():
            dests = np.array(sorted(od[o]), dtype=np.int64)
            row = np.array([od[o][d] for d in dests], dtype=np.float64)
            dest_probs[o] = (dests, row / row.sum())
        size_probs = sizes / sizes.sum()
    return ArrivalModel(n_epochs, rates, count_std, origins, origin_probs,
                        dest_probs, size_probs).validate()


# ---------------------------------------------------------------------------
# serialization

def save_model(model: ArrivalModel, path) -> None:
    """Line-oriented dump; floats use repr so reload is lossless."""
    with open(path, "w") as fh:
        fh.write(f"epochs={model.n_epochs}\n")
        fh.write(f"count_std={model.count_std!r}\n")
        fh.write("rates=" + ",".join(repr(float(r)) for r in model.rates) + "\n")
        fh.write("sizes=" + ",".join(repr(float(p)) for p in model.size_probs) + "\n")
        for i, o in enumerate(model.origins.tolist()):
            dests, probs = model.dest_probs[o]
            row = ",".join(f"{d}:{float(p)!r}" for d, p in zip(dests.tolist(), probs.tolist()))
            fh.write(f"od={o};{float(model.origin_probs[i])!r};{row}\n")


def load_model(path) -> ArrivalModel:
    fields: dict[str, str] = {}
    od_lines = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            key, _, val = ln.partition("=")
            if key == "od":
                od_lines.append(val)
            else:
                fields[key] = val
    try:
        n_epochs = int(fields["epochs"])
        count_std = float(fields["count_std"])
        rates = np.array([float(x) for x in fields["rates"].split(",")] if fields["rates"] else [],
                         dtype=np.float64)
        size_probs = np.array([float(x) for x in fields["sizes"].split(",")], dtype=np.float64)
    except KeyError as exc:
        raise DemandError(f"model file missing field {exc}") from None
    origins = []
    origin_probs = []
    dest_probs = {}
    for val in od_lines:
        o_s, w_s, row = val.split(";", 2)
        o = int(o_s)
        origins.append(o)
        origin_probs.append(float(w_s))
        dests = []
        probs = []
        for item in row.split(","):
            d_s, _, p_s = item.partition(":")
            dests.append(int(d_s))
            probs.append(float(p_s))
        dest_probs[o] = (np.array(dests, dtype=np.int64),
                         np.array(probs, dtype=np.float64))
    return ArrivalModel(n_epochs, rates, count_std,
                        np.array(origins, dtype=np.int64),
                        np.array(origin_probs, dtype=np.float64),
                        dest_probs, size_probs).validate()


def save_requests_csv(path: SamplePath, file) -> None:
    """Write a demand day as `epoch,origin,destination,passengers,id` rows."""
    with open(file, "w") as fh:
        fh.write("epoch,origin,destination,passengers,id\n")
        for epoch, orig, dest, pax, rid in path.rows:
            fh.write(f"{epoch},{orig},{dest},{pax},{rid}\n")


def load_requests_path(file, n_epochs=None) -> SamplePath:
    """Parse a request CSV into a raw SamplePath (no deadlines).

    Rows are `epoch,origin,destination,passengers` with an optional trailing
    id column and an optional header line. Without ids, sequential ids are
    assigned in file order; explicit ids must be unique.
    """
    rows = []
    seen_ids = set()
    auto = 0
    with open(file) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = [p.strip() for p in ln.split(",")]
            if parts[0].lower() == "epoch":
                continue  # header
            if len(parts) not in (4, 5):
                raise DemandError(f"bad request row {ln!r}")
            try:
                epoch, orig, dest, pax = (int(parts[0]), int(parts[1]),
                                          int(parts[2]), int(parts[3]))
            except ValueError:
                raise DemandError(f"non-integer field in {ln!r}") from None
            if len(parts) == 5:
                rid = int(parts[4])
            else:
                rid = auto
                auto += 1
            if rid in seen_ids:
                raise DemandError(f"duplicate request id {rid}")
            seen_ids.add(rid)
            if epoch < 1:
                raise DemandError(f"epoch must be >= 1 in {ln!r}")
            if orig == dest:
                raise DemandError(f"origin equals destination in {ln!r}")
            if not 1 <= pax <= MAX_GROUP_SIZE:
                raise DemandError(f"group size must be 1..{MAX_GROUP_SIZE} in {ln!r}")
            rows.append((epoch, orig, dest, pax, rid))
    if n_epochs is None:
        n_epochs = max((r[0] for r in rows), default=0)
    return SamplePath(n_epochs, rows)


def load_requests_csv(file, oracle, wait_max: int, delay_max: int, delta: int,
                      n_epochs=None) -> dict[int, list[Request]]:
    """Parse a request CSV straight into per-epoch batches with deadlines."""
    path = load_requests_path(file, n_epochs=n_epochs)
    for _epoch, orig, dest, _pax, _rid in path.rows:
        if not (0 <= orig < oracle.n and 0 <= dest < oracle.n):
            raise DemandError(f"request endpoint outside network: {orig}->{dest}")
    return realize(path, oracle, wait_max, delay_max, delta)


# ---------------------------------------------------------------------------
# synthetic scenario construction

def build_synthetic_model(net, hierarchy, n_epochs: int, mean_per_epoch: float,
                          seed, *, n_hot_zones: int = 3, origins_per_zone: int = 6,
                          n_destinations: int = 30, near_fraction: float = 0.5,
                          count_std: float = 1.0,
                          size_mean: float = 2.0, size_std: float = 1.0,
                          peak_width_frac: float = 0.2) -> ArrivalModel:
    """City-style synthetic demand: a bell-shaped arrival curve over the
    horizon, pickups concentrated in a few hot zones, drop-offs pulled
    toward a handful of popular sink locations (commute pattern).

    The hot zones come from the coarsest aggregation level; origin weights
    decay with rank inside each zone so a handful of locations dominate,
    which is what makes anticipatory repositioning matter. Destination
    weights decay the same way, so co-riders tend to share corridors and
    pooling a third group stays productive rather than forcing detours.
    Roughly `near_fraction` of the sinks are drawn from the hot zones
    themselves (short intra-zone errands) and the rest from the wider map,
    so part of the fleet naturally returns to where demand arises while the
    rest drifts outward and must be repositioned deliberately.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(1, n_epochs + 1, dtype=np.float64)
    width = max(1.0, peak_width_frac * n_epochs)
    shape = np.exp(-0.5 * ((t - (n_epochs + 1) / 2.0) / width) ** 2)
    rates = shape * (mean_per_epoch / shape.mean())

    coarse = hierarchy.n_levels - 1
    n_zones = hierarchy.zone_counts[coarse]
    hot = rng.choice(n_zones, size=min(n_hot_zones, n_zones), replace=False)
    origins = []
    weights = []
    hot_members = []
    for z in sorted(hot.tolist()):
        members = hierarchy.members(coarse, z)
        hot_members.extend(int(m) for m in members)
        take = min(origins_per_zone, len(members))
        chosen = rng.choice(members, size=take, replace=False)
        for rank, loc in enumerate(sorted(chosen.tolist())):
            origins.append(loc)
            weights.append(1.0 / (1 + rank))
    origins = np.array(origins, dtype=np.int64)
    origin_probs = np.array(weights, dtype=np.float64)
    origin_probs /= origin_probs.sum()

    n_dest = min(n_destinations, net.n_nodes)
    n_near = min(int(round(near_fraction * n_dest)), len(hot_members))
    near = rng.choice(np.array(sorted(hot_members), dtype=np.int64),
                      size=n_near, replace=False)
    far_pool = np.setdiff1d(np.arange(net.n_nodes, dtype=np.int64), near)
    far = rng.choice(far_pool, size=n_dest - n_near, replace=False)
    # interleave near/far sinks so both kinds get high-weight representatives
    ordered = []
    for i in range(max(len(near), len(far))):
        if i < len(near):
            ordered.append(int(near[i]))
        if i < len(far):
            ordered.append(int(far[i]))
    dest_weight = {d: 1.0 / (1 + rank) for rank, d in enumerate(ordered)}
    dests = np.array(sorted(dest_weight), dtype=np.int64)
    dest_probs = {}
    for o in origins.tolist():
        keep = dests[dests != o]
        row = np.array([dest_weight[int(d)] for d in keep.tolist()], dtype=np.float64)
        dest_probs[int(o)] = (keep, row / row.sum())

    # group sizes: normal mass over bins centered at 1..4, renormalized
    edges = np.array([0.5, 1.5, 2.5, 3.5, 4.5])
    from scipy.stats import norm
    cdf = norm.cdf(edges, loc=size_mean, scale=size_std)
    size_probs = np.diff(cdf)
    size_probs = size_probs / size_probs.sum()

    return ArrivalModel(n_epochs, rates, count_std, origins, origin_probs,
                        dest_probs, size_probs).validate()

"""Value-table training by repeated forward simulation.

Each iteration replays one sampled demand day from a fresh random fleet,
dispatching with the current value table. At every epoch the LP's
vehicle-class duals are marginal values of one extra vehicle of that exact
class; since a vehicle's state at epoch t equals its post-decision state at
t-1, each vehicle's realized dual at t is fed back as an observation of the
post-decision value it committed to at t-1, at every aggregation level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demand import realize, sample_path
from .simulate import Policy, Scenario, make_fleet, step
from .values import ValueTable

TRAINING_LOG_HEADER = "iteration,requests_seen,requests_served,mean_dual,table_entries"


@dataclass
class TrainingConfig:
    iterations: int = 200
    seed: int = 0


@dataclass
class TransitionRecord:
    """Where one vehicle's post-decision state landed at the previous epoch."""

    vehicle_id: int
    keys: tuple  # one PostKey per aggregation level


@dataclass
class IterationLog:
    iteration: int
    requests_seen: int
    requests_served: int
    mean_dual: float
    entries_per_level: list[int]

    @property
    def table_entries(self) -> int:
        return sum(self.entries_per_level)

    def csv_row(self) -> str:
        return (f"{self.iteration},{self.requests_seen},{self.requests_served},"
                f"{self.mean_dual!r},{self.table_entries}")


def extract_marginals(problem, solution) -> dict:
    """Vehicle-class key -> dual value of its flow-conservation row."""
    return {vc.key: float(solution.vehicle_duals[i])
            for i, vc in enumerate(problem.vclasses)}


def propagate(records, duals_by_vehicle, table: ValueTable):
    """Feed realized duals into the previous epoch's post-decision entries.

    Returns (observation count, dual sum) for logging.
    """
    total = 0.0
    n = 0
    for rec in records:
        dual = duals_by_vehicle[rec.vehicle_id]
        table.update(rec.keys, dual)
        total += dual
        n += 1
    return n, total


def _iteration_seeds(master_seed, iteration: int):
    path_seed = np.random.SeedSequence([int(master_seed), int(iteration), 0])
    fleet_seed = np.random.SeedSequence([int(master_seed), int(iteration), 1])
    return path_seed, fleet_seed


def train(scenario: Scenario, cfg: TrainingConfig, table: ValueTable | None = None,
          start_iteration: int = 1, log_fh=None):
    """Run forward-pass training; returns (table, iteration logs).

    Passing an existing table resumes training; iteration numbering continues
    from `start_iteration` and seeds depend only on (master seed, iteration),
    so a 2-iteration run equals two resumed 1-iteration runs.
    """
    if scenario.model is None:
        raise ValueError("scenario has no arrival model to train on")
    if table is None:
        table = ValueTable(scenario.hierarchy, scenario.n_epochs, scenario.aux)
    policy = Policy(kind="adp", rebalancing=bool(scenario.rebalance_points),
                    table=table)
    logs: list[IterationLog] = []
    limits = scenario.limits
    for it in range(start_iteration, start_iteration + cfg.iterations):
        path_seed, fleet_seed = _iteration_seeds(cfg.seed, it)
        path = sample_path(scenario.model, path_seed)
        requests = realize(path, scenario.oracle, limits.wait_max,
                           limits.delay_max, limits.delta)
        vehicles = make_fleet(scenario.fleet_size, scenario.net.n_nodes, fleet_seed)
        seen = 0
        served = 0
        dual_sum = 0.0
        dual_n = 0
        prev_records: list[TransitionRecord] = []
        for t in range(1, scenario.n_epochs + 1):
            res = step(vehicles, requests.get(t, []), t, scenario, policy)
            seen += res.seen
            served += res.served
            if prev_records:
                duals_by_vid = {
                    v.id: float(res.solution.vehicle_duals[res.problem.vclass_of[v.id]])
                    for v in vehicles}
                n_obs, s = propagate(prev_records, duals_by_vid, table)
                dual_n += n_obs
                dual_sum += s
            if t < scenario.n_epochs:
                prev_records = [
                    TransitionRecord(v.id, table.keys_for(
                        t, v.node, [r.destination for r in v.assigned],
                        v.passengers, res.volume_bucket,
                        res.nearby_bucket_of[v.id]))
                    for v in vehicles]
            else:
                prev_records = []
        log = IterationLog(it, seen, served,
                           dual_sum / dual_n if dual_n else 0.0,
                           table.entry_counts())
        logs.append(log)
        if log_fh is not None:
            log_fh.write(log.csv_row() + "\n")
            log_fh.flush()
    return table, logs


def save_training_log(logs, path) -> None:
    with open(path, "w") as fh:
        fh.write(TRAINING_LOG_HEADER + "\n")
        for log in logs:
            fh.write(log.csv_row() + "\n")


def load_training_log(path) -> list[IterationLog]:
    logs = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("iteration"):
                continue
            p = ln.split(",")
            logs.append(IterationLog(int(p[0]), int(p[1]), int(p[2]),
                                     float(p[3]), [int(p[4])]))
    return logs

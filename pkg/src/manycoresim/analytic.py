"""Closed-form overhead and speedup model for the managed many-core.

Real-valued counterpart to the simulator: selection work is charged as
cost_factor * log2(candidates) per decision (zero for a single
candidate), message latency as a per-hop constant times the hop counts
on the two bus levels.  Used for sweeps over the controller count and
as the reference the simulation is validated against.
"""

import math
from dataclasses import dataclass


def selection_delay(candidates: int, cost_factor: float) -> float:
    """Ticks one mapping decision spends scanning a candidate list."""
    if candidates < 1:
        raise ValueError("need at least one candidate")
    return cost_factor * math.log2(candidates)


def mapping_overhead(n: int, m: int, k: int, cost_factor: float) -> float:
    """Total selection ticks to place n tasks on m cores via k managers.

    The fork tree resolves log2(n) levels of manager-to-manager
    decisions (k candidates each); every manager then places its n/k
    local tasks among its m/k cores.
    """
    _check_shape(n, m, k)
    tree = math.log2(n) * selection_delay(k, cost_factor)
    local = (n / k) * selection_delay(m // k, cost_factor)
    return tree + local


def messaging_overhead(m: int, k: int, hop_cost: float) -> float:
    """Bus ticks on the critical path: one global round over the k
    managers plus one local round over the m/k cores of a cluster."""
    _check_shape(m, m, k)
    return hop_cost * k + hop_cost * (m // k)


def total_overhead(n: int, m: int, k: int, cost_factor: float,
                   hop_cost: float) -> float:
    return (mapping_overhead(n, m, k, cost_factor)
            + messaging_overhead(m, k, hop_cost))


def speedup(n: int, m: int, k: int, task_len: int, cost_factor: float,
            hop_cost: float) -> float:
    """Parallel speedup of n equal tasks of task_len ticks on m cores,
    after management overhead: serial time over overheaded parallel
    time, with tasks executing in ceil(n/m) waves."""
    if task_len < 1:
        raise ValueError("task_len must be positive")
    waves = -(-n // m)
    parallel = waves * task_len + total_overhead(n, m, k, cost_factor,
                                                 hop_cost)
    return n * task_len / parallel


@dataclass(slots=True, frozen=True)
class ModelPoint:
    k: int
    cost_factor: float
    hop_cost: float
    mapping: float
    messaging: float
    speedup: float


def cluster_counts(m: int) -> list:
    """Power-of-two manager counts that evenly divide m cores."""
    counts = []
    k = 1
    while k <= m:
        if m % k == 0:
            counts.append(k)
        k *= 2
    return counts


def model_curve(n: int, m: int, task_len: int, cost_factor: float,
                hop_cost: float, ks=None) -> list:
    ks = cluster_counts(m) if ks is None else list(ks)
    points = []
    for k in ks:
        points.append(ModelPoint(
            k=k,
            cost_factor=cost_factor,
            hop_cost=hop_cost,
            mapping=mapping_overhead(n, m, k, cost_factor),
            messaging=messaging_overhead(m, k, hop_cost),
            speedup=speedup(n, m, k, task_len, cost_factor, hop_cost),
        ))
    return points


def best_cluster_count(n: int, m: int, task_len: int, cost_factor: float,
                       hop_cost: float) -> int:
    curve = model_curve(n, m, task_len, cost_factor, hop_cost)
    best = max(curve, key=lambda p: p.speedup)
    return best.k


def _check_shape(n: int, m: int, k: int) -> None:
    if n < 1 or m < 1 or k < 1:
        raise ValueError("n, m, k must be positive")
    if m % k:
        raise ValueError(f"cluster count {k} does not divide {m} cores")
    if k & (k - 1) or n & (n - 1) or m & (m - 1):
        raise ValueError("n, m, k must be powers of two")

"""Monte Carlo estimation of border statistics for size-conditioned Galton-Watson trees.

Trees are grown breadth first, one generation at a time, many attempts side by
side ("lanes") so that numpy does the per-node work. An attempt is abandoned
as soon as it holds more nodes than the target size; it can no longer be
accepted.

Randomness comes from a fixed number of Philox streams keyed by
``SeedSequence([seed, stream_id])``. Each stream has a fixed quota of accepted
trees and a fixed attempt budget, and stream results are merged in stream
order, so a run is reproducible for any worker count.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from multiprocessing import Pool
from typing import Dict, List, Optional, Tuple

import gmpy2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from gw_border.border import exact_conditional_prob, limit_constant
from gw_border.errors import DomainError, InvalidInputError, NotInKStarError
from gw_border.family import OffspringFamily, apex, check_residue, is_defective, psi_value, solve_g
from gw_border.oracle import PlaneTree, rerooted_distances
from gw_border.settings import get_settings
from gw_border.utils import format_exact, round_sig

logger = logging.getLogger(__name__)

LANES_PER_BATCH = 4096


class OffspringTable:
    """Inverse-CDF table of the tilted offspring law P(Y_t = j) = b_j t^j / ψ(t)."""

    def __init__(self, fam: OffspringFamily, t: float):
        self.family = fam
        self.t = float(t)
        self.probs = self._probabilities(fam, self.t)
        cdf = np.cumsum(self.probs)
        self.cdf = cdf / cdf[-1]
        self.cdf[-1] = 1.0

    @staticmethod
    def _probabilities(fam: OffspringFamily, t: float) -> np.ndarray:
        psi_t = psi_value(fam, t)
        if fam.degree is not None:
            return np.array([float(fam.coeff(j)) * t ** j / psi_t for j in range(fam.degree + 1)])
        cfg = get_settings()
        tail = cfg.sampler.offspring_tail
        probs: List[float] = []
        j = 0
        term = float(fam.coeff(0)) / psi_t
        while j < cfg.family.max_terms:
            probs.append(term)
            nxt = float(fam.coeff(j + 1)) * t ** (j + 1) / psi_t
            ratio_after = float(fam.coeff(j + 2) / fam.coeff(j + 1)) * t
            # the remaining mass is bounded by a geometric tail once the ratios drop below one
            if nxt == 0.0 or (ratio_after < 1.0 and nxt / (1.0 - ratio_after) < tail):
                return np.array(probs)
            term = nxt
            j += 1
        raise DomainError(f"Offspring law of {fam.name} at t={t} has too heavy a tail")

    @property
    def max_offspring(self) -> int:
        return len(self.cdf) - 1

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.searchsorted(self.cdf, rng.random(size), side="right").astype(np.int64)


@lru_cache(maxsize=32)
def offspring_table(fam: OffspringFamily, t: float) -> OffspringTable:
    return OffspringTable(fam, t)


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based Philox generator for one (seed, stream) pair."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream_id])))


def sample_offspring(fam: OffspringFamily, t: float, rng: np.random.Generator) -> int:
    return int(offspring_table(fam, float(t)).draw(rng, 1)[0])


def sample_tree(fam: OffspringFamily, t: float, node_cap: int, rng: np.random.Generator) -> Optional[PlaneTree]:
    """One realisation of T_t, or None once it holds more than node_cap nodes."""
    if node_cap < 1:
        raise InvalidInputError(f"node_cap must be positive, got {node_cap}")
    table = offspring_table(fam, float(t))
    outdegrees: List[int] = []
    pending = 1
    while pending:
        if len(outdegrees) + pending > node_cap:
            return None
        generation = table.draw(rng, pending)
        outdegrees.extend(generation.tolist())
        pending = int(generation.sum())
    return PlaneTree.from_outdegrees(outdegrees)


# ----- lane engine -----

@dataclass
class _Batch:
    sizes: np.ndarray
    sequences: Dict[int, np.ndarray] = field(default_factory=dict)


def _grow_batch(table: OffspringTable, rng: np.random.Generator, lanes: int, limit: int,
                keep_size: Optional[int] = None) -> _Batch:
    """
    Grow ``lanes`` independent trees generation by generation.

    Args:
        table: Offspring law
        rng: Random generator
        lanes: Number of attempts in the batch
        limit: Attempts holding more than this many nodes are abandoned
        keep_size: When set, breadth-first outdegree sequences of trees of this size are returned

    Returns:
        _Batch with sizes (limit + 1 marks an abandoned attempt) and the kept sequences
    """
    pending = np.ones(lanes, dtype=np.int64)
    total = np.ones(lanes, dtype=np.int64)
    alive = np.arange(lanes)
    owners: List[np.ndarray] = []
    draws_log: List[np.ndarray] = []
    while alive.size:
        counts = pending[alive]
        owner = np.repeat(alive, counts)
        draws = table.draw(rng, owner.size)
        if keep_size is not None:
            owners.append(owner)
            draws_log.append(draws)
        offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
        children = np.add.reduceat(draws, offsets)
        pending[alive] = children
        total[alive] += children
        alive = alive[(children > 0) & (total[alive] <= limit)]
    sizes = np.where(total > limit, limit + 1, total)
    batch = _Batch(sizes=sizes)
    if keep_size is not None:
        wanted = np.flatnonzero(sizes == keep_size)
        if wanted.size:
            all_owners = np.concatenate(owners)
            all_draws = np.concatenate(draws_log)
            mask = np.isin(all_owners, wanted)
            order = np.argsort(all_owners[mask], kind="stable")
            grouped = all_draws[mask][order].reshape(wanted.size, keep_size)
            batch.sequences = {int(lane): grouped[i] for i, lane in enumerate(wanted)}
    return batch


def sample_sizes(fam: OffspringFamily, t: float, count: int, node_cap: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Total progeny of ``count`` independent trees; node_cap + 1 marks overflow."""
    table = offspring_table(fam, float(t))
    out = []
    remaining = count
    while remaining > 0:
        lanes = min(remaining, LANES_PER_BATCH)
        out.append(_grow_batch(table, rng, lanes, node_cap).sizes)
        remaining -= lanes
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def sample_conditioned_trees(fam: OffspringFamily, n: int, count: int, t: Optional[float] = None,
                             seed: int = 0, max_attempts: Optional[int] = None) -> List[PlaneTree]:
    """Up to ``count`` independent trees of exactly n nodes, by rejection at tilt t (default τ)."""
    check_residue(fam, n)
    t = _resolve_tilt(GWConfig(family=fam, target_n=n, t=t))
    table = offspring_table(fam, t)
    rng = make_rng(seed)
    budget = max_attempts or count * 10_000_000
    trees: List[PlaneTree] = []
    attempts = 0
    while len(trees) < count and attempts < budget:
        lanes = min(LANES_PER_BATCH, budget - attempts)
        batch = _grow_batch(table, rng, lanes, n, keep_size=n)
        for lane in sorted(batch.sequences)[: count - len(trees)]:
            trees.append(PlaneTree.from_outdegrees(batch.sequences[lane].tolist()))
        attempts += lanes
    return trees


def border_profile(outdegrees: np.ndarray) -> Tuple[int, List[int]]:
    """
    Root border distance and re-rooted border distances from a breadth-first outdegree sequence.

    Children carry larger indices than their parent, so one backward pass gives
    the distance from the root to its nearest leaf.
    """
    degrees = [int(d) for d in outdegrees]
    n = len(degrees)
    parent = [-1] * n
    nxt = 1
    for v, d in enumerate(degrees):
        for c in range(nxt, nxt + d):
            parent[c] = v
        nxt += d
    below = [0 if d == 0 else n for d in degrees]
    for v in range(n - 1, 0, -1):
        p = parent[v]
        if below[v] + 1 < below[p]:
            below[p] = below[v] + 1
    return below[0], rerooted_distances(parent)


# ----- conditioned runs -----

class GWConfig(BaseModel):
    """Parameters of a size-conditioned Monte Carlo run."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    family: OffspringFamily
    target_n: int = Field(..., ge=1)
    k: int = Field(0, ge=0)
    samples: int = Field(10000, ge=1)
    t: Optional[float] = Field(None, description="Tilt; defaults to the apex τ")
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    max_attempts: Optional[int] = Field(None, ge=1)
    node_cap: Optional[int] = Field(None, ge=1)


class EstimateReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: str
    target_n: int
    k: int
    t: float
    seed: int
    samples: int
    accepted: int
    attempts: int
    p_hat: float
    ci_half_width: float
    exact: Optional[str] = None
    exact_float: Optional[float] = None
    limit_constant: Optional[float] = None
    mean_protected: Optional[float] = None
    mean_protected_ci: Optional[float] = None
    expected_attempts: Optional[float] = None
    border_histogram: Dict[int, int] = Field(default_factory=dict)
    insufficient: bool = False


@dataclass(frozen=True)
class _StreamTask:
    family: OffspringFamily
    t: float
    n: int
    k: int
    quota: int
    budget: int
    seed: int
    stream_id: int


@dataclass
class _StreamTally:
    accepted: int = 0
    attempts: int = 0
    hits: int = 0
    protected_sum: float = 0.0
    protected_sq_sum: float = 0.0
    histogram: Counter = field(default_factory=Counter)


def _run_stream(task: _StreamTask) -> _StreamTally:
    tally = _StreamTally()
    if task.quota == 0 or task.budget == 0:
        return tally
    table = offspring_table(task.family, task.t)
    rng = make_rng(task.seed, task.stream_id)
    while tally.accepted < task.quota and tally.attempts < task.budget:
        lanes = min(LANES_PER_BATCH, task.budget - tally.attempts)
        batch = _grow_batch(table, rng, lanes, task.n, keep_size=task.n)
        accepted_lanes = sorted(batch.sequences)
        need = task.quota - tally.accepted
        if len(accepted_lanes) >= need:
            accepted_lanes = accepted_lanes[:need]
            tally.attempts += accepted_lanes[-1] + 1
        else:
            tally.attempts += lanes
        for lane in accepted_lanes:
            root_border, borders = border_profile(batch.sequences[lane])
            tally.histogram[root_border] += 1
            if root_border >= task.k:
                tally.hits += 1
            fraction = sum(1 for b in borders if b >= task.k) / task.n
            tally.protected_sum += fraction
            tally.protected_sq_sum += fraction * fraction
        tally.accepted += len(accepted_lanes)
    return tally


def _split(total: int, parts: int) -> List[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _acceptance_probability(fam: OffspringFamily, t: float, n: int) -> Optional[float]:
    """P(#T_t = n) from the exact A_n when n is within the family's truncation."""
    if n <= fam.trunc:
        a_n = solve_g(fam, n).coeff(n)
        if a_n == 0:
            return 0.0
        if t == 0.0:
            return 1.0 if n == 1 else 0.0
        return math.exp(float(gmpy2.log(a_n)) + (n - 1) * math.log(t) - n * math.log(psi_value(fam, t)))
    try:
        k = apex(fam)
    except NotInKStarError:
        return None
    if abs(t - k.tau) > 1e-12 * k.tau:
        return None
    # local limit at the apex: P(#T = n) ~ Q / (σ√(2π)) n^{-3/2}
    return k.q / (k.sigma_tau * math.sqrt(2.0 * math.pi)) * n ** -1.5


def _resolve_tilt(cfg: GWConfig) -> float:
    fam = cfg.family
    if cfg.t is None:
        try:
            return apex(fam).tau
        except NotInKStarError:
            # the size-conditioned law does not depend on t, any point of the disc will do
            fallback = 1.0 if math.isinf(fam.radius) else fam.radius / 2.0
            logger.info("[Sampler] %s has no apex; sampling at t=%g", fam.name, fallback)
            return fallback
    t = float(cfg.t)
    if not (0.0 < t < fam.radius):
        raise DomainError(f"Tilt t={t} outside (0, {fam.radius}) for family {fam.name}")
    return t


def _run(cfg: GWConfig) -> EstimateReport:
    fam = cfg.family
    check_residue(fam, cfg.target_n)
    settings = get_settings().sampler
    t = _resolve_tilt(cfg)
    if is_defective(fam, t):
        if cfg.node_cap is None:
            raise InvalidInputError(f"t={t:.6g} is beyond the apex of {fam.name}; a supercritical tilt needs node_cap")
        logger.info("[Sampler] t=%.6g is supercritical for %s; conditioning on size %d", t, fam.name, cfg.target_n)
    # attempts are abandoned once they pass target_n, so node_cap only has to admit it
    node_cap = cfg.node_cap or settings.node_cap_factor * cfg.target_n
    if node_cap < cfg.target_n:
        raise InvalidInputError(f"node_cap={node_cap} is below the target size {cfg.target_n}")

    p_accept = _acceptance_probability(fam, t, cfg.target_n)
    expected = (1.0 / p_accept) if p_accept else None
    if cfg.max_attempts is not None:
        budget = cfg.max_attempts
    elif expected is not None:
        budget = int(math.ceil(settings.attempt_factor * cfg.samples * expected)) + 10_000
    else:
        budget = settings.attempt_factor * cfg.samples * max(1000, int(cfg.target_n ** 1.5) * 10)

    streams = settings.streams
    tasks = [
        _StreamTask(family=fam, t=t, n=cfg.target_n, k=cfg.k, quota=quota, budget=stream_budget,
                    seed=cfg.seed, stream_id=i)
        for i, (quota, stream_budget) in enumerate(zip(_split(cfg.samples, streams), _split(budget, streams)))
    ]
    logger.info("[Sampler] %s n=%d k=%d t=%.6g: %d samples over %d streams, budget %d attempts, node_cap %d",
                fam.name, cfg.target_n, cfg.k, t, cfg.samples, streams, budget, node_cap)
    if cfg.threads > 1:
        with Pool(processes=cfg.threads) as pool:
            tallies = pool.map(_run_stream, tasks)
    else:
        tallies = [_run_stream(task) for task in tasks]

    accepted = sum(tl.accepted for tl in tallies)
    attempts = sum(tl.attempts for tl in tallies)
    hits = sum(tl.hits for tl in tallies)
    protected_sum = 0.0
    protected_sq_sum = 0.0
    histogram: Counter = Counter()
    for tl in tallies:
        protected_sum += tl.protected_sum
        protected_sq_sum += tl.protected_sq_sum
        histogram.update(tl.histogram)

    z = settings.ci_z
    p_hat = hits / accepted if accepted else 0.0
    ci = z * math.sqrt(p_hat * (1.0 - p_hat) / accepted) if accepted else 0.0
    mean_protected = mean_ci = None
    if accepted:
        mean_protected = protected_sum / accepted
        variance = max(0.0, protected_sq_sum / accepted - mean_protected ** 2)
        mean_ci = z * math.sqrt(variance / accepted)

    exact = exact_float = None
    if cfg.target_n <= fam.trunc:
        value = exact_conditional_prob(fam, cfg.k, cfg.target_n)
        exact, exact_float = format_exact(value), round_sig(float(value))
    try:
        c_k = round_sig(limit_constant(fam, cfg.k).c_k)
    except InvalidInputError:
        c_k = None

    insufficient = accepted < cfg.samples
    if insufficient:
        logger.warning("[Sampler] Only %d of %d trees accepted within %d attempts", accepted, cfg.samples, attempts)
    report = EstimateReport(
        family=fam.name, target_n=cfg.target_n, k=cfg.k, t=round_sig(t), seed=cfg.seed, samples=cfg.samples,
        accepted=accepted, attempts=attempts, p_hat=round_sig(p_hat), ci_half_width=round_sig(ci),
        exact=exact, exact_float=exact_float, limit_constant=c_k,
        mean_protected=round_sig(mean_protected) if mean_protected is not None else None,
        mean_protected_ci=round_sig(mean_ci) if mean_ci is not None else None,
        expected_attempts=round_sig(expected) if expected is not None else None,
        border_histogram=dict(sorted(histogram.items())), insufficient=insufficient,
    )
    return report


def conditioned_estimate(cfg: GWConfig) -> EstimateReport:
    """
    Estimate P(∂(T_n) ≥ k) by rejection on the exact size.

    Args:
        cfg: Run parameters

    Returns:
        EstimateReport with the estimate, a 95% half-width, the exact value
        (when n is within the family's truncation) and the mean protected fraction
    """
    return _run(cfg)


def mean_protected(cfg: GWConfig) -> EstimateReport:
    """Estimate E[#{v : ∂_v ≥ k}] / n over accepted size-n trees."""
    return _run(cfg)

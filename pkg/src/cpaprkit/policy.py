"""Parallel execution policies and their mapping onto kernel schedules.

A policy is a (league_size, team_size, vector_size) triple in the style of
hierarchical-parallelism runtimes: leagues of teams of vector lanes. The
product team_size * vector_size is capped at MAX_TEAM_VECTOR, mirroring the
thread-block limit the triple is modeled after. On this CPU implementation
the triple is interpreted logically: league_size * team_size logical workers
take tiles of vector_size consecutive items round-robin, and the logical
workers are multiplexed onto the available OS threads.
"""

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

MAX_TEAM_VECTOR = 1024


def is_valid_policy(league_size, team_size, vector_size):
    """True when all sizes are >= 1 and team * vector <= MAX_TEAM_VECTOR."""
    return (
        league_size >= 1
        and team_size >= 1
        and vector_size >= 1
        and team_size * vector_size <= MAX_TEAM_VECTOR
    )


@dataclass(frozen=True, order=True)
class PolicyParams:
    """Validated execution-policy triple."""

    league_size: int
    team_size: int
    vector_size: int

    def __post_init__(self):
        if not is_valid_policy(self.league_size, self.team_size, self.vector_size):
            raise ValueError(
                f"invalid policy ({self.league_size}, {self.team_size}, "
                f"{self.vector_size}): sizes must be >= 1 and "
                f"team_size * vector_size <= {MAX_TEAM_VECTOR}"
            )

    @property
    def logical_workers(self):
        return self.league_size * self.team_size

    def label(self):
        return f"{self.league_size}x{self.team_size}x{self.vector_size}"


def default_policy():
    """One league of one team, 32-wide tiles: a safe sequential-ish default."""
    return PolicyParams(league_size=1, team_size=1, vector_size=32)


def parse_policy(text):
    """Parse 'L,T,V' into PolicyParams."""
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"policy must be 'league,team,vector', got {text!r}")
    try:
        league, team, vector = (int(p) for p in parts)
    except ValueError as exc:
        raise ValueError(f"policy entries must be integers, got {text!r}") from exc
    return PolicyParams(league, team, vector)


def auto_vector_size(team_size):
    """Vector width chosen automatically for a team size.

    Picks the widest power-of-two tile up to 32 that keeps the policy under
    the team * vector cap, so auto-generated spaces never produce invalid
    triples.
    """
    width = 1
    while width * 2 <= 32 and team_size * width * 2 <= MAX_TEAM_VECTOR:
        width *= 2
    return width


@dataclass
class PolicySpace:
    """Candidate axes for a grid search.

    When ``auto_vector`` is set the ``vectors`` axis is ignored and each
    (league, team) pair gets the single automatic width from
    :func:`auto_vector_size`.
    """

    leagues: list = field(default_factory=lambda: [2**k for k in range(0, 14)])
    teams: list = field(default_factory=lambda: [2**k for k in range(0, 11)])
    vectors: list = field(default_factory=lambda: [2**k for k in range(0, 6)])
    auto_vector: bool = False

    def __post_init__(self):
        if not self.leagues or not self.teams:
            raise ValueError("policy space needs at least one league and team size")
        if not self.auto_vector and not self.vectors:
            raise ValueError("policy space needs vector sizes unless auto_vector")
        for name, axis in (("league", self.leagues), ("team", self.teams)):
            if any(int(v) < 1 for v in axis):
                raise ValueError(f"{name} sizes must be >= 1")
        if not self.auto_vector and any(int(v) < 1 for v in self.vectors):
            raise ValueError("vector sizes must be >= 1")

    def triples(self):
        """All candidate (league, team, vector) triples, lexicographic."""
        out = []
        for league in self.leagues:
            for team in self.teams:
                if self.auto_vector:
                    out.append((int(league), int(team), auto_vector_size(int(team))))
                else:
                    for vector in self.vectors:
                        out.append((int(league), int(team), int(vector)))
        return out


def enumerate_policies(space):
    """Valid policies of a space in lexicographic (league, team, vector) order.

    Triples violating the team * vector cap are silently dropped here;
    grid_search reports them as skipped instead. Duplicate axis values
    yield one policy, not two.
    """
    seen = set()
    out = []
    for t in space.triples():
        if t in seen or not is_valid_policy(*t):
            continue
        seen.add(t)
        out.append(PolicyParams(*t))
    return out


@dataclass(frozen=True)
class KernelSchedule:
    """Concrete tiling derived from a policy for one kernel launch.

    ``kind`` is "atomic" (tiles over raw nonzero order) or "chunked"
    (chunks over the permuted order). ``width`` items go to each tile;
    tile t belongs to logical worker t % workers; ``concurrency`` logical
    workers run truly concurrently (the rest are multiplexed).
    """

    kind: str
    n_items: int
    width: int
    workers: int
    concurrency: int

    def __post_init__(self):
        if self.kind not in ("atomic", "chunked"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.n_items < 0 or self.width < 1 or self.workers < 1:
            raise ValueError("schedule sizes out of range")
        if not 1 <= self.concurrency <= self.workers:
            raise ValueError("concurrency must be in [1, workers]")

    @property
    def n_tiles(self):
        return -(-self.n_items // self.width) if self.n_items else 0

    def tile_bounds(self, tile):
        start = tile * self.width
        return start, min(start + self.width, self.n_items)

    def worker_of(self, tile):
        return tile % self.workers

    def coverage_counts(self):
        """How many tiles claim each item; all-ones means a partition."""
        counts = np.zeros(self.n_items, dtype=np.int64)
        for t in range(self.n_tiles):
            start, stop = self.tile_bounds(t)
            counts[start:stop] += 1
        return counts


def detect_worker_budget():
    """Physical concurrency available to kernels (>= 1)."""
    return max(1, os.cpu_count() or 1)


def map_policy_to_kernel(policy, strategy, n_items, worker_budget=None):
    """Translate a policy triple into a KernelSchedule for a strategy.

    Atomic scatter tiles the raw nonzero order with vector_size-wide tiles.
    The chunked strategy uses the strategy's chunk_size when set, otherwise
    the policy's vector_size, as the chunk width over the permuted order.
    Logical workers = league * team; at most ``worker_budget`` of them run
    concurrently.
    """
    budget = worker_budget if worker_budget is not None else detect_worker_budget()
    budget = max(1, int(budget))
    if strategy.variant == "chunked":
        width = strategy.chunk_size if strategy.chunk_size else policy.vector_size
        kind = "chunked"
    else:
        width = policy.vector_size
        kind = "atomic"
    workers = policy.logical_workers
    return KernelSchedule(
        kind=kind,
        n_items=int(n_items),
        width=int(width),
        workers=workers,
        concurrency=min(workers, budget),
    )


@dataclass
class GridEntry:
    """One measurement row of a grid search."""

    league_size: int
    team_size: int
    vector_size: int
    valid: bool
    target: str
    mode: int
    mean_ms: float
    speedup: float


@dataclass
class GridResult:
    """All measurement rows plus the skipped (invalid) triples."""

    entries: list
    skipped: list
    baseline: PolicyParams
    reps: int

    def to_csv(self, stream):
        stream.write("league,team,vector,valid,target,mode,mean_ms,speedup\n")
        for e in self.entries:
            stream.write(
                f"{e.league_size},{e.team_size},{e.vector_size},"
                f"{int(e.valid)},{e.target},{e.mode},"
                f"{e.mean_ms:.6f},{e.speedup:.6f}\n"
            )
        for league, team, vector in self.skipped:
            stream.write(f"{league},{team},{vector},0,skipped,-1,nan,nan\n")

    def best(self, target="phi", mode=None):
        rows = [
            e
            for e in self.entries
            if e.valid and e.target == target and (mode is None or e.mode == mode)
        ]
        if not rows:
            raise ValueError("no valid grid entries for the requested target")
        return max(rows, key=lambda e: e.speedup)


def grid_search(
    tensor,
    options,
    space,
    baseline,
    reps=3,
    targets=("phi",),
    worker_budget=None,
):
    """Time the Phi kernel (and optionally a short full solve) per policy.

    Every valid policy in ``space`` is measured ``reps`` times per mode for
    the "phi" target (mode -1 aggregates a whole short solve for the "full"
    target) and compared against ``baseline``, which must itself be valid.
    The baseline row reuses its own measurement, so its speedup is exactly
    1.0 by construction. Invalid triples are never run; they are returned
    in ``skipped``.
    """
    from .kernels import compute_phi
    from .model import compute_pi, init_model

    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not isinstance(baseline, PolicyParams):
        baseline = PolicyParams(*baseline)
    for target in targets:
        if target not in ("phi", "full"):
            raise ValueError(f"unknown grid target {target!r}")

    candidates = []
    skipped = []
    seen = set()
    for triple in space.triples():
        if triple in seen:
            continue
        seen.add(triple)
        if is_valid_policy(*triple):
            candidates.append(PolicyParams(*triple))
        else:
            skipped.append(triple)
    if baseline not in candidates:
        candidates.insert(0, baseline)

    model = init_model(tensor.dims, options.rank, options.seed)
    model.normalize_all()
    pis = [compute_pi(model, tensor, n) for n in range(tensor.order)]
    bs = [model.factors[n] * model.weights[np.newaxis, :] for n in range(tensor.order)]

    def time_phi(policy, mode):
        best = math.inf
        acc = 0.0
        compute_phi(
            tensor, bs[mode], pis[mode], mode, options.epsilon,
            options.strategy, policy, worker_budget=worker_budget,
        )
        for _ in range(reps):
            t0 = time.perf_counter()
            compute_phi(
                tensor, bs[mode], pis[mode], mode, options.epsilon,
                options.strategy, policy, worker_budget=worker_budget,
            )
            dt = time.perf_counter() - t0
            acc += dt
            best = min(best, dt)
        return 1e3 * acc / reps

    def time_full(policy):
        from .solver import cp_apr_mu

        opts = options.replace(policy=policy, max_outer=min(options.max_outer, 2))
        acc = 0.0
        for _ in range(reps):
            t0 = time.perf_counter()
            cp_apr_mu(tensor, opts)
            acc += time.perf_counter() - t0
        return 1e3 * acc / reps

    measurements = {}
    for policy in candidates:
        for target in targets:
            if target == "phi":
                for mode in range(tensor.order):
                    measurements[(policy, "phi", mode)] = time_phi(policy, mode)
            else:
                measurements[(policy, "full", -1)] = time_full(policy)

    entries = []
    for policy in candidates:
        for target in targets:
            modes = range(tensor.order) if target == "phi" else (-1,)
            for mode in modes:
                mean_ms = measurements[(policy, target, mode)]
                base_ms = measurements[(baseline, target, mode)]
                entries.append(
                    GridEntry(
                        league_size=policy.league_size,
                        team_size=policy.team_size,
                        vector_size=policy.vector_size,
                        valid=True,
                        target=target,
                        mode=mode,
                        mean_ms=mean_ms,
                        speedup=base_ms / mean_ms,
                    )
                )
    return GridResult(entries=entries, skipped=skipped, baseline=baseline, reps=reps)


def format_heatmaps(result, target="phi", mode=0):
    """Render a grid result as gnuplot-ready matrices, one block per league.

    Each block is a matrix of speedups with team sizes down the rows and
    vector sizes across the columns; invalid or unmeasured cells are NaN.
    Feed a block to gnuplot's ``plot '-' matrix with image``.
    """
    rows = [e for e in result.entries if e.target == target and e.mode == mode]
    cells = {
        (e.league_size, e.team_size, e.vector_size): e.speedup for e in rows
    }
    leagues = sorted({e.league_size for e in rows})
    teams = sorted({e.team_size for e in rows})
    vectors = sorted({e.vector_size for e in rows})
    blocks = []
    for league in leagues:
        lines = [f"# league {league} target {target} mode {mode}"]
        lines.append("# rows: team " + " ".join(str(t) for t in teams))
        lines.append("# cols: vector " + " ".join(str(v) for v in vectors))
        for team in teams:
            vals = []
            for vector in vectors:
                s = cells.get((league, team, vector))
                vals.append(f"{s:.4f}" if s is not None else "NaN")
            lines.append(" ".join(vals))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"

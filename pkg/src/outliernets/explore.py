"""Constrained architecture search over template grids.

The objective is a NetScore-style utility balancing detection quality
against compute and size:

    u(auc, params, macs) = 20 * log10( (100*auc)^kappa /
                           ((params/1e6)^beta * (macs/1e6)^gamma) )

maximized subject to a hard parameter budget (strict: params < max_params)
and an AUC floor (inclusive: auc >= floor). Candidates whose parameter
count already violates the budget are rejected statically, before any
training. Feasible candidates are trained with a short proxy budget and
scored on held-out validation clips that are disjoint from any final test
set.

Two strategies:

- ``random``: uniform draws without replacement from the grid; with ``n``
  at least the grid size this is exhaustive enumeration.
- ``evolutionary``: tournament selection over a small population with
  single-coordinate mutations on the grid, plus elitism.

Both are fully deterministic given the seed: each grid point trains with a
seed derived from (search seed, point), so re-evaluating a point always
reproduces the same candidate.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .anomaly import TrainConfig, compute_auc, evaluate, train
from .arch import ArchSpec, count_macs, count_params, make_template
from .audio_io import AudioClip
from .errors import SearchExhaustedError, TrainingDivergedError
from .features import FeatureConfig

STRATEGIES = ("random", "evolutionary")

# Proxy training budget used on every candidate during search.
PROXY_TRAIN = TrainConfig(epochs_max=30, patience=None)


@dataclass(frozen=True)
class PerfFnConfig:
    """Exponents of the utility: quality^kappa over params^beta * macs^gamma."""

    kappa: float = 2.0
    beta: float = 0.5
    gamma: float = 0.5


def perf_fn(auc: float, params: int, macs: int, cfg: PerfFnConfig = PerfFnConfig()) -> float:
    """NetScore-style utility in decibels; higher is better.

    Quality enters as a percentage (100 * auc); params and MACs in millions.

    Raises:
        ValueError: auc outside (0, 1] or non-positive params/macs.
    """
    if not 0.0 < auc <= 1.0:
        raise ValueError(f"auc must be in (0, 1], got {auc}")
    if params <= 0 or macs <= 0:
        raise ValueError(f"params and macs must be positive, got {params}, {macs}")
    numerator = (100.0 * auc) ** cfg.kappa
    denominator = (params / 1e6) ** cfg.beta * (macs / 1e6) ** cfg.gamma
    return 20.0 * math.log10(numerator / denominator)


@dataclass(frozen=True)
class Constraints:
    """Hard feasibility limits for the search.

    ``max_params`` is strict (a candidate with exactly max_params is
    infeasible). The AUC floor is ``auc_floor`` when given explicitly,
    otherwise ``baseline_auc - margin``; the floor comparison is inclusive.
    """

    max_params: int = 100_000
    baseline_auc: float | None = None
    margin: float = 0.10
    auc_floor: float | None = None

    def __post_init__(self):
        if self.max_params < 1:
            raise ValueError(f"max_params must be positive, got {self.max_params}")
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")
        if self.auc_floor is None and self.baseline_auc is None:
            raise ValueError("give either auc_floor or baseline_auc")
        floor = self.resolved_floor()
        if not 0.0 <= floor < 1.0:
            raise ValueError(f"resolved AUC floor {floor} outside [0, 1)")

    def resolved_floor(self) -> float:
        if self.auc_floor is not None:
            return self.auc_floor
        return max(0.0, self.baseline_auc - self.margin)


@dataclass(frozen=True)
class SearchPoint:
    """Coordinates of one grid point."""

    family: str
    width_multiplier: float
    depth: int
    bottleneck_dim: int | None = None

    def build(self, input_shape=(1, 32, 128)) -> ArchSpec:
        return make_template(
            self.family, self.width_multiplier, self.depth,
            bottleneck_dim=self.bottleneck_dim, input_shape=input_shape,
        )


@dataclass(frozen=True)
class SearchSpace:
    """Cartesian grid of template hyperparameters for one family."""

    family: str
    width_multipliers: tuple[float, ...] = (0.5, 1.0, 2.0)
    depth_choices: tuple[int, ...] = (2, 3)
    bottleneck_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.width_multipliers or not self.depth_choices:
            raise ValueError("width_multipliers and depth_choices must be non-empty")
        if self.family == "slider_dense_bottleneck" and not self.bottleneck_dims:
            raise ValueError("slider_dense_bottleneck space needs bottleneck_dims")
        if self.family == "fan_conv" and self.bottleneck_dims:
            raise ValueError("fan_conv space takes no bottleneck_dims")

    def points(self) -> list[SearchPoint]:
        """All grid points in deterministic (mult, depth, bottleneck) order."""
        bns: tuple[int | None, ...] = self.bottleneck_dims or (None,)
        return [
            SearchPoint(self.family, m, d, b)
            for m in self.width_multipliers
            for d in self.depth_choices
            for b in bns
        ]


@dataclass(frozen=True)
class Candidate:
    """One evaluated grid point.

    ``status`` is "ok", "skipped_params" (rejected before training), or
    "diverged". ``u_score`` is -inf unless the candidate trained and scored.
    ``train_epochs`` counts epochs actually run (0 for static rejects).
    """

    point: SearchPoint
    arch_name: str
    params: int
    macs: int
    auc: float | None
    u_score: float
    feasible: bool
    status: str
    seed: int
    train_epochs: int


def indicator(params: int, auc: float | None, constraints: Constraints) -> bool:
    """Feasibility: params strictly under budget AND auc at or above floor."""
    if params >= constraints.max_params:
        return False
    if auc is None:
        return False
    return auc >= constraints.resolved_floor()


@dataclass(frozen=True)
class SearchData:
    """Data a search trains and validates on.

    ``val_set`` must be disjoint from any final test set; its labels drive
    the candidate AUCs that feasibility and the utility are computed from.
    """

    train_crops: tuple
    val_set: tuple[tuple[AudioClip, str], ...]
    feature_cfg: FeatureConfig = FeatureConfig()


def _point_seed(seed: int, point: SearchPoint) -> int:
    """Stable per-point training seed: same (seed, point) -> same value."""
    (mult_bits,) = struct.unpack("<Q", struct.pack("<d", point.width_multiplier))
    # Stable digest of the family name (str hash() is salted per process).
    fam = sum(ord(c) * (31**i) for i, c in enumerate(point.family)) & 0xFFFFFFFF
    entropy = (seed, fam, mult_bits, point.depth,
               0 if point.bottleneck_dim is None else point.bottleneck_dim + 1)
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint32)[0])


def evaluate_candidate(
    point: SearchPoint,
    data: SearchData,
    constraints: Constraints,
    perf_cfg: PerfFnConfig = PerfFnConfig(),
    budget: TrainConfig = PROXY_TRAIN,
    seed: int = 0,
) -> Candidate:
    """Train and score one grid point (or reject it statically).

    A point whose parameter count breaches the budget returns immediately
    with status "skipped_params" and zero training epochs. Otherwise the
    point trains under ``budget`` with a seed derived from (seed, point)
    and is scored by validation AUC; training divergence yields an
    infeasible "diverged" candidate rather than an exception.
    """
    spec = point.build()
    params = count_params(spec)
    macs = count_macs(spec)
    point_seed = _point_seed(seed, point)
    if params >= constraints.max_params:
        return Candidate(
            point=point, arch_name=spec.name, params=params, macs=macs,
            auc=None, u_score=float("-inf"), feasible=False,
            status="skipped_params", seed=point_seed, train_epochs=0,
        )
    cfg = replace(budget, seed=point_seed)
    try:
        result = train(spec, data.train_crops, cfg)
    except TrainingDivergedError:
        return Candidate(
            point=point, arch_name=spec.name, params=params, macs=macs,
            auc=None, u_score=float("-inf"), feasible=False,
            status="diverged", seed=point_seed, train_epochs=0,
        )
    report = evaluate(result.bundle, list(data.val_set), data.feature_cfg)
    auc = report.auc
    u_score = perf_fn(auc, params, macs, perf_cfg) if auc > 0 else float("-inf")
    return Candidate(
        point=point, arch_name=spec.name, params=params, macs=macs,
        auc=auc, u_score=u_score,
        feasible=indicator(params, auc, constraints),
        status="ok", seed=point_seed, train_epochs=len(result.train_losses),
    )


@dataclass(frozen=True)
class GenerationRecord:
    """Candidates evaluated in one generation plus the running best utility."""

    index: int
    candidates: tuple[Candidate, ...]
    best_feasible_u: float  # -inf until a feasible candidate exists


@dataclass(frozen=True)
class SearchLog:
    """Full record of a search run."""

    strategy: str
    seed: int
    constraints: Constraints
    generations: tuple[GenerationRecord, ...]

    def all_candidates(self) -> list[Candidate]:
        out = []
        for gen in self.generations:
            out.extend(gen.candidates)
        return out


def _better(a: Candidate, b: Candidate | None) -> bool:
    """Candidate ordering for selection: feasibility first, then utility."""
    if b is None:
        return True
    if a.feasible != b.feasible:
        return a.feasible
    if a.u_score != b.u_score:
        return a.u_score > b.u_score
    return False  # ties keep the earlier candidate


def search(
    space: SearchSpace,
    constraints: Constraints,
    data: SearchData,
    perf_cfg: PerfFnConfig = PerfFnConfig(),
    budget: TrainConfig = PROXY_TRAIN,
    strategy: str = "evolutionary",
    n: int | None = None,
    population: int = 8,
    generations: int = 10,
    seed: int = 0,
    workers: int = 1,
) -> tuple[Candidate, SearchLog]:
    """Maximize the utility over the grid subject to the constraints.

    Already-evaluated points are cached by grid coordinates, so revisits
    (common under mutation) are free and reproducible. Returns the feasible
    candidate with the highest utility; ties go to the earliest-evaluated.

    Args:
        strategy: "random" (n uniform draws without replacement, default
            min(16, grid size); n >= grid size enumerates everything) or
            "evolutionary" (population x generations with tournament
            selection, single-coordinate grid mutation, and elitism).
        workers: thread-pool width for candidate evaluation within a batch.

    Raises:
        SearchExhaustedError: no feasible candidate; carries the best
            infeasible one for diagnostics.
        ValueError: unknown strategy.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    points = space.points()
    rng = np.random.default_rng(np.random.SeedSequence((seed, len(points))))
    cache: dict[SearchPoint, Candidate] = {}
    eval_order: dict[SearchPoint, int] = {}

    def _evaluate_batch(batch: list[SearchPoint]) -> list[Candidate]:
        fresh = []
        seen = set()
        for p in batch:
            if p not in cache and p not in seen:
                fresh.append(p)
                seen.add(p)

        def _run(p: SearchPoint) -> Candidate:
            return evaluate_candidate(p, data, constraints, perf_cfg, budget, seed)

        if workers > 1 and len(fresh) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run, fresh))
        else:
            results = [_run(p) for p in fresh]
        for p, c in zip(fresh, results):
            cache[p] = c
            eval_order[p] = len(eval_order)
        return [cache[p] for p in batch]

    def _best() -> Candidate | None:
        best = None
        for p, c in sorted(cache.items(), key=lambda kv: eval_order[kv[0]]):
            if c.feasible and _better(c, best):
                best = c
        return best

    records: list[GenerationRecord] = []

    if strategy == "random":
        if n is None:
            n = min(16, len(points))
        n = min(n, len(points))
        chosen_idx = rng.choice(len(points), size=n, replace=False)
        batch = [points[i] for i in chosen_idx]
        candidates = _evaluate_batch(batch)
        best = _best()
        records.append(
            GenerationRecord(
                index=0, candidates=tuple(candidates),
                best_feasible_u=best.u_score if best else float("-inf"),
            )
        )
    else:
        pop_size = min(population, len(points))
        init_idx = rng.choice(len(points), size=pop_size, replace=False)
        pop = [points[i] for i in init_idx]
        for gen in range(generations):
            candidates = _evaluate_batch(pop)
            best = _best()
            records.append(
                GenerationRecord(
                    index=gen, candidates=tuple(candidates),
                    best_feasible_u=best.u_score if best else float("-inf"),
                )
            )
            if gen == generations - 1:
                break
            next_pop: list[SearchPoint] = []
            if best is not None:
                next_pop.append(best.point)  # elitism
            while len(next_pop) < pop_size:
                i, j = rng.integers(0, len(candidates), size=2)
                winner = candidates[i] if _better(candidates[i], candidates[j]) \
                    else candidates[j]
                next_pop.append(_mutate(winner.point, space, rng))
            pop = next_pop

    best = _best()
    if best is None:
        infeasible = sorted(
            cache.values(),
            key=lambda c: (c.u_score, -c.params),
            reverse=True,
        )
        raise SearchExhaustedError(
            f"no feasible candidate among {len(cache)} evaluated "
            f"(budget {constraints.max_params} params, "
            f"AUC floor {constraints.resolved_floor():.3f})",
            best_infeasible=infeasible[0] if infeasible else None,
        )
    log = SearchLog(
        strategy=strategy, seed=seed, constraints=constraints,
        generations=tuple(records),
    )
    return best, log


def _mutate(point: SearchPoint, space: SearchSpace, rng: np.random.Generator) -> SearchPoint:
    """Move one coordinate one grid step (clamped); identity if impossible."""
    axes: list[tuple[str, tuple]] = [
        ("width_multiplier", space.width_multipliers),
        ("depth", space.depth_choices),
    ]
    if space.bottleneck_dims:
        axes.append(("bottleneck_dim", space.bottleneck_dims))
    mutable = [a for a in axes if len(a[1]) > 1]
    if not mutable:
        return point
    name, grid = mutable[rng.integers(0, len(mutable))]
    current = grid.index(getattr(point, name))
    step = 1 if rng.integers(0, 2) else -1
    new_idx = min(len(grid) - 1, max(0, current + step))
    return replace(point, **{name: grid[new_idx]})


# ---------------------------------------------------------------------------
# Log serialization
# ---------------------------------------------------------------------------


def _point_obj(point: SearchPoint) -> dict:
    return {
        "family": point.family,
        "width_multiplier": point.width_multiplier,
        "depth": point.depth,
        "bottleneck_dim": point.bottleneck_dim,
    }


def write_search_log(log: SearchLog, path) -> None:
    """Write a search log as JSON lines (one header, then one line per candidate).

    The serialization is deterministic: reruns with the same seed and data
    produce byte-identical files.
    """
    path = Path(path)
    lines = [
        json.dumps(
            {
                "record": "header",
                "strategy": log.strategy,
                "seed": log.seed,
                "max_params": log.constraints.max_params,
                "auc_floor": log.constraints.resolved_floor(),
            },
            sort_keys=True,
        )
    ]
    for gen in log.generations:
        for c in gen.candidates:
            lines.append(
                json.dumps(
                    {
                        "record": "candidate",
                        "generation": gen.index,
                        "point": _point_obj(c.point),
                        "arch": c.arch_name,
                        "params": c.params,
                        "macs": c.macs,
                        "auc": c.auc,
                        "u_score": None if math.isinf(c.u_score) else c.u_score,
                        "feasible": c.feasible,
                        "status": c.status,
                        "train_epochs": c.train_epochs,
                        "best_feasible_u": None
                        if math.isinf(gen.best_feasible_u)
                        else gen.best_feasible_u,
                    },
                    sort_keys=True,
                )
            )
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    tmp.replace(path)

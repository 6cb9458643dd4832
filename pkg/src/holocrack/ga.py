"""Two-stage genetic crack search.

The long-range stage explores with selection, arithmetic crossover, random
translations and a sawtooth population size. Once enough cracks fall below
the switch fitness, the short-range stage refines them by repeated mutation,
warm-starting every duplicate from its parent's trained networks.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import EvaluationFailed, NotConverged, PopulationCollapse
from .inverse import Crack, SearchSpace, evaluate_crack, random_crack
from .sensors import SensorArray

LONG_RANGE = "LongRange"
SHORT_RANGE = "ShortRange"
_STAGE_CODE = {LONG_RANGE: 1, SHORT_RANGE: 2}


@dataclass(frozen=True)
class GaConfig:
    N_I: int = 9
    T: int = 5
    N_Delta: int = 1
    offspring_ratio: float = 1.0
    P_M: float = 0.5
    delta_M: float = 0.1
    F_t: float = 1e-4
    F_s: float = 0.007
    N_S: int = 3
    N_D: int = 2
    max_generations: int = 200
    epochs_long: int = 200
    epochs_short_cap: int = 200
    seed: int = 0
    per_tip_mutation: bool = False
    constraint_retries: int = 20
    tip_tolerance: float = 0.05  # geometric mode, as a fraction of the target half length
    max_wall_time: float = math.inf  # seconds per run, checked between generations

    def __post_init__(self):
        if self.N_I < 3:
            raise ValueError("N_I must be at least 3")
        if not 0.0 <= self.P_M <= 1.0:
            raise ValueError("P_M must lie in [0, 1]")
        if not self.F_s > self.F_t > 0:
            raise ValueError("need F_s > F_t > 0")
        if self.N_Delta < 0:
            raise ValueError("N_Delta must be nonnegative")
        if self.delta_M <= 0:
            raise ValueError("delta_M must be positive")
        if self.T < 1 or self.N_S < 1 or self.N_D < 0 or self.max_generations < 0:
            raise ValueError("T, N_S must be positive; N_D, max_generations nonnegative")
        if self.offspring_ratio <= 0:
            raise ValueError("offspring_ratio must be positive")
        if not self.max_wall_time > 0:
            raise ValueError("max_wall_time must be positive")

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, float) and math.isinf(v):
                out[k] = "inf"
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GaConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown GA config keys: {sorted(unknown)}")
        return cls(**{k: (float(v) if v == "inf" else v) for k, v in data.items()})


@dataclass
class Individual:
    crack: Crack
    fitness: Optional[float] = None
    tl_state: Any = None
    final_loss: float = float("nan")
    epochs_run: int = 0
    clamped: bool = False

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None

    def to_dict(self) -> dict:
        fit = self.fitness
        return {**self.crack.to_dict(),
                "fitness": None if fit is None else (fit if math.isfinite(fit) else "inf")}


@dataclass
class GenerationLog:
    generation: int
    population_size: int
    best_fitness: float
    best_crack: Crack
    evaluations: int
    wall_time: float
    stage: str
    clamped: int = 0

    def row(self) -> dict:
        b = self.best_crack
        return {"generation": self.generation, "stage": self.stage, "population_size": self.population_size,
                "best_fitness": self.best_fitness, "best_x_plus": b.tip_plus.real, "best_y_plus": b.tip_plus.imag,
                "best_x_minus": b.tip_minus.real, "best_y_minus": b.tip_minus.imag,
                "evaluations": self.evaluations, "wall_time": self.wall_time, "clamped": self.clamped}


LOG_COLUMNS = list(GenerationLog(0, 0, 0.0, Crack(1, 0), 0, 0.0, LONG_RANGE).row())


@dataclass
class Termination:
    """Stopping rule: fitness below ``F_t``, or (benchmark mode) a crack near a known target."""

    mode: str = "fitness"
    target: Optional[Crack] = None

    def __post_init__(self):
        if self.mode not in ("fitness", "geometric"):
            raise ValueError(f"unknown termination mode {self.mode!r}")
        if self.mode == "geometric" and self.target is None:
            raise ValueError("geometric termination needs a target crack")

    def hit(self, population: list, config: GaConfig) -> Optional[Individual]:
        """The fittest population member meeting the criterion, if any."""
        for ind in sorted_population(population):
            if self.mode == "fitness":
                if ind.fitness < config.F_t:
                    return ind
            elif ind.crack.tip_distance(self.target) <= config.tip_tolerance * self.target.length / 2.0:
                return ind
        return None


class _Tally:
    """Counters and training records shared by both stages of a run."""

    def __init__(self, workers: int = 1):
        self.workers = workers
        self.evaluations = 0
        self.failures = 0
        self.t0 = time.perf_counter()
        self.long_losses: list = []
        self.long_histories: list = []
        self.short_records: list = []
        self.snapshots: list = []
        self.last_clamped = 0

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.t0


def _check_clock(tally: _Tally, config: GaConfig, result) -> None:
    if tally.elapsed > config.max_wall_time:
        raise NotConverged(f"wall-time budget of {config.max_wall_time:g} s exhausted", result=result)


def generation_stream(seed: int, stage: str, generation: int) -> np.random.Generator:
    """Operator randomness for one generation; independent of evaluation order."""
    return np.random.default_rng([int(seed), _STAGE_CODE[stage], int(generation)])


def sorted_population(population: list) -> list:
    return sorted(population, key=lambda ind: (math.inf if ind.fitness is None else ind.fitness))


def _best(population: list) -> Individual:
    return sorted_population(population)[0]


def _log(population, generation, stage, tally: _Tally, clamped=0) -> GenerationLog:
    best = _best(population)
    tally.snapshots.append({"generation": generation, "stage": stage,
                            "population": [ind.to_dict() for ind in population]})
    return GenerationLog(generation, len(population), float(best.fitness), best.crack, tally.evaluations,
                         tally.elapsed, stage, clamped)


# ---------------------------------------------------------------- operators

def crossover(p1: Crack, p2: Crack, rng, space: Optional[SearchSpace] = None, retries: int = 20) -> Crack:
    """Tip-wise convex combination ``beta*p1 + (1-beta)*p2`` with one beta per child.

    A combination shorter than the minimum length is redrawn; if every draw
    fails the first parent is returned.
    """
    for _ in range(max(retries, 1)):
        beta = rng.uniform(0.0, 1.0)
        child = Crack(beta * p1.tip_plus + (1 - beta) * p2.tip_plus, beta * p1.tip_minus + (1 - beta) * p2.tip_minus)
        if space is None or space.admits(child):
            return child
    return p1


def mutate(crack: Crack, delta_M: float, rng, space: Optional[SearchSpace] = None, retries: int = 20,
           per_tip: bool = False):
    """Random translation of both tips by the same ``d1 + i d2``, each uniform in [-delta_M, delta_M].

    With ``per_tip`` each tip gets its own draw. Returns ``(crack, clamped)``:
    draws that leave the search space are retried, the last one is clamped
    to the box, and a clamped crack that became too short yields the parent.
    """
    if delta_M <= 0:
        raise ValueError("delta_M must be positive")

    def draw():
        d = complex(rng.uniform(-delta_M, delta_M), rng.uniform(-delta_M, delta_M))
        if not per_tip:
            return Crack(crack.tip_plus + d, crack.tip_minus + d)
        e = complex(rng.uniform(-delta_M, delta_M), rng.uniform(-delta_M, delta_M))
        return Crack(crack.tip_plus + d, crack.tip_minus + e)

    cand = draw()
    if space is None:
        return cand, False
    for _ in range(max(retries, 1) - 1):
        if space.admits(cand):
            return cand, False
        cand = draw()
    if space.admits(cand):
        return cand, False
    clamped = Crack(space.clamp(cand.tip_plus), space.clamp(cand.tip_minus))
    if clamped.length < space.min_length or clamped.length == 0:
        return crack, True
    return clamped, True


def population_split(P: int, config: GaConfig):
    """Survivors, offspring and removed counts ``(N_P, N_O, N_R)`` for a population of size P."""
    N_P = int((P - config.N_Delta) // (1 + config.offspring_ratio))
    N_O = P - config.N_Delta - N_P
    N_R = P - N_P
    return N_P, N_O, N_R


def population_size_trace(config: GaConfig, generations: int) -> list:
    """Closed-form population sizes for generations 0..generations."""
    sizes = [config.N_I]
    for g in range(1, generations + 1):
        P = sizes[-1]
        N_P, N_O, _ = population_split(P, config)
        P = N_P + N_O
        if g % config.T == 0:
            P = max(P, config.N_I)
        sizes.append(P)
    return sizes


# ---------------------------------------------------------------- evaluation

def _run_job(job):
    crack, sensors, evaluator, warm, epochs, stop = job
    try:
        ev = evaluate_crack(crack, sensors, evaluator, warm_state=warm, epochs=epochs, early_stop_loss=stop)
    except EvaluationFailed as exc:
        return None, str(exc)
    return ev, None


def _evaluate(individuals: list, sensors, evaluator, tally: _Tally, epochs=None, warm_states=None, stop=None):
    """Evaluate in place; failures score +inf. Results are joined by index."""
    if not individuals:
        return
    warm_states = warm_states or [None] * len(individuals)
    jobs = [(ind.crack, sensors, evaluator, w, epochs, stop) for ind, w in zip(individuals, warm_states)]
    if tally.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=tally.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    for ind, warm, (ev, err) in zip(individuals, warm_states, results):
        tally.evaluations += 1
        if ev is None:
            tally.failures += 1
            ind.fitness, ind.tl_state = math.inf, None
            continue
        ind.fitness = float(ev.fitness)
        ind.tl_state = ev.state
        ind.final_loss = ev.final_loss
        ind.epochs_run = ev.epochs_run
        if ev.state is None:
            continue
        if warm is None:
            tally.long_losses.append(ev.final_loss)
            tally.long_histories.append(list(ev.loss_history))
        else:
            tally.short_records.append({"epochs_run": ev.epochs_run, "final_loss": ev.final_loss,
                                        "reached": stop is not None and ev.final_loss < stop})


def evaluate_population(population, sensors, evaluator, epochs=None, workers: int = 1, tally=None) -> int:
    """Evaluate every member without a fitness (cold start). Returns the evaluation count."""
    tally = tally or _Tally(workers)
    todo = [ind for ind in population if not ind.evaluated]
    _evaluate(todo, sensors, evaluator, tally, epochs=epochs)
    return len(todo)


# ---------------------------------------------------------------- long range

def initial_population(config: GaConfig, space: SearchSpace, seed: Optional[int] = None) -> list:
    rng = np.random.default_rng([int(config.seed if seed is None else seed), 0, 0])
    return [Individual(random_crack(space, rng)) for _ in range(config.N_I)]


def step_generation(population, config: GaConfig, space: SearchSpace, sensors, evaluator, rng,
                    tally: Optional[_Tally] = None) -> list:
    """Selection, crossover and mutation, then evaluation of every changed member.

    The fittest survivor is never mutated, so the incumbent best is kept.
    """
    if any(not ind.evaluated for ind in population):
        raise ValueError("population must be evaluated before a generation step")
    tally = tally or _Tally()
    N_P, N_O, _ = population_split(len(population), config)
    if N_P < 2:
        raise PopulationCollapse(f"only {N_P} survivors from a population of {len(population)}")
    survivors = sorted_population(population)[:N_P]
    children = []
    for _ in range(N_O):
        i, j = rng.choice(N_P, size=2, replace=False)
        children.append(Individual(crossover(survivors[i].crack, survivors[j].crack, rng, space,
                                             config.constraint_retries)))
    new_pop = list(survivors) + children
    elite = survivors[0]
    clamped = 0
    for k, ind in enumerate(new_pop):
        if rng.uniform() >= config.P_M or ind is elite:
            continue
        crack, was_clamped = mutate(ind.crack, config.delta_M, rng, space, config.constraint_retries,
                                    config.per_tip_mutation)
        clamped += int(was_clamped)
        new_pop[k] = Individual(crack, clamped=was_clamped)
    _evaluate([ind for ind in new_pop if not ind.evaluated], sensors, evaluator, tally, epochs=config.epochs_long)
    tally.last_clamped = clamped
    return new_pop


def reinitialize(population, config: GaConfig, space: SearchSpace, rng) -> list:
    """Top the population back up to ``N_I`` with random cracks; members are untouched."""
    out = list(population)
    while len(out) < config.N_I:
        out.append(Individual(random_crack(space, rng)))
    return out


def _distinct_below(population, threshold, count):
    picked, seen = [], set()
    for ind in sorted_population(population):
        key = (ind.crack.tip_plus, ind.crack.tip_minus)
        if ind.fitness < threshold and key not in seen:
            seen.add(key)
            picked.append(ind)
    return picked[:count] if len(picked) >= count else None


@dataclass
class StageOutcome:
    population: list
    log: list
    generations: int
    hit: Optional[Individual] = None
    seeds: Optional[list] = None


def _long_range(config, space, sensors, evaluator, tally, termination=None, switch=True,
                population=None) -> StageOutcome:
    """Long-range loop. With ``switch`` it stops at N_S distinct cracks below F_s;
    the termination rule (if given) is checked after every generation."""
    log: list = []
    if config.max_generations <= 0:
        raise NotConverged("generation budget is zero", result=StageOutcome([], log, 0))
    pop = population if population is not None else initial_population(config, space)
    _evaluate([ind for ind in pop if not ind.evaluated], sensors, evaluator, tally, epochs=config.epochs_long)
    log.append(_log(pop, 0, LONG_RANGE, tally))
    g = 0
    while True:
        if termination is not None:
            hit = termination.hit(pop, config)
            if hit is not None:
                return StageOutcome(pop, log, g, hit=hit)
        if switch:
            seeds = _distinct_below(pop, config.F_s, config.N_S)
            if seeds is not None:
                return StageOutcome(pop, log, g, seeds=seeds)
        if g >= config.max_generations:
            raise NotConverged(f"long-range search used its {config.max_generations} generations",
                               result=StageOutcome(pop, log, g))
        _check_clock(tally, config, StageOutcome(pop, log, g))
        g += 1
        rng = generation_stream(config.seed, LONG_RANGE, g)
        tally.last_clamped = 0
        pop = step_generation(pop, config, space, sensors, evaluator, rng, tally)
        if g % config.T == 0:
            pop = reinitialize(pop, config, space, rng)
            _evaluate([ind for ind in pop if not ind.evaluated], sensors, evaluator, tally,
                      epochs=config.epochs_long)
        log.append(_log(pop, g, LONG_RANGE, tally, tally.last_clamped))


def long_range_search(config: GaConfig, space: SearchSpace, sensors, evaluator, rng=None, workers: int = 1):
    """Run the long-range stage until ``N_S`` distinct cracks have fitness below ``F_s``.

    Returns ``(seeds, log)``. Randomness derives from ``config.seed``; ``rng`` is
    accepted for interface symmetry and unused.
    """
    out = _long_range(config, space, sensors, evaluator, _Tally(workers))
    return out.seeds, out.log


# ---------------------------------------------------------------- short range

def short_range_stop_loss(tally: _Tally) -> Optional[float]:
    return float(np.median(tally.long_losses)) if tally.long_losses else None


def _short_range(seeds, config, space, sensors, evaluator, tally, termination, first_generation=0,
                 budget=None, stop_loss=None) -> StageOutcome:
    pool = list(seeds)
    log: list = []
    budget = config.max_generations if budget is None else budget
    g = first_generation
    hit = termination.hit(pool, config)
    if hit is not None:
        return StageOutcome(pool, log, 0, hit=hit)
    for it in range(1, budget + 1):
        g += 1
        rng = generation_stream(config.seed, SHORT_RANGE, g)
        dups, warms, clamped = [], [], 0
        for parent in pool:
            for _ in range(config.N_D):
                crack, was_clamped = mutate(parent.crack, config.delta_M, rng, space, config.constraint_retries,
                                            config.per_tip_mutation)
                clamped += int(was_clamped)
                dups.append(Individual(crack, clamped=was_clamped))
                warms.append(parent.tl_state)
        _evaluate(dups, sensors, evaluator, tally, epochs=config.epochs_short_cap, warm_states=warms,
                  stop=stop_loss)
        full = pool + dups
        log.append(_log(full, g, SHORT_RANGE, tally, clamped))
        hit = termination.hit(full, config)
        if hit is not None:
            return StageOutcome(full, log, it, hit=hit)
        pool = sorted_population(full)[: config.N_S]
        _check_clock(tally, config, StageOutcome(pool, log, it))
    raise NotConverged(f"short-range search used its {budget} generations", result=StageOutcome(pool, log, budget))


def short_range_search(seeds, config: GaConfig, space: SearchSpace, sensors, evaluator, rng=None,
                       termination: Optional[Termination] = None, stop_loss: Optional[float] = None,
                       workers: int = 1):
    """Refine seeds by mutated, warm-started duplicates. Returns ``(best, log)``."""
    out = _short_range(seeds, config, space, sensors, evaluator, _Tally(workers), termination or Termination(),
                       stop_loss=stop_loss)
    return out.hit, out.log


# ---------------------------------------------------------------- detection

@dataclass
class DetectionResult:
    status: str
    termination: str
    stage: str
    best: Individual
    generations_long: int
    generations_short: int
    evaluations: int
    failures: int
    wall_time: float
    long_log: list = field(default_factory=list)
    short_log: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    transfer: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "Converged"

    @property
    def generations(self) -> int:
        return self.generations_long + self.generations_short

    @property
    def logs(self) -> list:
        return self.long_log + self.short_log

    def summary(self) -> dict:
        return {"status": self.status, "termination": self.termination, "stage": self.stage,
                "best": self.best.to_dict(), "generations_long": self.generations_long,
                "generations_short": self.generations_short, "evaluations": self.evaluations,
                "failures": self.failures, "wall_time": self.wall_time,
                "seeds": [s.to_dict() for s in self.seeds], "transfer": self.transfer}


def transfer_stats(tally: _Tally, stop_loss: Optional[float], epochs_long: int) -> dict:
    """Warm-start versus cold-start effort to reach the short-range stopping loss."""
    if stop_loss is None or not tally.short_records:
        return {}
    cold = []
    for hist in tally.long_histories:
        idx = next((k for k, v in enumerate(hist) if v < stop_loss), None)
        cold.append(epochs_long if idx is None else idx)
    warm = [r["epochs_run"] for r in tally.short_records]
    return {"stop_loss": stop_loss, "cold_epochs_median": float(np.median(cold)),
            "warm_epochs_median": float(np.median(warm)),
            "warm_reached_fraction": float(np.mean([r["reached"] for r in tally.short_records])),
            "warm_evaluations": len(warm)}


def detect(config: GaConfig, space: SearchSpace, sensors: SensorArray, evaluator, rng=None,
           termination: Optional[Termination] = None, two_stage: bool = True, workers: int = 1,
           population: Optional[list] = None) -> DetectionResult:
    """Long-range search followed by short-range refinement.

    ``max_generations`` bounds both stages together. With ``two_stage=False``
    the long-range loop runs until the termination rule alone is met.
    Raises :class:`NotConverged` carrying a complete :class:`DetectionResult`.
    """
    termination = termination or Termination()
    tally = _Tally(workers)
    long_out = short_out = None
    seeds: list = []
    stop_loss = None

    def result(status, stage, best):
        return DetectionResult(
            status=status, termination=termination.mode, stage=stage, best=best,
            generations_long=long_out.generations if long_out else 0,
            generations_short=short_out.generations if short_out else 0,
            evaluations=tally.evaluations, failures=tally.failures, wall_time=tally.elapsed,
            long_log=long_out.log if long_out else [], short_log=short_out.log if short_out else [],
            snapshots=tally.snapshots, seeds=[s.crack for s in seeds],
            transfer=transfer_stats(tally, stop_loss, config.epochs_long))

    try:
        long_out = _long_range(config, space, sensors, evaluator, tally, termination, switch=two_stage,
                               population=population)
    except NotConverged as exc:
        long_out = exc.result
        best = _best(long_out.population) if long_out.population else Individual(Crack(1, 0), math.inf)
        raise NotConverged(str(exc), result=result("NotConverged", LONG_RANGE, best)) from None
    if long_out.hit is not None:
        return result("Converged", LONG_RANGE, long_out.hit)
    seeds = long_out.seeds
    stop_loss = short_range_stop_loss(tally)
    budget = config.max_generations - long_out.generations
    try:
        short_out = _short_range(seeds, config, space, sensors, evaluator, tally, termination,
                                 first_generation=long_out.generations, budget=budget, stop_loss=stop_loss)
    except NotConverged as exc:
        short_out = exc.result
        raise NotConverged(str(exc), result=result("NotConverged", SHORT_RANGE, _best(short_out.population))) \
            from None
    return result("Converged", SHORT_RANGE, short_out.hit)


# ---------------------------------------------------------------- output

def write_generation_log(logs, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for entry in logs:
            writer.writerow(entry.row())


def write_snapshots(snapshots, directory) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for snap in snapshots:
        p = directory / f"gen_{snap['generation']:04d}_{snap['stage']}.json"
        p.write_text(json.dumps({"schema": "holocrack.population_snapshot/1", **snap}, indent=1) + "\n")
        paths.append(p)
    return paths

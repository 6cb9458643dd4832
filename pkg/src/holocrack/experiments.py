"""Benchmark experiments and the run drivers behind the command-line tool."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .boundary import rectangle_boundary
from .elastic import CrackGeometry, ElasticMaterial, PlaneCondition, stress_to_strain
from .errors import NotConverged
from .ga import (
    DetectionResult,
    GaConfig,
    Termination,
    _long_range,
    _Tally,
    detect,
    write_generation_log,
    write_snapshots,
)
from .holonet import HnnArchitecture, TrainConfig
from .inverse import Crack, HnnEvaluator, OracleEvaluator, PlateModel, SearchSpace, crack_params
from .oracle import TARGET_CONFIG, OracleConfig, generate_sensor_data, oracle_fields, solve_plate
from .sensors import SensorArray

RECORD_SCHEMA = "holocrack.run_record/1"
EXPERIMENT_IDS = ("I", "II", "III")
HNN_LEARNING_RATE = 3e-3
IN_LOOP_ORACLE = OracleConfig(degree=10, collocation_count=800)


@dataclass(frozen=True)
class ExperimentSpec:
    """Square plate pulled on top and bottom, one straight crack, a sensor layout."""

    id: str
    half_side: float
    material: ElasticMaterial
    load: float
    sensors: tuple
    true_crack: Crack
    space: SearchSpace
    noise_std: float = 0.0

    @property
    def segments(self):
        L, t = self.half_side, self.load
        return rectangle_boundary(L, L, {"top": (0.0, t), "bottom": (0.0, -t)})

    @property
    def plate(self) -> PlateModel:
        return PlateModel(self.segments, self.material, self.half_side)

    @property
    def geometry(self) -> CrackGeometry:
        return crack_params(self.true_crack, self.half_side)

    def with_load(self, load: float) -> "ExperimentSpec":
        return replace(self, load=load)

    def to_dict(self) -> dict:
        return {"id": self.id, "half_side": self.half_side, "material": self.material.to_dict(),
                "load": self.load, "sensors": [[z.real, z.imag] for z in self.sensors],
                "true_crack": self.true_crack.to_dict(), "search_space": self.space.to_dict(),
                "noise_std": self.noise_std}


def build_experiment(exp_id: str, half_side: float = 1.0, noise_std: float = 0.0) -> ExperimentSpec:
    if exp_id not in EXPERIMENT_IDS:
        raise ValueError(f"unknown experiment {exp_id!r}; choose from {EXPERIMENT_IDS}")
    L = half_side
    lam = mu = 1.0
    material = ElasticMaterial(lam, mu, PlaneCondition.PLANE_STRAIN)
    sensors = [complex(x * L, y * L) for y in (0.8, -0.8) for x in (-0.8, -0.4, 0.0, 0.4, 0.8)]
    if exp_id == "II":
        sensors += [complex(x * L, y * L) for x in (-0.8, 0.8) for y in (-0.4, 0.0, 0.4)]
    if exp_id == "III":
        geom = CrackGeometry(0.3 * L, complex(0.2 * L, -0.2 * L), math.pi / 6)
    else:
        geom = CrackGeometry(0.3 * L, 0.0, 0.0)
    return ExperimentSpec(exp_id, L, material, lam, tuple(sensors), Crack.from_geometry(geom),
                          SearchSpace.square(0.8 * L, 0.1 * L), noise_std)


def generate_target(spec: ExperimentSpec, out_path=None, noise_std: Optional[float] = None, seed: int = 0,
                    cfg: OracleConfig = TARGET_CONFIG) -> SensorArray:
    noise = spec.noise_std if noise_std is None else noise_std
    rng = np.random.default_rng([int(seed), 0x7A6E])
    data = generate_sensor_data(spec.geometry, list(spec.sensors), spec.material, spec.segments, cfg,
                                noise_std=noise, rng=rng, length_scale=spec.half_side,
                                provenance={"experiment": spec.id, "seed": int(seed)})
    if out_path is not None:
        data.save(out_path)
    return data


def make_evaluator(spec: ExperimentSpec, kind: str = "hnn", epochs: int = 200, seed: int = 0,
                   learning_rate: float = HNN_LEARNING_RATE, oracle_cfg: OracleConfig = IN_LOOP_ORACLE):
    if kind == "oracle":
        return OracleEvaluator(spec.plate, oracle_cfg)
    if kind == "hnn":
        cfg = TrainConfig(epochs=epochs, learning_rate=learning_rate, n_sigma=300, seed=seed)
        return HnnEvaluator(spec.plate, cfg, HnnArchitecture(), seed=seed)
    raise ValueError(f"unknown evaluator {kind!r}")


@dataclass
class RunRecord:
    experiment: str
    seed: int
    evaluator: str
    termination: str
    status: str
    best_crack: dict
    best_fitness: float
    tip_error: float
    generations_long: int
    generations_short: int
    evaluations: int
    failures: int
    wall_time: float
    epochs_long: int
    epochs_short_cap: int
    two_stage: bool = True
    stage: str = ""
    transfer: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "Converged"

    def to_dict(self) -> dict:
        out = {"schema": RECORD_SCHEMA, **asdict(self)}
        if not math.isfinite(out["best_fitness"]):
            out["best_fitness"] = "inf"
        return out

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _record(spec, seed, evaluator_kind, cfg, result: DetectionResult, two_stage, message="") -> RunRecord:
    return RunRecord(
        experiment=spec.id, seed=int(seed), evaluator=evaluator_kind, termination=result.termination,
        status=result.status, best_crack=result.best.crack.to_dict(), best_fitness=float(result.best.fitness),
        tip_error=float(result.best.crack.tip_distance(spec.true_crack)),
        generations_long=result.generations_long, generations_short=result.generations_short,
        evaluations=result.evaluations, failures=result.failures, wall_time=result.wall_time,
        epochs_long=cfg.epochs_long, epochs_short_cap=cfg.epochs_short_cap, two_stage=two_stage,
        stage=result.stage, transfer=result.transfer, config=cfg.to_dict(), message=message)


def run_detect(spec: ExperimentSpec, seed: int = 42, overrides: Optional[dict] = None, evaluator: str = "hnn",
               termination: str = "geometric", two_stage: bool = True, sensors: Optional[SensorArray] = None,
               out_dir=None, workers: int = 1):
    """One detection run; returns ``(record, result)``. Failures to converge are recorded, not raised."""
    cfg = GaConfig.from_dict({**GaConfig().to_dict(), "seed": int(seed), **(overrides or {})})
    sensors = sensors if sensors is not None else generate_target(spec)
    ev = make_evaluator(spec, evaluator, cfg.epochs_long, seed)
    term = Termination(termination, spec.true_crack if termination == "geometric" else None)
    message = ""
    try:
        result = detect(cfg, spec.space, sensors, ev, termination=term, two_stage=two_stage, workers=workers)
    except NotConverged as exc:
        result, message = exc.result, str(exc)
    record = _record(spec, seed, evaluator, cfg, result, two_stage, message)
    if out_dir is not None:
        write_run(record, result, out_dir)
    return record, result


def write_run(record: RunRecord, result: DetectionResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{record.experiment}_seed{record.seed}"
    record.save(out / f"{stem}_record.json")
    write_generation_log(result.logs, out / f"{stem}_generations.csv")
    write_snapshots(result.snapshots, out / f"{stem}_snapshots")
    return out


@dataclass
class SweepCell:
    epochs: int
    seed: int
    generations: int
    censored: bool
    evaluations: int
    wall_time: float


def run_epoch_sweep(spec: ExperimentSpec, epochs_list, seeds, overrides: Optional[dict] = None,
                    evaluator: str = "hnn", sensors: Optional[SensorArray] = None) -> list:
    """Long-range generations to reach the stage switch for each (epochs, seed).

    The initial population depends on the seed only, so it is shared across
    epoch settings. Runs that exhaust the budget are censored at it.
    """
    sensors = sensors if sensors is not None else generate_target(spec)
    cells = []
    for epochs in epochs_list:
        for seed in seeds:
            cfg = GaConfig.from_dict({**GaConfig().to_dict(), "seed": int(seed), "epochs_long": int(epochs),
                                      **(overrides or {})})
            ev = make_evaluator(spec, evaluator, int(epochs), seed)
            tally = _Tally()
            try:
                out = _long_range(cfg, spec.space, sensors, ev, tally)
                gens, censored = out.generations, False
            except NotConverged:
                gens, censored = cfg.max_generations, True
            cells.append(SweepCell(int(epochs), int(seed), gens, censored, tally.evaluations, tally.elapsed))
    return cells


def sweep_table(cells) -> list:
    """Mean generations and wall time per epoch setting."""
    rows = []
    for epochs in sorted({c.epochs for c in cells}):
        sub = [c for c in cells if c.epochs == epochs]
        rows.append({"epochs": epochs, "runs": len(sub), "censored": sum(c.censored for c in sub),
                     "mean_generations": float(np.mean([c.generations for c in sub])),
                     "mean_evaluations": float(np.mean([c.evaluations for c in sub])),
                     "mean_wall_time": float(np.mean([c.wall_time for c in sub]))})
    return rows


def run_forward(spec: ExperimentSpec, crack: Optional[Crack] = None, solver: str = "oracle", epochs: int = 1000,
                seed: int = 0, oracle_cfg: OracleConfig = IN_LOOP_ORACLE, grid: int = 0) -> dict:
    """Sensor strains (and optionally a field grid) for one crack."""
    crack = crack or spec.true_crack
    locations = np.asarray(spec.sensors, dtype=complex)
    geom = crack_params(crack, spec.half_side)
    report = {"experiment": spec.id, "solver": solver, "crack": crack.to_dict()}
    if solver == "oracle":
        sol = solve_plate(geom, spec.material, spec.segments, oracle_cfg, spec.half_side)
        field_fn = lambda z: oracle_fields(sol, geom, spec.material, z)  # noqa: E731
        report.update(degree=oracle_cfg.degree, relative_residual=sol.relative_residual)
    elif solver == "hnn":
        ev = make_evaluator(spec, "hnn", epochs, seed)
        pair, train_report = ev.solve(crack)
        from .elastic import evaluate_fields

        field_fn = lambda z: evaluate_fields(pair.chi, pair.gamma, geom, spec.material, z)  # noqa: E731
        report.update(epochs=epochs, final_loss=train_report.final_loss)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    report["strains"] = stress_to_strain(field_fn(locations), spec.material).as_array()
    report["locations"] = locations
    if grid > 0:
        L = spec.half_side
        xs = np.linspace(-L, L, grid)
        zz = (xs[None, :] + 1j * xs[:, None]).ravel()
        zz = zz + 1e-9j * (np.abs(geom.to_local(zz).imag) < 1e-9)  # nudge points lying on the crack line
        state = field_fn(zz)
        report["grid"] = {"z": zz, "sxx": state.sxx, "syy": state.syy, "sxy": state.sxy, "ux": state.ux,
                          "uy": state.uy}
    return report


def run_ablation(spec: ExperimentSpec, seeds, overrides: Optional[dict] = None, evaluator: str = "oracle",
                 sensors: Optional[SensorArray] = None) -> dict:
    """Two-stage versus long-range-only search, geometric termination, same seeds."""
    sensors = sensors if sensors is not None else generate_target(spec)
    out = {"two_stage": [], "single_stage": []}
    for seed in seeds:
        for key, two in (("two_stage", True), ("single_stage", False)):
            rec, _ = run_detect(spec, seed, overrides, evaluator, "geometric", two, sensors)
            out[key].append(rec)
    return out


def quartiles(values) -> dict:
    q = np.percentile(np.asarray(values, dtype=float), [0, 25, 50, 75, 100])
    return dict(zip(("min", "q1", "median", "q3", "max"), (float(v) for v in q)))

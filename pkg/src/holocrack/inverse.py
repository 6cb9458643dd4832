"""Inverse-problem vocabulary: cracks, search space, fitness and evaluators."""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol

import numpy as np

from .boundary import Segment, boundary_sample
from .elastic import CrackGeometry, ElasticMaterial, StrainTensor, evaluate_fields, stress_to_strain
from .errors import (
    CrackDetectionError,
    DegenerateCrack,
    Diverged,
    EvaluationFailed,
    IllConditioned,
    Overflow,
    SamplingExhausted,
    ZeroNormTarget,
)
from .holonet import (
    BoundaryOperator,
    HnnArchitecture,
    HnnPair,
    TrainConfig,
    init_params,
    train,
    warm_start,
)
from .oracle import OracleConfig, oracle_fields, solve_plate
from .sensors import SensorArray


@dataclass(frozen=True)
class Crack:
    """A straight crack given by its two tips (global coordinates)."""

    tip_plus: complex
    tip_minus: complex

    def __post_init__(self):
        object.__setattr__(self, "tip_plus", complex(self.tip_plus))
        object.__setattr__(self, "tip_minus", complex(self.tip_minus))

    @property
    def length(self) -> float:
        return abs(self.tip_plus - self.tip_minus)

    @property
    def direction(self) -> complex:
        return self.tip_plus - self.tip_minus

    def translated(self, shift: complex) -> "Crack":
        return Crack(self.tip_plus + shift, self.tip_minus + shift)

    def tip_distance(self, other: "Crack") -> float:
        """Largest tip-to-tip distance under the better of the two tip pairings."""
        same = max(abs(self.tip_plus - other.tip_plus), abs(self.tip_minus - other.tip_minus))
        swap = max(abs(self.tip_plus - other.tip_minus), abs(self.tip_minus - other.tip_plus))
        return min(same, swap)

    def to_dict(self):
        return {"tip_plus": [self.tip_plus.real, self.tip_plus.imag],
                "tip_minus": [self.tip_minus.real, self.tip_minus.imag]}

    @classmethod
    def from_dict(cls, data):
        return cls(complex(*data["tip_plus"]), complex(*data["tip_minus"]))

    @classmethod
    def from_geometry(cls, geom: CrackGeometry) -> "Crack":
        zp, zm = geom.tips
        return cls(zp, zm)


def crack_params(crack: Crack, length_scale: float = 1.0) -> CrackGeometry:
    """Half length, centre and orientation of a crack from its tips."""
    d = crack.tip_plus - crack.tip_minus
    if abs(d) < 1e-12 * length_scale:
        raise DegenerateCrack(f"tips coincide: {crack.tip_plus}")
    return CrackGeometry(abs(d) / 2.0, (crack.tip_plus + crack.tip_minus) / 2.0, float(np.angle(d)))


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box for the tips plus a minimum crack length."""

    xmin: float = -0.8
    xmax: float = 0.8
    ymin: float = -0.8
    ymax: float = 0.8
    min_length: float = 0.1

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("empty search box")
        if self.min_length < 0:
            raise ValueError("min_length must be nonnegative")

    @classmethod
    def square(cls, half: float, min_length: float) -> "SearchSpace":
        return cls(-half, half, -half, half, min_length)

    def contains(self, z) -> bool:
        z = complex(z)
        return self.xmin <= z.real <= self.xmax and self.ymin <= z.imag <= self.ymax

    def admits(self, crack: Crack) -> bool:
        return self.contains(crack.tip_plus) and self.contains(crack.tip_minus) and crack.length >= self.min_length

    def clamp(self, z) -> complex:
        z = complex(z)
        return complex(min(max(z.real, self.xmin), self.xmax), min(max(z.imag, self.ymin), self.ymax))

    def draw_point(self, rng) -> complex:
        return complex(rng.uniform(self.xmin, self.xmax), rng.uniform(self.ymin, self.ymax))

    def to_dict(self):
        return {"box": [self.xmin, self.xmax, self.ymin, self.ymax], "min_length": self.min_length}


def random_crack(space: SearchSpace, rng, max_tries: int = 1000) -> Crack:
    """Both tips uniform in the box, resampled until the length constraint holds."""
    for _ in range(max_tries):
        zp = space.draw_point(rng)
        zm = space.draw_point(rng)
        if abs(zp - zm) >= space.min_length and zp != zm:
            return Crack(zp, zm)
    raise SamplingExhausted(f"no admissible crack in {max_tries} draws (min_length={space.min_length})")


def _frobenius_sq(arr):
    return arr[..., 0] ** 2 + arr[..., 1] ** 2 + 2.0 * arr[..., 2] ** 2


def fitness(predicted, measured: SensorArray) -> float:
    """Normalised squared strain mismatch over all sensors (0 is a perfect match)."""
    pred = predicted.as_array() if isinstance(predicted, StrainTensor) else np.asarray(predicted, dtype=float)
    pred = pred.reshape(-1, 3)
    meas = measured.strains
    if pred.shape != meas.shape:
        raise ValueError(f"predicted strains {pred.shape} do not match sensors {meas.shape}")
    den = float(np.sum(_frobenius_sq(meas)))
    if den == 0.0:
        raise ZeroNormTarget("measured strains are all zero")
    return float(np.sum(_frobenius_sq(pred - meas)) / den)


@dataclass
class Evaluation:
    """Result of scoring one crack."""

    fitness: float
    strains: np.ndarray
    state: Any = None
    epochs_run: int = 0
    final_loss: float = float("nan")
    loss_history: list = field(default_factory=list)
    wall_time: float = 0.0


class Evaluator(Protocol):
    name: str

    def evaluate(self, crack: Crack, sensors: SensorArray, warm_state=None, epochs: Optional[int] = None,
                 early_stop_loss: Optional[float] = None) -> Evaluation:
        ...


@dataclass
class PlateModel:
    """Boundary description shared by all forward solvers of one experiment."""

    segments: list
    material: ElasticMaterial
    half_side: float = 1.0


class OracleEvaluator:
    """Scores cracks with the polynomial collocation solver."""

    name = "oracle"

    def __init__(self, plate: PlateModel, config: OracleConfig = OracleConfig(degree=10, collocation_count=800)):
        self.plate = plate
        self.config = config

    def strains(self, crack: Crack, locations) -> np.ndarray:
        geom = crack_params(crack, self.plate.half_side)
        sol = solve_plate(geom, self.plate.material, self.plate.segments, self.config, self.plate.half_side)
        state = oracle_fields(sol, geom, self.plate.material, np.asarray(locations, dtype=complex))
        return stress_to_strain(state, self.plate.material).as_array()

    def evaluate(self, crack, sensors, warm_state=None, epochs=None, early_stop_loss=None) -> Evaluation:
        t0 = time.perf_counter()
        strains = self.strains(crack, sensors.locations)
        return Evaluation(fitness(strains, sensors), strains, wall_time=time.perf_counter() - t0)


def crack_stream(seed: int, crack: Crack) -> np.random.Generator:
    """Random stream keyed by the master seed and the crack's tip coordinates."""
    raw = struct.pack("<4d", crack.tip_plus.real, crack.tip_plus.imag, crack.tip_minus.real, crack.tip_minus.imag)
    words = list(struct.unpack("<8I", raw))
    return np.random.default_rng([int(seed)] + words)


@dataclass
class HnnState:
    """Trained network pair kept for transfer learning."""

    pair: HnnPair
    final_loss: float


class HnnEvaluator:
    """Scores cracks by training a pair of holomorphic networks on the plate boundary.

    Training points are drawn once per evaluator so that all cracks, and the
    losses used for early stopping, refer to the same boundary sample.
    """

    name = "hnn"

    def __init__(self, plate: PlateModel, train_config: TrainConfig = TrainConfig(),
                 architecture: HnnArchitecture = HnnArchitecture(), seed: int = 0,
                 output_gain: float = 0.01):
        self.plate = plate
        self.train_config = train_config
        self.architecture = architecture
        self.seed = seed
        self.output_gain = output_gain
        rng = np.random.default_rng([int(seed), 0x5A17])
        self.points = boundary_sample(plate.segments, train_config.n_u, train_config.n_sigma, rng)

    def initial_pair(self, crack: Crack) -> HnnPair:
        rng = crack_stream(self.seed, crack)
        chi = init_params(self.architecture, rng, self.plate.half_side, self.output_gain)
        gamma = init_params(self.architecture, rng, self.plate.half_side, self.output_gain)
        return HnnPair(chi, gamma)

    def solve(self, crack: Crack, warm_state: Optional[HnnState] = None, epochs: Optional[int] = None,
              early_stop_loss: Optional[float] = None):
        geom = crack_params(crack, self.plate.half_side)
        cfg = self.train_config
        overrides = {}
        if epochs is not None:
            overrides["epochs"] = int(epochs)
        if early_stop_loss is not None:
            overrides["early_stop_loss"] = float(early_stop_loss)
        if overrides:
            cfg = TrainConfig(**{**cfg.__dict__, **overrides})
        start = warm_start(warm_state.pair) if warm_state is not None else self.initial_pair(crack)
        op = BoundaryOperator(self.points, geom, self.plate.material, cfg.s_u, cfg.s_sigma)
        return train(start.chi, start.gamma, self.points, geom, self.plate.material, cfg, operator=op)

    def strains_for(self, pair: HnnPair, crack: Crack, locations) -> np.ndarray:
        geom = crack_params(crack, self.plate.half_side)
        state = evaluate_fields(pair.chi, pair.gamma, geom, self.plate.material, np.asarray(locations, dtype=complex))
        return stress_to_strain(state, self.plate.material).as_array()

    def evaluate(self, crack, sensors, warm_state=None, epochs=None, early_stop_loss=None) -> Evaluation:
        t0 = time.perf_counter()
        pair, report = self.solve(crack, warm_state, epochs, early_stop_loss)
        strains = self.strains_for(pair, crack, sensors.locations)
        return Evaluation(
            fitness=fitness(strains, sensors),
            strains=strains,
            state=HnnState(pair, report.final_loss),
            epochs_run=report.epochs_run,
            final_loss=report.final_loss,
            loss_history=report.loss_history,
            wall_time=time.perf_counter() - t0,
        )


def evaluate_crack(crack: Crack, sensors: SensorArray, evaluator, warm_state=None, epochs=None,
                   early_stop_loss=None) -> Evaluation:
    """Score one crack; solver failures surface as :class:`EvaluationFailed`."""
    try:
        result = evaluator.evaluate(crack, sensors, warm_state=warm_state, epochs=epochs,
                                    early_stop_loss=early_stop_loss)
    except (Diverged, IllConditioned, Overflow) as exc:
        raise EvaluationFailed(f"{type(exc).__name__}: {exc}") from exc
    except CrackDetectionError as exc:
        raise EvaluationFailed(f"{type(exc).__name__}: {exc}") from exc
    if not np.isfinite(result.fitness):
        raise EvaluationFailed("non-finite fitness")
    return result

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DistanceEvaluator
from holocrack.errors import NotConverged, PopulationCollapse
from holocrack.ga import (
    LOG_COLUMNS,
    LONG_RANGE,
    SHORT_RANGE,
    GaConfig,
    Individual,
    Termination,
    _long_range,
    _Tally,
    crossover,
    detect,
    generation_stream,
    initial_population,
    mutate,
    population_size_trace,
    population_split,
    reinitialize,
    step_generation,
    transfer_stats,
    write_generation_log,
    write_snapshots,
)
from holocrack.inverse import Crack, Evaluation, SearchSpace
from holocrack.sensors import SensorArray

SPACE = SearchSpace.square(0.8, 0.1)
TARGET = Crack(0.3 + 0.1j, -0.2 - 0.1j)
tips = st.complex_numbers(max_magnitude=0.8, allow_nan=False, allow_infinity=False)


@pytest.fixture(scope="module")
def sensors():
    return SensorArray([0.8j, 0.8 + 0.8j], np.ones((2, 3)))


class FixedRng:
    """Returns one value for every uniform draw."""

    def __init__(self, value):
        self.value = value

    def uniform(self, lo=0.0, hi=1.0, size=None):
        return self.value


def evaluated(members, ev, sensors):
    cracks = [getattr(m, "crack", m) for m in members]
    return [Individual(c, ev.evaluate(c, sensors).fitness) for c in cracks]


# ---------------------------------------------------------------- crossover


def test_crossover_endpoints():
    p1, p2 = Crack(0.5 + 0.2j, -0.1j), Crack(-0.4, 0.3 + 0.6j)
    assert crossover(p1, p2, FixedRng(1.0)) == p1
    assert crossover(p1, p2, FixedRng(0.0)) == p2
    mid = crossover(p1, p2, FixedRng(0.5))
    assert mid.tip_plus == pytest.approx((p1.tip_plus + p2.tip_plus) / 2)
    assert mid.tip_minus == pytest.approx((p1.tip_minus + p2.tip_minus) / 2)


@given(tips, tips, tips, tips, st.integers(0, 2**32 - 1))
def test_crossover_uses_one_weight_for_both_tips(a, b, c, d, seed):
    p1, p2 = Crack(a, b), Crack(c, d)
    child = crossover(p1, p2, np.random.default_rng(seed))
    betas = []
    for tc, t1, t2 in ((child.tip_plus, a, c), (child.tip_minus, b, d)):
        if abs(t1 - t2) > 1e-6:
            beta = ((tc - t2) / (t1 - t2))
            assert abs(beta.imag) < 1e-9
            betas.append(beta.real)
    for beta in betas:
        assert -1e-9 <= beta <= 1 + 1e-9
    if len(betas) == 2:
        assert betas[0] == pytest.approx(betas[1], abs=1e-9)


def test_crossover_falls_back_to_first_parent():
    # opposite parents average to a point-like crack for beta near 1/2
    p1, p2 = Crack(0.3, -0.3), Crack(-0.3, 0.3)
    assert crossover(p1, p2, FixedRng(0.5), SPACE, retries=3) == p1


# ---------------------------------------------------------------- mutation


@given(tips, tips, st.integers(0, 2**32 - 1))
def test_mutation_is_a_rigid_translation(a, b, seed):
    crack = Crack(a, b)
    child, clamped = mutate(crack, 0.1, np.random.default_rng(seed))
    shift = child.tip_plus - crack.tip_plus
    assert not clamped
    assert child.tip_minus - crack.tip_minus == pytest.approx(shift, abs=1e-15)
    assert abs(shift.real) <= 0.1 and abs(shift.imag) <= 0.1


def test_mutation_shift_is_uniform():
    from scipy.stats import kstest

    rng = np.random.default_rng(5)
    crack = Crack(0.1, -0.1)
    shifts = np.array([mutate(crack, 0.1, rng)[0].tip_plus - crack.tip_plus for _ in range(4000)])
    for part in (shifts.real, shifts.imag):
        assert kstest(part, "uniform", args=(-0.1, 0.2)).pvalue > 0.01
    assert abs(np.corrcoef(shifts.real, shifts.imag)[0, 1]) < 0.05


def test_per_tip_mutation_moves_tips_independently():
    rng = np.random.default_rng(2)
    crack = Crack(0.2, -0.2)
    child, _ = mutate(crack, 0.1, rng, per_tip=True)
    assert child.tip_plus - crack.tip_plus != pytest.approx(child.tip_minus - crack.tip_minus)


def test_mutation_stays_in_the_search_space():
    rng = np.random.default_rng(0)
    crack = Crack(0.79 + 0.79j, 0.5 + 0.5j)
    for _ in range(200):
        child, _ = mutate(crack, 0.1, rng, SPACE)
        assert SPACE.admits(child)


def test_mutation_clamps_after_exhausted_retries():
    crack = Crack(0.79 + 0.79j, 0.5 + 0.5j)
    child, clamped = mutate(crack, 0.1, FixedRng(0.1), SPACE, retries=2)
    assert clamped
    assert child == Crack(0.8 + 0.8j, 0.6 + 0.6j)


def test_mutation_needs_positive_amplitude():
    with pytest.raises(ValueError):
        mutate(Crack(0.1, 0.0), 0.0, np.random.default_rng(0))


# ---------------------------------------------------------------- population sizes


def test_population_split_for_the_default_parameters():
    cfg = GaConfig()
    assert population_split(9, cfg) == (4, 4, 5)
    assert population_split(8, cfg) == (3, 4, 5)
    assert population_split(5, cfg) == (2, 2, 3)


@given(st.integers(3, 200), st.integers(0, 3), st.floats(0.25, 4.0))
def test_removed_minus_offspring_is_the_shrink(P, n_delta, ratio):
    cfg = GaConfig(N_Delta=n_delta, offspring_ratio=ratio)
    if P <= n_delta:
        return
    N_P, N_O, N_R = population_split(P, cfg)
    assert N_R - N_O == n_delta
    assert N_P + N_O == P - n_delta
    assert 0 <= N_P


def test_sawtooth_trace():
    assert population_size_trace(GaConfig(), 20) == [9, 8, 7, 6, 5] * 4 + [9]


def test_sawtooth_in_a_run(sensors):
    cfg = GaConfig(max_generations=20)
    with pytest.raises(NotConverged) as info:
        _long_range(cfg, SPACE, sensors, DistanceEvaluator(TARGET), _Tally(), switch=False)
    sizes = [entry.population_size for entry in info.value.result.log]
    assert sizes == population_size_trace(cfg, 20)


def test_collapse_is_reported(sensors):
    ev = DistanceEvaluator(TARGET)
    pop = evaluated([Crack(0.1, -0.1), Crack(0.2, -0.2), Crack(0.3, -0.3)], ev, sensors)
    with pytest.raises(PopulationCollapse):
        step_generation(pop, GaConfig(N_Delta=2), SPACE, sensors, ev, np.random.default_rng(0))


# ---------------------------------------------------------------- one generation


def test_step_needs_an_evaluated_population(sensors):
    pop = initial_population(GaConfig(), SPACE)
    with pytest.raises(ValueError):
        step_generation(pop, GaConfig(), SPACE, sensors, DistanceEvaluator(TARGET), np.random.default_rng(0))


def test_without_mutation_survivors_are_kept(sensors):
    cfg = GaConfig(P_M=0.0)
    ev = DistanceEvaluator(TARGET)
    pop = evaluated(initial_population(cfg, SPACE), ev, sensors)
    new = step_generation(pop, cfg, SPACE, sensors, ev, np.random.default_rng(1))
    best4 = sorted(pop, key=lambda i: i.fitness)[:4]
    assert new[:4] == best4 and all(a is b for a, b in zip(new[:4], best4))
    assert len(new) == 8
    # children are convex tip combinations of two survivors
    for child in new[4:]:
        assert child.evaluated


def test_elite_is_never_mutated(sensors):
    cfg = GaConfig(P_M=1.0)
    ev = DistanceEvaluator(TARGET)
    pop = evaluated(initial_population(cfg, SPACE), ev, sensors)
    elite = min(pop, key=lambda i: i.fitness)
    new = step_generation(pop, cfg, SPACE, sensors, ev, np.random.default_rng(1))
    assert any(ind is elite for ind in new)
    assert not any(ind is not elite and any(ind is old for old in pop) for ind in new)


def test_best_fitness_never_increases(sensors):
    cfg = GaConfig(max_generations=40)
    with pytest.raises(NotConverged) as info:
        _long_range(cfg, SPACE, sensors, DistanceEvaluator(TARGET), _Tally(), switch=False)
    best = [entry.best_fitness for entry in info.value.result.log]
    assert all(b <= a for a, b in zip(best, best[1:]))


def test_reinitialize_tops_up_and_leaves_full_populations():
    cfg = GaConfig()
    rng = np.random.default_rng(0)
    full = initial_population(cfg, SPACE)
    assert reinitialize(full, cfg, SPACE, rng) == full
    topped = reinitialize(full[:5], cfg, SPACE, rng)
    assert len(topped) == 9 and topped[:5] == full[:5]


def test_generation_streams_are_keyed():
    a = generation_stream(3, LONG_RANGE, 7).uniform(size=4)
    b = generation_stream(3, LONG_RANGE, 7).uniform(size=4)
    c = generation_stream(3, SHORT_RANGE, 7).uniform(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


# ---------------------------------------------------------------- termination and stages


def test_geometric_termination_tolerance():
    cfg = GaConfig()
    term = Termination("geometric", Crack(0.3, -0.3))
    near = Individual(Crack(-0.3 + 0.0149j, 0.3), 1.0)
    far = Individual(Crack(0.3 + 0.0151j, -0.3), 0.0)
    assert term.hit([far, near], cfg) is near
    assert term.hit([far], cfg) is None


def test_termination_validation():
    with pytest.raises(ValueError):
        Termination("geometric")
    with pytest.raises(ValueError):
        Termination("distance")


def test_zero_budget_raises(sensors):
    with pytest.raises(NotConverged):
        detect(GaConfig(max_generations=0), SPACE, sensors, DistanceEvaluator(TARGET))


def test_immediate_hit_in_the_initial_population(sensors):
    cfg = GaConfig(seed=4)
    pop0 = initial_population(cfg, SPACE)
    res = detect(cfg, SPACE, sensors, DistanceEvaluator(pop0[6].crack), termination=Termination("geometric",
                 pop0[6].crack))
    assert res.converged and res.stage == LONG_RANGE and res.generations == 0
    assert res.best.crack == pop0[6].crack


def test_infinite_switch_fitness_switches_at_once(sensors):
    cfg = GaConfig(F_s=math.inf, max_generations=6)
    with pytest.raises(NotConverged) as info:
        detect(cfg, SPACE, sensors, DistanceEvaluator(TARGET, floor=1.0))
    res = info.value.result
    assert res.generations_long == 0 and res.stage == SHORT_RANGE
    assert res.generations_short == 6
    assert len(res.seeds) == cfg.N_S


def test_short_range_pool_size(sensors):
    cfg = GaConfig(F_s=math.inf, max_generations=5)
    with pytest.raises(NotConverged) as info:
        detect(cfg, SPACE, sensors, DistanceEvaluator(TARGET, floor=1.0))
    sizes = [entry.population_size for entry in info.value.result.short_log]
    assert sizes == [cfg.N_S * (1 + cfg.N_D)] * 5
    # 9 cold starts, then N_S * N_D warm-started duplicates per generation
    assert info.value.result.evaluations == 9 + 5 * 6


def test_short_range_duplicates_are_warm_started(sensors):
    cfg = GaConfig(F_s=math.inf, max_generations=3)
    with pytest.raises(NotConverged) as info:
        detect(cfg, SPACE, sensors, DistanceEvaluator(TARGET, floor=1.0))
    snap = info.value.result.transfer
    assert snap["warm_evaluations"] == 3 * 6
    assert snap["warm_epochs_median"] == 1.0


def test_budget_is_shared_between_stages(sensors):
    cfg = GaConfig(F_s=0.05, max_generations=30, seed=1)
    with pytest.raises(NotConverged) as info:
        detect(cfg, SPACE, sensors, DistanceEvaluator(TARGET, floor=0.01),
               termination=Termination("geometric", Crack(5.0, 6.0)))
    res = info.value.result
    assert res.generations_long > 0 and res.generations_long + res.generations_short == 30


def test_single_stage_never_switches(sensors):
    cfg = GaConfig(F_s=math.inf, max_generations=8)
    with pytest.raises(NotConverged) as info:
        detect(cfg, SPACE, sensors, DistanceEvaluator(TARGET), two_stage=False,
               termination=Termination("geometric", Crack(5.0, 6.0)))
    assert info.value.result.stage == LONG_RANGE and info.value.result.generations_long == 8


def test_wall_time_budget(sensors):
    cfg = GaConfig(max_wall_time=1e-9, max_generations=50)
    with pytest.raises(NotConverged, match="wall-time"):
        detect(cfg, SPACE, sensors, DistanceEvaluator(TARGET))


def test_search_closes_in_on_the_target(sensors):
    cfg = GaConfig(F_s=0.01, max_generations=60, seed=0)
    with pytest.raises(NotConverged) as info:
        detect(cfg, SPACE, sensors, DistanceEvaluator(TARGET), termination=Termination("geometric", TARGET))
    logs = info.value.result.logs
    first, last = logs[0].best_crack.tip_distance(TARGET), logs[-1].best_crack.tip_distance(TARGET)
    assert info.value.result.stage == SHORT_RANGE
    assert last < 0.25 * first


def test_failed_evaluations_score_infinity(sensors):
    from holocrack.errors import Diverged

    class Failing(DistanceEvaluator):
        def evaluate(self, crack, sensors, **kw):
            if crack.tip_plus.real > 0.4:
                raise Diverged("loss is not finite")
            return super().evaluate(crack, sensors, **kw)

    cfg = GaConfig(max_generations=10)
    with pytest.raises(NotConverged) as info:
        detect(cfg, SPACE, sensors, Failing(TARGET), two_stage=False,
               termination=Termination("geometric", Crack(5.0, 6.0)))
    res = info.value.result
    assert res.failures > 0
    for snap in res.snapshots:
        for member in snap["population"]:
            if member["tip_plus"][0] > 0.4:
                assert member["fitness"] == "inf"


# ---------------------------------------------------------------- reproducibility and output


def _run(sensors, workers=1):
    cfg = GaConfig(seed=11, max_generations=25)
    try:
        return detect(cfg, SPACE, sensors, DistanceEvaluator(TARGET), workers=workers,
                      termination=Termination("geometric", TARGET))
    except NotConverged as exc:
        return exc.result


def test_runs_are_deterministic(sensors):
    a, b = _run(sensors), _run(sensors)
    assert [e.row() | {"wall_time": 0} for e in a.logs] == [e.row() | {"wall_time": 0} for e in b.logs]
    assert a.snapshots == b.snapshots


def test_worker_pool_gives_the_same_run(sensors):
    a, b = _run(sensors), _run(sensors, workers=2)
    assert a.snapshots == b.snapshots
    assert a.evaluations == b.evaluations


def test_generation_log_and_snapshots(tmp_path, sensors):
    res = _run(sensors)
    write_generation_log(res.logs, tmp_path / "gen.csv")
    with open(tmp_path / "gen.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == LOG_COLUMNS and len(rows) == len(res.logs)
    assert [int(r["generation"]) for r in rows] == [e.generation for e in res.logs]
    paths = write_snapshots(res.snapshots, tmp_path / "snaps")
    assert len(paths) == len(res.snapshots)
    first = json.loads(paths[0].read_text())
    assert first["generation"] == 0 and len(first["population"]) == 9


def test_config_round_trip():
    cfg = GaConfig(F_s=math.inf, seed=7, per_tip_mutation=True)
    data = json.loads(json.dumps(cfg.to_dict()))
    assert GaConfig.from_dict(data) == cfg


@pytest.mark.parametrize("bad", [{"N_I": 2}, {"P_M": 1.5}, {"F_s": 1e-5}, {"delta_M": 0.0}, {"T": 0},
                                 {"offspring_ratio": 0.0}, {"N_Delta": -1}, {"max_wall_time": 0.0}])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        GaConfig(**bad)


def test_unknown_config_key():
    with pytest.raises(ValueError):
        GaConfig.from_dict({"mutation_rate": 0.1})


def test_transfer_stats():
    tally = _Tally()
    tally.long_histories = [[1.0, 0.5, 0.2, 0.1], [1.0, 0.9, 0.8, 0.7], [1.0, 0.4, 0.05, 0.01]]
    tally.short_records = [{"epochs_run": 1, "final_loss": 0.2, "reached": True},
                           {"epochs_run": 3, "final_loss": 0.4, "reached": False}]
    stats = transfer_stats(tally, 0.3, epochs_long=4)
    # cold: first epoch below 0.3 is 2, never (censored at 4), 2
    assert stats["cold_epochs_median"] == 2.0
    assert stats["warm_epochs_median"] == 2.0
    assert stats["warm_reached_fraction"] == 0.5
    assert transfer_stats(_Tally(), None, 4) == {}


def test_evaluation_dataclass_defaults():
    ev = Evaluation(0.5, np.zeros((1, 3)))
    assert ev.state is None

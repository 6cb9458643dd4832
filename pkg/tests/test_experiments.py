import json
import math

import numpy as np
import pytest

from conftest import rel_l2
from holocrack.experiments import (
    RECORD_SCHEMA,
    build_experiment,
    generate_target,
    quartiles,
    run_ablation,
    run_detect,
    run_epoch_sweep,
    run_forward,
    sweep_table,
    write_run,
)
from holocrack.inverse import Crack
from holocrack.oracle import rms_strain

SMALL = {"max_generations": 2}


def test_sensor_layouts(exp1, exp2, exp3):
    assert len(exp1.sensors) == 10 and len(exp3.sensors) == 10
    assert len(exp2.sensors) == 16
    assert {z.imag for z in exp1.sensors} == {0.8, -0.8}
    side = [z for z in exp2.sensors if abs(z.real) == 0.8 and abs(z.imag) < 0.8]
    assert sorted({round(z.imag, 12) for z in side}) == [-0.4, 0.0, 0.4]


def test_true_cracks(exp1, exp3):
    assert exp1.true_crack.tip_distance(Crack(0.3, -0.3)) < 1e-15
    zc, a, alpha = 0.2 - 0.2j, 0.3, math.pi / 6
    assert exp3.true_crack.tip_plus == pytest.approx(zc + a * np.exp(1j * alpha), abs=1e-15)
    assert exp3.true_crack.tip_minus == pytest.approx(zc - a * np.exp(1j * alpha), abs=1e-15)


def test_search_space_and_material(exp1):
    assert exp1.space.xmax == pytest.approx(0.8) and exp1.space.min_length == pytest.approx(0.1)
    assert exp1.material.lam == exp1.material.mu == exp1.load == 1.0


def test_unknown_experiment():
    with pytest.raises(ValueError):
        build_experiment("IV")


def test_scaled_plate_scales_the_crack():
    spec = build_experiment("III", half_side=2.0)
    base = build_experiment("III")
    assert spec.true_crack.tip_plus == pytest.approx(2 * base.true_crack.tip_plus)


def test_target_is_reproducible(exp1, target1, tmp_path):
    again = generate_target(exp1, tmp_path / "t.json")
    np.testing.assert_array_equal(again.strains, target1.strains)
    assert json.loads((tmp_path / "t.json").read_text())["provenance"]["experiment"] == "I"


def test_noise_level_is_relative_to_rms(exp1, target1):
    noisy = generate_target(exp1, noise_std=0.01, seed=3)
    diff = noisy.strains - target1.strains
    assert np.std(diff) == pytest.approx(0.01 * rms_strain(target1.strains), rel=0.35)
    other = generate_target(exp1, noise_std=0.01, seed=4)
    assert not np.array_equal(noisy.strains, other.strains)


def test_zero_load_target(exp1):
    data = generate_target(exp1.with_load(0.0))
    assert np.all(np.abs(data.strains) < 1e-14)


def test_forward_oracle_matches_target(exp1, target1):
    report = run_forward(exp1)
    assert rel_l2(report["strains"], target1.strains) < 1e-2
    assert report["relative_residual"] < 0.1


def test_forward_grid_avoids_the_crack_line(exp1):
    report = run_forward(exp1, grid=5)
    assert len(report["grid"]["z"]) == 25
    assert np.all(np.isfinite(report["grid"]["syy"]))


def test_forward_unknown_solver(exp1):
    with pytest.raises(ValueError):
        run_forward(exp1, solver="fem")


def _strip(record):
    d = record.to_dict()
    d.pop("wall_time")
    return d


def test_detect_record_is_deterministic(exp1, target1, tmp_path):
    a, res = run_detect(exp1, 5, SMALL, "oracle", sensors=target1, out_dir=tmp_path)
    b, _ = run_detect(exp1, 5, SMALL, "oracle", sensors=target1)
    assert _strip(a) == _strip(b)
    saved = json.loads((tmp_path / "I_seed5_record.json").read_text())
    assert saved["schema"] == RECORD_SCHEMA and saved["seed"] == 5
    assert (tmp_path / "I_seed5_generations.csv").exists()
    assert len(list((tmp_path / "I_seed5_snapshots").iterdir())) == len(res.snapshots)


def test_detect_record_fields(exp1, target1):
    rec, _ = run_detect(exp1, 1, SMALL, "oracle", sensors=target1)
    assert rec.evaluator == "oracle" and rec.termination == "geometric"
    assert rec.status in ("Converged", "NotConverged")
    assert rec.generations_long + rec.generations_short <= 2
    assert rec.tip_error == pytest.approx(Crack.from_dict(rec.best_crack).tip_distance(exp1.true_crack))
    assert rec.config["max_generations"] == 2


def test_record_serialises_infinite_fitness(exp1, target1, tmp_path):
    rec, res = run_detect(exp1, 1, SMALL, "oracle", sensors=target1)
    rec.best_fitness = math.inf
    path = write_run(rec, res, tmp_path) / "I_seed1_record.json"
    assert json.loads(path.read_text())["best_fitness"] == "inf"


def test_epoch_sweep_cells(exp1, target1):
    cells = run_epoch_sweep(exp1, [3, 5], [0, 1], {"max_generations": 1}, "hnn", target1)
    assert [(c.epochs, c.seed) for c in cells] == [(3, 0), (3, 1), (5, 0), (5, 1)]
    for c in cells:
        assert c.generations <= 1 and (c.generations == 1 or not c.censored)
        assert c.evaluations >= 9
    table = sweep_table(cells)
    assert [row["epochs"] for row in table] == [3, 5] and all(row["runs"] == 2 for row in table)


def test_ablation_runs_both_variants(exp1, target1):
    out = run_ablation(exp1, [0], SMALL, "oracle", target1)
    assert out["two_stage"][0].two_stage and not out["single_stage"][0].two_stage


def test_quartiles():
    q = quartiles([1, 2, 3, 4, 5])
    assert q == {"min": 1.0, "q1": 2.0, "median": 3.0, "q3": 4.0, "max": 5.0}

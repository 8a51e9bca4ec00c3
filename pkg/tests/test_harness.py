import csv
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from irs_walra.channel import ChannelProfile
from irs_walra.errors import ConfigError
from irs_walra.harness import (
    CSV_COLUMNS,
    ExperimentResult,
    ScenarioConfig,
    build_scenario,
    campaign_measurements,
    emit_results,
    estimate_campaign,
    load_results,
    preset,
    run_coverage_sweep,
    run_estimation_sweep,
)
from irs_walra.reflection import average_gain, optimize_reflection, random_max_sampling
from irs_walra.codebook import phases_to_values
from irs_walra.measurement import measure_power

DATA = Path(__file__).parent / "data"


def small_config(**kw):
    base = dict(
        N=8,
        M=16,
        K0=2,
        T_p=[32, 64],
        seeds=[0, 1],
        eval_realizations=10,
        restarts=4,
        channel_profile=ChannelProfile(L_g=2, L_r=4),
    )
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.mark.parametrize(
    "kw",
    [
        dict(N=0),
        dict(J=0),
        dict(K0=0),
        dict(T_p=[64, 32]),
        dict(T_p=[32, 32]),
        dict(T_p=[]),
        dict(seeds=[]),
        dict(sigma2=-1.0),
        dict(rho=0.0),
        dict(fidelity="exact"),
        dict(M=4),
        dict(methods=["WALRA", "SDR"]),
        dict(D_policy="BEST"),
        dict(error_policies=[0]),
        dict(channel_profile=ChannelProfile(decay=0.0)),
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        small_config(**kw).validate()


def test_config_dict_round_trip():
    cfg = small_config(K0=[2, 3], D_policy=3)
    back = ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg
    assert back.K == 9 and back.K0_list == [2, 3]
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"N": 4, "bogus": 1})
    partial = ScenarioConfig.from_dict({"channel_profile": {"L_r": 5}}, base=cfg)
    assert partial.channel_profile.L_r == 5 and partial.channel_profile.L_g == 2


def test_presets():
    desk = preset("desk")
    assert (desk.N, desk.M, desk.K, desk.channel_profile.L) == (16, 32, 9, 8)
    assert desk.T_p == [32, 64, 96, 128, 192, 256] and desk.eval_realizations == 100
    paper = preset("paper")
    assert (paper.N, paper.M, paper.channel_profile.L, max(paper.T_p)) == (64, 128, 112, 1000)
    assert [k * k for k in paper.K0_list] == [9, 81]
    paper.validate()
    with pytest.raises(ConfigError):
        preset("lab")


def test_measurement_prefixes_are_consistent():
    cfg = small_config()
    sc = build_scenario(cfg, 0, with_eval=False)
    full = campaign_measurements(cfg, sc)
    short = campaign_measurements(cfg, sc, T_p=32)
    for a, b in zip(full, short):
        np.testing.assert_array_equal(a.head(32).training, b.training)


def test_empty_result_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    emit_results(ExperimentResult(), path)
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert load_results(path.with_suffix(".json")).records == []


def test_emit_errors_carry_path(tmp_path):
    bad = tmp_path / "missing" / "r.csv"
    with pytest.raises(OSError, match="missing"):
        emit_results(ExperimentResult(), bad)
    with pytest.raises(ValueError):
        emit_results(ExperimentResult(), tmp_path / "r.xml", "XML")


@pytest.fixture(scope="module")
def small_runs():
    cfg = small_config()
    return cfg, run_estimation_sweep(cfg), run_coverage_sweep(cfg)


def test_json_round_trip(small_runs, tmp_path):
    _, err, cov = small_runs
    for res in (err, cov):
        path = emit_results(res, tmp_path / "r.json", "JSON")
        back = load_results(path)
        # NaN marks skipped points; compare serialized forms so NaN == NaN
        assert json.dumps(back.sorted_records()) == json.dumps(res.sorted_records())
        assert back.metadata == json.loads(json.dumps(res.metadata))


def test_records_and_aggregates(small_runs):
    cfg, err, cov = small_runs
    for t_p in cfg.T_p:
        for policy in ("D=M", "D=TRUE-RANK", "D=AUTO"):
            vals = [err.values(policy, "error", t_p, seed=s)[0] for s in cfg.seeds]
            assert err.value(policy, "error_mean", t_p) == pytest.approx(np.mean(vals))
            assert err.value(policy, "error_count", t_p) == len(cfg.seeds)
        for m in cfg.methods:
            assert len(cov.values(m, "gain", t_p)) >= len(cfg.seeds)
    assert cov.metadata["config"]["N"] == 8
    assert "wall_time_s" in cov.metadata
    # wall time never enters the records
    assert {r["metric"] for r in cov.records} <= {"gain", "gain_mean", "gain_sem", "gain_count"}


def test_upper_bound_dominates(small_runs):
    cfg, _, cov = small_runs
    for t_p in cfg.T_p:
        ub = cov.value("UB", "gain_mean", t_p)
        for m in cfg.methods:
            v = cov.value(m, "gain_mean", t_p)
            if not math.isnan(v):
                assert v <= ub * 1.01


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _golden(kind):
    cfg = small_config()
    return run_estimation_sweep(cfg) if kind == "error" else run_coverage_sweep(cfg)


@pytest.mark.parametrize("kind", ["error", "coverage"])
def test_golden_csv(kind, tmp_path, small_runs):
    res = small_runs[1] if kind == "error" else small_runs[2]
    out = tmp_path / f"{kind}.csv"
    emit_results(res, out)
    got, ref = _read_csv(out), _read_csv(DATA / f"golden_{kind}.csv")
    assert len(got) == len(ref)
    for g, r in zip(got, ref):
        assert (g["t_p"], g["method"], g["metric"], g["seed"]) == (r["t_p"], r["method"], r["metric"], r["seed"])
        a, b = float(g["value"]), float(r["value"])
        if math.isnan(b):
            assert math.isnan(a)
        else:
            assert abs(a - b) <= 1e-9 * max(abs(b), 1e-300) or a == b


def test_threads_do_not_change_results(small_runs):
    cfg, err, cov = small_runs
    assert json.dumps(run_coverage_sweep(cfg, threads=2).sorted_records()) == json.dumps(cov.sorted_records())
    assert json.dumps(run_estimation_sweep(cfg, threads=2).sorted_records()) == json.dumps(err.sorted_records())


def test_multiple_grid_sizes():
    cfg = small_config(K0=[1, 2], T_p=[32], seeds=[0], error_policies=["AUTO"])
    res = run_estimation_sweep(cfg)
    assert {r["method"] for r in res.records} == {"D=AUTO/K=1", "D=AUTO/K=4"}


def test_true_rank_policy_uses_location_rank():
    cfg = small_config()
    sc = build_scenario(cfg, 0, with_eval=False)
    sets = campaign_measurements(cfg, sc)
    est, _ = estimate_campaign(cfg, sets, "TRUE-RANK", sc.R)
    from irs_walra.channel import numerical_rank

    assert [e.D for e in est] == [numerical_rank(R) for R in sc.R]


def test_rms_rarely_beats_optimized_average():
    cfg = preset("desk")
    wins = 0
    for seed in range(20):
        sc = build_scenario(replace(cfg, eval_realizations=20), seed)
        R_bar = sum(sc.R) / len(sc.R)
        rng = np.random.default_rng(seed)

        def measure(tr):
            V = phases_to_values(tr, 2)
            return np.stack([measure_power(R, V, cfg.ofdm, cfg.J, rng) for R in sc.R])

        v_rms = random_max_sampling(measure, 256, cfg.N, 2, seed)
        v_opt = optimize_reflection(R_bar, 2).v_opt
        wins += average_gain(v_rms, sc.R) <= average_gain(v_opt, sc.R)
    assert wins >= 18


if __name__ == "__main__":
    # regenerate the golden files after an intentional behavior change
    for kind in ("error", "coverage"):
        emit_results(_golden(kind), DATA / f"golden_{kind}.csv")
        (DATA / f"golden_{kind}.json").unlink()

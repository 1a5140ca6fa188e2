import csv
import itertools

import numpy as np
import pytest

from oran_rra.harness.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO, main
from oran_rra.harness.report import (
    ReportError,
    aggregate,
    build_report,
    mean_std,
    ordering_check,
    read_results,
    spearman,
    verdicts,
)

TINY = ["--ttis", "3"]


def _train(out, method="ppo-same", seeds="0,1"):
    return main(["train", "--method", method, "--seed", seeds, "--episodes", "1", "--meta-iterations", "1",
                 "--adapt-episodes", "1", "--out", str(out), *TINY])


def test_train_writes_curve_and_checkpoint_per_seed(tmp_path):
    assert _train(tmp_path) == 0
    for s in (0, 1):
        curve = tmp_path / f"ppo-same_InH_seed{s}_curve.csv"
        assert curve.read_text().startswith("# config_hash=")
        assert (tmp_path / f"ppo-same_InH_seed{s}.ckpt.json").exists()
    first = (tmp_path / "ppo-same_InH_seed0_curve.csv").read_bytes()
    assert _train(tmp_path, seeds="0") == 0
    assert (tmp_path / "ppo-same_InH_seed0_curve.csv").read_bytes() == first


def test_train_baseline_writes_marker(tmp_path):
    assert _train(tmp_path, method="baseline-random", seeds="0") == 0
    assert (tmp_path / "baseline-random.evaluation-only").exists()
    assert not list(tmp_path.glob("*.ckpt.json"))


def test_evaluate_sweep_rows(tmp_path):
    assert _train(tmp_path, method="meta-off", seeds="0") == 0
    ckpt = tmp_path / "meta-off_InH_seed0.ckpt.json"
    rates = "50,100,200,300,400"
    assert main(["evaluate", "--checkpoint", str(ckpt), "--sweep", rates, "--out", str(tmp_path), *TINY]) == 0
    path = tmp_path / "eval_meta-off_InH_heuristic.csv"
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    rows = list(csv.DictReader(lines[1:]))
    assert sum(r["kind"] == "seed" for r in rows) == 5
    assert sum(r["kind"] == "mean" for r in rows) == 5
    assert main(["evaluate", "--checkpoint", str(ckpt), "--sweep", rates, "--out", str(tmp_path), *TINY]) == 0
    assert path.read_text().splitlines() == lines


def test_one_checkpoint_two_scenarios(tmp_path):
    assert _train(tmp_path, seeds="0") == 0
    ckpt = str(tmp_path / "ppo-same_InH_seed0.ckpt.json")
    for scenario in ("uma", "rma"):
        assert main(["evaluate", "--checkpoint", ckpt, "--scenario", scenario, "--sweep", "100",
                     "--out", str(tmp_path), *TINY]) == 0
    assert {p.name for p in tmp_path.glob("eval_*.csv")} == {"eval_ppo-same_UMa_heuristic.csv",
                                                            "eval_ppo-same_RMa_heuristic.csv"}


def test_evaluate_rejects_mismatched_checkpoint(tmp_path, capsys):
    assert _train(tmp_path, seeds="0") == 0
    cfg = tmp_path / "big.yaml"
    cfg.write_text("users_urllc: 6\n")
    code = main(["evaluate", "--checkpoint", str(tmp_path / "ppo-same_InH_seed0.ckpt.json"), "--config", str(cfg),
                 "--out", str(tmp_path), *TINY])
    assert code == EXIT_CONFIG
    assert "does not match" in capsys.readouterr().err


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("los_mode: sometimes\n")
    assert main(["evaluate", "--method", "baseline-random", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["evaluate", "--method", "baseline-random", "--sweep", "1e7", "--out", str(tmp_path), *TINY]) \
        == EXIT_INFEASIBLE
    assert main(["evaluate", "--checkpoint", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_IO
    assert main(["report", "--out", str(tmp_path)]) == EXIT_CONFIG


def _fake_rows(methods, seeds=(0, 1, 2), rates=(50.0, 100.0, 200.0), split="heuristic", scenario="InH"):
    rows = []
    for mi, m in enumerate(methods):
        for s, r in itertools.product(seeds, rates):
            rows.append({"kind": "seed", "method": m, "scenario": scenario, "split_mode": split, "train_seed": s,
                         "eval_seed": 1000, "rate": r, "mean_ee": 2e6 - 1e3 * r - 1e4 * mi + s,
                         "mean_latency": 1e-3 + 1e-5 * r, "max_latency": 2e-3, "mean_reward": 2.0 - 0.1 * mi + 0.01 * s,
                         "hard_violations": 0, "soft_violations": s, "delivered_ratio": 1.0})
    return rows


def _write(path, rows):
    from oran_rra.harness.report import RESULT_FIELDS
    with open(path, "w", newline="") as fh:
        fh.write("# config_hash=abc seed=1000\n")
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def test_report_deterministic_with_ordering_verdict(tmp_path):
    methods = ("ppo-same", "meta-on", "meta-off", "ppo-transfer")
    paths = []
    for m in methods:
        p = tmp_path / f"{m}.csv"
        _write(p, _fake_rows((m,)) if m == "ppo-same" else [
            {**r, "method": m} for r in _fake_rows(methods) if r["method"] == m])
        paths.append(p)
    assert main(["report", *map(str, paths), "--out", str(tmp_path / "a")]) == 0
    assert main(["report", *map(str, paths), "--out", str(tmp_path / "b")]) == 0
    for name in ("report.md", "reward_by_method.csv", "ee_vs_rate.csv", "latency_vs_rate.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    md = (tmp_path / "a" / "report.md").read_text()
    assert md.count("generalization ordering") == 1
    assert "generalization ordering [InH/heuristic]: PASS" in md


def test_read_results_errors(tmp_path):
    with pytest.raises(ReportError):
        read_results([])
    empty = tmp_path / "e.csv"
    _write(empty, [])
    with pytest.raises(ReportError):
        read_results([empty])
    broken = tmp_path / "b.csv"
    broken.write_text("kind,method\nseed,x\n")
    with pytest.raises(ReportError):
        read_results([broken])


def test_aggregate_matches_brute_force():
    rows = _fake_rows(("a", "b"), seeds=(0, 1, 2, 3))
    rng = np.random.default_rng(0)
    for r in rows:
        r["mean_ee"] += rng.normal() * 1e3
    agg = aggregate(rows, ("method", "rate"))
    assert len(agg) == 6
    for a in agg:
        vals = [r["mean_ee"] for r in rows if r["method"] == a["method"] and r["rate"] == a["rate"]]
        n = len(vals)
        mu = sum(vals) / n
        sd = (sum((v - mu) ** 2 for v in vals) / (n - 1)) ** 0.5
        assert a["n"] == n
        assert abs(a["mean_ee_mean"] - mu) <= 1e-12 * abs(mu)
        assert abs(a["mean_ee_std"] - sd) <= 1e-9 * sd


def test_mean_std_and_spearman():
    assert mean_std([3.0]) == (3.0, 0.0)
    with pytest.raises(ReportError):
        mean_std([])
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert np.isnan(spearman([1, 2, 3], [1, 1, 1]))


def test_ordering_check_slack_and_strict_outer():
    order = ("a", "b", "c")
    ok, _ = ordering_check({"a": (1.0, 0.1), "b": (1.05, 0.1), "c": (0.5, 0.0)}, order)
    assert ok
    ok, detail = ordering_check({"a": (1.0, 0.01), "b": (1.5, 0.01), "c": (0.5, 0.0)}, order)
    assert not ok and "FAIL" in detail
    ok, _ = ordering_check({"a": (1.0, 0.5), "b": (1.0, 0.5), "c": (1.0, 0.5)}, order)
    assert not ok


def test_verdict_trends_and_split_comparison():
    rows = _fake_rows(("m",)) + [{**r, "split_mode": "uniform", "mean_ee": r["mean_ee"] - 5e3}
                                 for r in _fake_rows(("m",))]
    lines = verdicts(rows)
    assert any("EE vs load [m/InH/heuristic]" in l and "PASS" in l for l in lines)
    assert any("latency vs load [m/InH/uniform]" in l and "PASS" in l for l in lines)
    assert any(l.startswith("heuristic vs uniform split [m/InH]: PASS") for l in lines)
    md, bundle = build_report(rows)
    assert set(bundle) == {"reward_by_method.csv", "ee_vs_rate.csv", "latency_vs_rate.csv"}
    assert len(bundle["ee_vs_rate.csv"].splitlines()) == 1 + 6

"""Aggregation, trend checks and the markdown/CSV report over evaluation result files."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

RESULT_FIELDS = ("kind", "method", "scenario", "split_mode", "train_seed", "eval_seed", "rate",
                 "mean_ee", "mean_latency", "max_latency", "mean_reward", "hard_violations",
                 "soft_violations", "delivered_ratio")
METRICS = ("mean_ee", "mean_latency", "max_latency", "mean_reward", "hard_violations",
           "soft_violations", "delivered_ratio")
GENERALIZATION_ORDER = ("ppo-same", "meta-on", "meta-off", "ppo-transfer")
TREND_THRESHOLD = 0.8


class ReportError(ValueError):
    """Missing or malformed result input."""


def mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ReportError("cannot aggregate an empty group")
    return float(x.mean()), float(x.std(ddof=1)) if x.size > 1 else 0.0


def stderr(values) -> float:
    x = np.asarray(values, dtype=float)
    return float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0


def spearman(x, y) -> float:
    """Spearman rank correlation; nan when either side is constant."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    return float(spearmanr(x, y).statistic)


def group_rows(rows, keys) -> dict[tuple, list[dict]]:
    out: dict[tuple, list[dict]] = defaultdict(list)
    for r in rows:
        out[tuple(r[k] for k in keys)].append(r)
    return dict(sorted(out.items(), key=lambda kv: tuple(_sort_key(v) for v in kv[0])))


def _sort_key(v):
    return (0, float(v), "") if isinstance(v, (int, float)) else (1, 0.0, str(v))


def aggregate(rows, keys, metrics=METRICS) -> list[dict]:
    """One row per key combination with n, <metric>_mean and <metric>_std."""
    out = []
    for key, group in group_rows(rows, keys).items():
        row = dict(zip(keys, key))
        row["n"] = len(group)
        for m in metrics:
            row[f"{m}_mean"], row[f"{m}_std"] = mean_std([g[m] for g in group])
        out.append(row)
    return out


def seed_means(rows, metric: str) -> np.ndarray:
    """Per training seed average of a metric (averaging over eval seeds and rates)."""
    groups = group_rows(rows, ("train_seed",))
    return np.array([np.mean([r[metric] for r in g]) for g in groups.values()])


def rate_trend(rows, metric: str) -> tuple[float, list[float], list[float]]:
    """Spearman rho of the per-rate mean of ``metric`` against rate."""
    groups = group_rows(rows, ("rate",))
    rates = [k[0] for k in groups]
    means = [float(np.mean([r[metric] for r in g])) for g in groups.values()]
    return spearman(rates, means), rates, means


def ordering_check(stats: dict[str, tuple[float, float]], order=GENERALIZATION_ORDER) -> tuple[bool, str]:
    """Chain ``order[0] >= order[1] >= ...`` on (mean, stderr) pairs: every adjacent gap may be
    negative by at most the stderr of the difference; the outer gap must be strictly positive."""
    parts, ok = [], True
    for a, b in zip(order[:-1], order[1:]):
        (ma, sa), (mb, sb) = stats[a], stats[b]
        slack = float(np.hypot(sa, sb))
        good = ma >= mb - slack
        ok &= good
        parts.append(f"{a} {ma:.4f} >= {b} {mb:.4f} (slack {slack:.4f}): {'ok' if good else 'FAIL'}")
    outer = stats[order[0]][0] > stats[order[-1]][0]
    ok &= outer
    parts.append(f"strict {order[0]} > {order[-1]}: {'ok' if outer else 'FAIL'}")
    return bool(ok), "; ".join(parts)


def read_results(paths) -> tuple[list[dict], list[str]]:
    """Raw per-seed rows of every evaluation file plus their header comments."""
    paths = list(paths)
    if not paths:
        raise ReportError("no result files given")
    rows, headers = [], []
    for p in paths:
        lines = Path(p).read_text().splitlines()
        comments = [ln for ln in lines if ln.startswith("#")]
        body = [ln for ln in lines if not ln.startswith("#")]
        headers.extend(f"{Path(p).name}: {c.lstrip('# ')}" for c in comments)
        reader = csv.DictReader(body)
        missing = set(RESULT_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ReportError(f"{p}: missing columns {sorted(missing)}")
        for i, raw in enumerate(reader):
            if raw["kind"] != "seed":
                continue
            try:
                row = {k: raw[k] for k in ("method", "scenario", "split_mode")}
                row["train_seed"] = int(raw["train_seed"])
                row["eval_seed"] = int(raw["eval_seed"])
                row["rate"] = float(raw["rate"])
                row.update({m: float(raw[m]) for m in METRICS})
            except (TypeError, ValueError) as exc:
                raise ReportError(f"{p}: malformed row {i + 1}: {exc}") from exc
            rows.append(row)
    if not rows:
        raise ReportError("result files contain no per-seed rows")
    return rows, headers


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def verdicts(rows) -> list[str]:
    """Trend-check lines: EE and latency vs load, heuristic vs uniform split, generalization ordering."""
    lines = []
    for (method, scenario, split), g in group_rows(rows, ("method", "scenario", "split_mode")).items():
        if len({r["rate"] for r in g}) < 2:
            continue
        rho_ee, _, _ = rate_trend(g, "mean_ee")
        rho_lat, _, _ = rate_trend(g, "mean_latency")
        lines.append(f"EE vs load [{method}/{scenario}/{split}]: spearman {rho_ee:.3f} -> "
                     f"{'PASS' if rho_ee <= -TREND_THRESHOLD else 'FAIL'} (non-increasing)")
        lines.append(f"latency vs load [{method}/{scenario}/{split}]: spearman {rho_lat:.3f} -> "
                     f"{'PASS' if rho_lat >= TREND_THRESHOLD else 'FAIL'} (non-decreasing)")
    for (method, scenario), g in group_rows(rows, ("method", "scenario")).items():
        by_split = group_rows(g, ("split_mode",))
        if ("heuristic",) not in by_split or ("uniform",) not in by_split:
            continue
        _, rates_h, ee_h = rate_trend(by_split[("heuristic",)], "mean_ee")
        _, rates_u, ee_u = rate_trend(by_split[("uniform",)], "mean_ee")
        uni = dict(zip(rates_u, ee_u))
        shared = [(r, e) for r, e in zip(rates_h, ee_h) if r in uni]
        ok = bool(shared) and all(e > uni[r] for r, e in shared)
        lines.append(f"heuristic vs uniform split [{method}/{scenario}]: "
                     f"{'PASS' if ok else 'FAIL'} at {len(shared)} shared rates")
    for (scenario, split), g in group_rows(rows, ("scenario", "split_mode")).items():
        by_method = group_rows(g, ("method",))
        if not all((m,) in by_method for m in GENERALIZATION_ORDER):
            continue
        stats = {}
        for m in GENERALIZATION_ORDER:
            per_seed = seed_means(by_method[(m,)], "mean_reward")
            stats[m] = (float(per_seed.mean()), stderr(per_seed))
        ok, detail = ordering_check(stats)
        lines.append(f"generalization ordering [{scenario}/{split}]: {'PASS' if ok else 'FAIL'}: {detail}")
    return lines


def build_report(rows, headers=()) -> tuple[str, dict[str, str]]:
    """Markdown text and a {filename: csv text} bundle, one tidy file per figure."""
    summary = []
    for key, g in group_rows(rows, ("method", "scenario", "split_mode")).items():
        rew = seed_means(g, "mean_reward")
        row = dict(zip(("method", "scenario", "split_mode"), key))
        row.update(n_seeds=len(rew), mean_reward=float(rew.mean()), reward_stderr=stderr(rew),
                   mean_ee=float(np.mean([r["mean_ee"] for r in g])),
                   mean_latency=float(np.mean([r["mean_latency"] for r in g])))
        summary.append(row)
    keys = ("method", "scenario", "split_mode", "rate")
    ee = [{**{k: r[k] for k in keys}, "n": r["n"], "mean": r["mean_ee_mean"], "std": r["mean_ee_std"]}
          for r in aggregate(rows, keys, ("mean_ee",))]
    lat = [{**{k: r[k] for k in keys}, "n": r["n"], "mean": r["mean_latency_mean"], "std": r["mean_latency_std"]}
           for r in aggregate(rows, keys, ("mean_latency",))]
    bundle = {"reward_by_method.csv": _csv_text(summary), "ee_vs_rate.csv": _csv_text(ee),
              "latency_vs_rate.csv": _csv_text(lat)}

    md = ["# Evaluation report", ""]
    if headers:
        md += ["## Inputs", ""] + [f"- `{h}`" for h in headers] + [""]
    md += ["## Methods by scenario", "",
           "| method | scenario | split | seeds | reward (mean +- stderr) | EE (Mbit/J) | latency (ms) |",
           "|---|---|---|---|---|---|---|"]
    for r in summary:
        md.append(f"| {r['method']} | {r['scenario']} | {r['split_mode']} | {r['n_seeds']} | "
                  f"{r['mean_reward']:.4f} +- {r['reward_stderr']:.4f} | {r['mean_ee'] / 1e6:.4f} | "
                  f"{r['mean_latency'] * 1e3:.3f} |")
    md += ["", "## EE and latency vs URLLC arrival rate", "",
           "| method | scenario | split | rate (pkt/s) | EE (Mbit/J) | latency (ms) |", "|---|---|---|---|---|---|"]
    for e, l in zip(ee, lat):
        md.append(f"| {e['method']} | {e['scenario']} | {e['split_mode']} | {e['rate']:g} | "
                  f"{e['mean'] / 1e6:.4f} +- {e['std'] / 1e6:.4f} | {l['mean'] * 1e3:.3f} +- {l['std'] * 1e3:.3f} |")
    md += ["", "## Trend checks", ""] + [f"- {v}" for v in verdicts(rows)] + [""]
    return "\n".join(md), bundle


def write_report(paths, out_dir) -> Path:
    rows, headers = read_results(paths)
    md, bundle = build_report(rows, headers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.md").write_text(md)
    for name, text in bundle.items():
        (out / name).write_text(text)
    return out / "report.md"

"""Experiment files: config loading, multi-seed runs, verification and comparison.

A config file is TOML holding the :class:`SimConfig` fields at top level plus
``name``, ``seeds``, ``output_dir`` and optionally ``preset`` (a built-in
preset the file's keys are layered over).
"""
from __future__ import annotations

import json
import math
import re
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import analysis
from .errors import ConfigInvalid, DataError, DetsgradError
from .graph import build_topology
from .presets import presets
from .schedule import validate
from .sim import RunMetrics, SimConfig, broadcast_accounting, run
from .sim.metrics import MetricsFormatError

META_KEYS = ("name", "seeds", "output_dir", "preset")


class ConfigError(DetsgradError):
    """Config could not be parsed or validated; message names the location."""


class ArtifactError(DetsgradError):
    """Run directory missing files or holding malformed ones."""


class ExperimentConfig:
    def __init__(self, sim: SimConfig, name: str = "experiment", seeds: Optional[list[int]] = None,
                 output_dir: str = "runs"):
        self.sim = sim
        self.name = name
        self.seeds = list(seeds) if seeds else [sim.seed]
        self.output_dir = output_dir

    def to_dict(self) -> dict:
        return {"name": self.name, "seeds": self.seeds, "output_dir": self.output_dir,
                **self.sim.model_dump(mode="json")}


def _set_dotted(d: dict, key: str, value):
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
        if not isinstance(d, dict):
            raise ConfigError(f"override {key}: {p} is not a table")
    d[parts[-1]] = value


def parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected KEY=VALUE")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def _merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _locate(text: str, loc) -> str:
    """Best-effort 'line N' for a pydantic error location inside TOML text."""
    if not text:
        return ""
    table, want = "", [str(p) for p in loc if not isinstance(p, int)]
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            table = m.group(1).strip()
            continue
        m = re.match(r"^([A-Za-z0-9_.\-]+)\s*=", s)
        if m:
            full = ".".join(filter(None, [table, m.group(1)]))
            if want and full == ".".join(want[:len(full.split("."))]):
                return f"line {lineno}: "
    return ""


def config_from_dict(raw: dict, text: str = "", overrides=(), check_schedule: bool = True) -> ExperimentConfig:
    raw = dict(raw)
    for item in overrides:
        k, v = parse_override(item) if isinstance(item, str) else item
        if k == "seed":
            raw["seeds"] = [v]
        _set_dotted(raw, k, v)
    meta = {k: raw.pop(k) for k in META_KEYS if k in raw}
    if "preset" in meta:
        table = presets()
        if meta["preset"] not in table:
            raise ConfigError(f"preset: unknown preset {meta['preset']!r}")
        raw = _merge(table[meta["preset"]], raw)
    seeds = meta.get("seeds")
    if seeds is not None:
        if isinstance(seeds, int):
            seeds = [seeds]
        if not (isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds)):
            raise ConfigError("seeds: expected a non-empty list of integers")
        raw.setdefault("seed", seeds[0])
    try:
        sim = SimConfig.model_validate(raw)
    except ValidationError as exc:
        e = exc.errors()[0]
        where = ".".join(str(p) for p in e["loc"]) or "<root>"
        raise ConfigError(f"{_locate(text, e['loc'])}{where}: {e['msg']}") from None
    if check_schedule and sim.algorithm != "centralized_sgd":
        try:
            topo = build_topology(sim.topology)
        except DetsgradError as exc:
            raise ConfigError(f"topology: {exc}") from None
        report = validate(sim.schedule.build(), topo)
        if not report.ok and not sim.override_validation:
            raise ConfigError(f"schedule: {report}")
    return ExperimentConfig(sim, name=meta.get("name", meta.get("preset", "experiment")),
                            seeds=seeds, output_dir=meta.get("output_dir", "runs"))


def load_config(path, overrides=()) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    text = path.read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, text, overrides)


def preset_config(name: str, overrides=()) -> ExperimentConfig:
    return config_from_dict({"preset": name}, overrides=overrides)


# -- running ----------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: Optional[int] = None) -> Path:
    """Run every seed; write per-seed metrics.csv/summary.json and aggregate.json."""
    root = Path(out_dir or cfg.output_dir) / cfg.name
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    summaries = []
    for seed in cfg.seeds:
        sim = cfg.sim.replace(seed=seed, **({"threads": threads} if threads else {}))
        result = run(sim)
        d = root / f"seed_{seed}"
        d.mkdir(exist_ok=True)
        result.metrics.to_csv(d / "metrics.csv")
        summary = result.summary()
        (d / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        summaries.append(summary)
    (root / "aggregate.json").write_text(json.dumps(aggregate(summaries), indent=2, sort_keys=True) + "\n")
    return root


def _stats(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    if not vals:
        return None
    a = np.asarray(vals, dtype=np.float64)
    return {"mean": float(a.mean()), "std": float(a.std(ddof=1)) if len(a) > 1 else 0.0}


def aggregate(summaries: list[dict]) -> dict:
    out = {"seeds": [s["seed"] for s in summaries], "algorithm": summaries[0]["algorithm"]}
    for key in ("consensus_error", "empirical_risk", "avg_grad_norm", "lyapunov"):
        out[key] = _stats([s["final"][key] for s in summaries])
    if summaries[0].get("accuracies"):
        out["mean_accuracy"] = _stats([float(np.mean(s["accuracies"])) for s in summaries])
        out["accuracy_spread"] = _stats([s["accuracy_spread"] for s in summaries])
    if summaries[0].get("broadcasts"):
        out["reduction_percent"] = _stats([s["broadcasts"]["reduction_percent"] for s in summaries])
        out["mean_broadcasts"] = _stats([s["broadcasts"]["mean_total"] for s in summaries])
    return out


# -- reading artifacts --------------------------------------------------------------

def load_run_dir(run_dir) -> dict:
    """Config echo, and per-seed metrics + summaries, from a run directory."""
    root = Path(run_dir)
    cfg_path = root / "config.json"
    if not cfg_path.exists():
        raise ArtifactError(f"{cfg_path}: missing")
    config = json.loads(cfg_path.read_text())
    seeds = {}
    for d in sorted(root.glob("seed_*"), key=lambda p: int(p.name.split("_")[1])):
        csv_path, sum_path = d / "metrics.csv", d / "summary.json"
        for p in (csv_path, sum_path):
            if not p.exists():
                raise ArtifactError(f"{p}: missing")
        try:
            metrics = RunMetrics.from_csv(csv_path)
        except MetricsFormatError as exc:
            raise ArtifactError(f"{csv_path}: {exc}") from None
        seeds[int(d.name.split("_")[1])] = {"metrics": metrics, "summary": json.loads(sum_path.read_text())}
    if not seeds:
        raise ArtifactError(f"{root}: no seed_* directories")
    return {"config": config, "seeds": seeds, "path": root}


def verify_run(run_dir, against=None) -> dict:
    """Property verdicts for a run directory (and optionally a baseline to compare bit-for-bit)."""
    art = load_run_dir(run_dir)
    cfg = art["config"]
    runs = [s["metrics"] for s in art["seeds"].values()]
    algo = cfg.get("algorithm")
    checks = {}
    if algo != "centralized_sgd":
        try:
            checks["consensus_slope"] = analysis.check_consensus_decay(runs, cfg["schedule"]["delta2"])
        except DetsgradError as exc:
            checks["consensus_slope"] = {"pass": False, "reason": str(exc)}
        per = [analysis.check_trigger_soundness(m) for m in runs]
        checks["trigger_soundness"] = {"pass": all(p["pass"] for p in per),
                                       "violations": sum(p["violations"] for p in per),
                                       "max_ratio": max(p["max_ratio"] for p in per)}
        lyap = [analysis.check_lyapunov_trend(m) for m in runs]
        checks["lyapunov_trend"] = {"pass": all(p["pass"] for p in lyap), "per_seed": lyap}
        bc = [analysis.check_broadcasts(m) for m in runs]
        checks["broadcast_accounting"] = {
            "pass": all(b["pass"] for b in bc),
            "reduction_percent": [b["reduction_percent"] for b in bc]}
    inc = [analysis.check_increment_decay(m) for m in runs]
    checks["increment_decay"] = {"pass": all(p["pass"] for p in inc)}
    if against is not None:
        other = load_run_dir(against)
        common = sorted(set(art["seeds"]) & set(other["seeds"]))
        if not common:
            raise ArtifactError("no seeds in common with the comparison run")
        eq = [analysis.check_equivalence(art["seeds"][s]["metrics"], other["seeds"][s]["metrics"])
              for s in common]
        checks["upsilon0_equivalence"] = {"pass": all(e["pass"] for e in eq), "seeds": common}
    report = {"run_dir": str(art["path"]), "algorithm": algo, "checks": checks,
              "pass": all(c["pass"] for c in checks.values())}
    (Path(run_dir) / "verification.json").write_text(json.dumps(report, indent=2, default=_json_default) + "\n")
    return report


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def compare_runs(run_dirs) -> dict:
    """Per-agent accuracy and broadcast table across runs (mean over seeds)."""
    if len(run_dirs) < 2:
        raise ArtifactError("compare needs at least two run directories")
    arts = [load_run_dir(d) for d in run_dirs]
    sizes = {a["seeds"][next(iter(a["seeds"]))]["summary"]["n_agents"] for a in arts
             if a["config"].get("algorithm") != "centralized_sgd"}
    if len(sizes) > 1:
        raise ArtifactError(f"runs disagree on agent count: {sorted(sizes)}")
    topologies = {a["config"].get("topology") if isinstance(a["config"].get("topology"), str)
                  else json.dumps(a["config"].get("topology"), sort_keys=True) for a in arts}
    rows = []
    for a in arts:
        sums = [s["summary"] for s in a["seeds"].values()]
        n = sums[0]["n_agents"]
        name = a["path"].name
        accs = np.array([s["accuracies"] for s in sums], dtype=float) if sums[0].get("accuracies") else None
        bcast = np.array([s["broadcasts"]["totals"] for s in sums], dtype=float) if sums[0].get("broadcasts") else None
        red = float(np.mean([s["broadcasts"]["reduction_percent"] for s in sums])) if bcast is not None else None
        for i in range(n):
            rows.append({"run": name, "algorithm": sums[0]["algorithm"], "agent": i,
                         "accuracy": None if accs is None else float(accs[:, i].mean()),
                         "broadcasts": None if bcast is None else float(bcast[:, i].mean()),
                         "iterations": sums[0]["iterations"], "reduction_percent": red})
    return {"rows": rows, "warnings": ["runs use different topologies"] if len(topologies) > 1 else []}


def format_table(comparison: dict) -> tuple[str, str]:
    """(aligned text, CSV) renderings of a comparison."""
    cols = ["run", "algorithm", "agent", "accuracy", "broadcasts", "iterations", "reduction_percent"]

    def cell(v, c):
        if v is None:
            return "-"
        if c == "accuracy":
            return f"{100 * v:.2f}"
        if c == "reduction_percent":
            return f"{v:.1f}"
        if c == "broadcasts":
            return f"{v:.0f}"
        return str(v)

    body = [[cell(r[c], c) for c in cols] for r in comparison["rows"]]
    widths = [max(len(c), *(len(b[j]) for b in body)) for j, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    for w in comparison["warnings"]:
        lines.append(f"WARNING: {w}")
    csv_lines = [",".join(cols + ["warning"])]
    flag = ";".join(comparison["warnings"])
    csv_lines += [",".join(["" if r[c] is None else repr(r[c]) if isinstance(r[c], float) else str(r[c])
                            for c in cols] + [flag]) for r in comparison["rows"]]
    return "\n".join(lines) + "\n", "\n".join(csv_lines) + "\n"

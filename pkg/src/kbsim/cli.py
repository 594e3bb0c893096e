"""Command-line front end: ``kbsim run``, ``kbsim benchmark``, ``kbsim selftest``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigError
from .lp import benchmark_jd
from .model import ArrivalSchedule, ProblemInstance
from .policies import POLICIES
from .simulator import SimulationConfig, Summary, replicate

FILE_KEYS = {
    "preset", "instance", "schedule", "policies", "reps", "seed", "checkpoints",
    "resolve_cadence", "capacity_mode", "threshold_multiplier",
    # extensions
    "horizon", "capacity_reading", "capacities", "switch_threshold_multiplier", "theta_count",
}
REGRET_COLUMNS = ("policy", "checkpoint", "mean_regret", "stderr")
ALLOCATION_COLUMNS = ("policy", "checkpoint", "type", "resource", "mean_count")


def read_config_file(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    if isinstance(data, dict) and "config" in data and "versions" in data:
        data = data["config"]  # a meta.json from an earlier run
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def load_experiment(data: dict) -> tuple[SimulationConfig, list[str]]:
    """Resolve a config document into a base config plus the policy list."""
    unknown = set(data) - FILE_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    preset = data.get("preset")
    if preset is not None and ("instance" in data or "schedule" in data):
        raise ConfigError("give either 'preset' or 'instance' + 'schedule', not both")
    opts = {}
    for key, field in (("reps", "replications"), ("seed", "base_seed"),
                       ("checkpoints", "checkpoints"), ("resolve_cadence", "resolve_cadence"),
                       ("capacity_mode", "capacity_mode"),
                       ("threshold_multiplier", "threshold_multiplier"),
                       ("switch_threshold_multiplier", "switch_threshold_multiplier"),
                       ("theta_count", "theta_count")):
        if data.get(key) is not None:
            opts[field] = data[key]
    policies = data.get("policies") or ["ulwe"]
    if isinstance(policies, str):
        policies = [p.strip() for p in policies.split(",") if p.strip()]
    bad = [p for p in policies if p not in POLICIES]
    if bad:
        raise ConfigError(f"unknown policies {bad}; choose from {POLICIES}")
    try:
        if preset is not None:
            cfg = SimulationConfig.preset(
                preset, policy=policies[0], horizon=int(data.get("horizon") or 500),
                capacity_reading=data.get("capacity_reading") or "split", **opts)
        else:
            if "instance" not in data or "schedule" not in data:
                raise ConfigError("config needs 'preset' or both 'instance' and 'schedule'")
            if "horizon" in data or "capacity_reading" in data:
                raise ConfigError("'horizon' and 'capacity_reading' only apply to presets")
            inst_data = data["instance"]
            horizon = int(inst_data["horizon"])
            schedule = ArrivalSchedule.from_dict(data["schedule"], horizon)
            instance = ProblemInstance.from_dict(inst_data, tuple(schedule.total_rates()))
            cfg = SimulationConfig(instance, schedule, policy=policies[0], **opts)
        if data.get("capacities") is not None:
            cfg = replace(cfg, instance=cfg.instance.with_capacities(data["capacities"]))
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return cfg, list(policies)


def config_echo(cfg: SimulationConfig, policies: list[str]) -> dict:
    """Fully explicit config document; loading it reproduces the run."""
    return {
        "instance": cfg.instance.to_dict(),
        "schedule": cfg.schedule.to_dict(),
        "policies": policies,
        "reps": cfg.replications,
        "seed": cfg.base_seed,
        "checkpoints": list(cfg.checkpoints),
        "resolve_cadence": cfg.resolve_cadence,
        "capacity_mode": cfg.capacity_mode,
        "threshold_multiplier": cfg.threshold_multiplier,
        "switch_threshold_multiplier": cfg.switch_threshold_multiplier,
        "theta_count": cfg.theta_count,
    }


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def regret_rows(summaries: list[Summary]):
    for s in summaries:
        for t, m, e in zip(s.checkpoints, s.mean_regret, s.stderr):
            yield (s.policy, int(t), _fmt(m), _fmt(e))


def allocation_rows(summaries: list[Summary]):
    for s in summaries:
        alloc = s.mean_allocations
        n = alloc.shape[-1] - 1
        for c, t in enumerate(s.checkpoints):
            for j in range(alloc.shape[1]):
                for i in range(n + 1):
                    yield (s.policy, int(t), j, i if i < n else "reject", _fmt(alloc[c, j, i]))


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _apply_flags(data: dict, args) -> dict:
    data = dict(data)
    if args.preset:
        data.pop("instance", None)
        data.pop("schedule", None)
        data["preset"] = args.preset
    flag_map = {
        "policies": args.policies if hasattr(args, "policies") else None,
        "reps": getattr(args, "reps", None),
        "seed": getattr(args, "seed", None),
        "horizon": args.horizon,
        "capacity_reading": args.capacity_reading,
        "resolve_cadence": getattr(args, "resolve_cadence", None),
        "capacity_mode": getattr(args, "capacity_mode", None),
        "threshold_multiplier": getattr(args, "threshold_multiplier", None),
        "switch_threshold_multiplier": getattr(args, "switch_threshold_multiplier", None),
    }
    for key, value in flag_map.items():
        if value is not None:
            data[key] = value
    if getattr(args, "checkpoints", None):
        data["checkpoints"] = [int(v) for v in args.checkpoints.split(",")]
    if args.capacity:
        data["capacities"] = [float(v) for v in args.capacity.split(",")]
    return data


def _resolve(args) -> tuple[SimulationConfig, list[str]]:
    data = read_config_file(args.config) if args.config else {}
    data = _apply_flags(data, args)
    if not data.get("preset") and "instance" not in data:
        raise ConfigError("no config file and no --preset given")
    return load_experiment(data)


def cmd_run(args) -> int:
    cfg, policies = _resolve(args)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output dir {out}: {exc}") from None
    start = time.perf_counter()
    summaries = []
    for policy in policies:
        s = replicate(replace(cfg, policy=policy))
        summaries.append(s)
        sw = "" if policy != "ulwe" else f"  switch rate {s.switch_rate:.2f}"
        print(f"{policy:8s} regret@{int(s.checkpoints[-1])} = {s.mean_regret[-1]:.3f} "
              f"(se {s.stderr[-1]:.3f}){sw}")
    wall = time.perf_counter() - start
    (out / "regret.csv").write_text(render_csv(REGRET_COLUMNS, regret_rows(summaries)),
                                    encoding="utf-8", newline="")
    (out / "allocations.csv").write_text(
        render_csv(ALLOCATION_COLUMNS, allocation_rows(summaries)), encoding="utf-8", newline="")
    meta = {
        "config": config_echo(cfg, policies),
        "seed": cfg.base_seed,
        "versions": {"kbsim": __version__, "python": platform.python_version(),
                     "numpy": np.__version__},
        "wall_time_s": round(wall, 3),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8",
                                   newline="")
    return 0


def cmd_benchmark(args) -> int:
    cfg, _ = _resolve(args)
    print(_fmt(benchmark_jd(cfg.instance, cfg.schedule, args.period)))
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    return 0 if run_selftest(args.cases, args.seed) else 1


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="JSON experiment file (or a previous meta.json)")
    p.add_argument("--preset", choices=("iid", "adv1", "adv2"))
    p.add_argument("--horizon", type=int, help="preset horizon T (default 500)")
    p.add_argument("--capacity-reading", choices=("split", "each"),
                   help="preset capacities: T/2 per resource (split) or T each")
    p.add_argument("--capacity", help="comma-separated capacities overriding the instance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbsim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run replicated simulations and write CSV summaries")
    _common(run)
    run.add_argument("--policies", help="comma-separated subset of " + ",".join(POLICIES))
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--checkpoints", help="comma-separated periods")
    run.add_argument("--resolve-cadence", type=int)
    run.add_argument("--capacity-mode", choices=("hard", "soft"))
    run.add_argument("--threshold-multiplier", type=float)
    run.add_argument("--switch-threshold-multiplier", type=float)
    run.add_argument("--out", default=".", help="output directory")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("benchmark", help="print the deterministic LP revenue bound")
    _common(bench)
    bench.add_argument("--period", type=int, required=True)
    bench.set_defaults(func=cmd_benchmark)

    st = sub.add_parser("selftest", help="LP-vs-oracle and invariant smoke suites")
    st.add_argument("--cases", type=int, default=1000)
    st.add_argument("--seed", type=int, default=0)
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"kbsim: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        print(f"kbsim: runtime failure: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

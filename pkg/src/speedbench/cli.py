"""``speedbench`` command line: generate suites, run policies, score logs, annotate traces, plot profiles."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from . import __version__
from .annotation import preset, read_speed_trace, virtual_target_speed
from .config import Behavior, Difficulty, config_digest, generate_suite, parse_config, serialize_config, with_behavior
from .errors import ConfigMismatch, EpisodeAborted, MissingLog, SpeedBenchError
from .expert import ExpertParams, load_params, make_policy
from .metrics import MetricConfig, aggregate, report_json, rollup_csv, score_log
from .plot import render_svg
from .sim import TrajectoryLog, run_episode

log = logging.getLogger("speedbench")


def _default_seed() -> int:
    raw = os.environ.get("SPEEDBENCH_SEED")
    return int(raw) if raw not in (None, "") else 0


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    # newline="" keeps bytes identical across platforms
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def load_suite(suite_dir) -> list:
    """Configs in index order when an index exists, otherwise every ``*.xml`` sorted by name."""
    suite_dir = Path(suite_dir)
    index = suite_dir / "index.json"
    if index.exists():
        files = [suite_dir / r["file"] for r in json.loads(index.read_text())["routes"]]
    else:
        files = sorted(suite_dir.glob("*.xml"))
    if not files:
        raise SpeedBenchError(f"no route configs found in {suite_dir}")
    return [parse_config(f.read_text(encoding="utf-8")) for f in files]


# ---- generate

def cmd_generate(args) -> int:
    out = Path(args.out)
    diffs = list(Difficulty) if args.difficulty == "all" else [Difficulty(args.difficulty)]
    speeds = tuple(float(x) for x in args.speeds.split(",")) if args.speeds else None
    entries = []
    for d in diffs:
        cfgs = generate_suite(d, args.count, args.seed, speeds) if speeds else generate_suite(d, args.count, args.seed)
        for cfg in cfgs:
            name = f"{cfg.route_id}.xml"
            _write(out / name, serialize_config(cfg))
            entries.append({"route_id": cfg.route_id, "difficulty": cfg.difficulty.value, "file": name, "digest": config_digest(cfg)})
    index = {"version": __version__, "seed": args.seed, "count": args.count, "difficulty": args.difficulty, "routes": entries}
    _write(out / "index.json", json.dumps(index, indent=2) + "\n")
    print(f"wrote {len(entries)} configs to {out}")
    return 0


# ---- run

def _run_one(job: tuple) -> dict:
    xml, spec, params, replay_text, behavior, out_dir = job
    cfg = parse_config(xml)
    if behavior:
        cfg = with_behavior(cfg, Behavior(behavior))
    replay = TrajectoryLog.from_jsonl(replay_text) if replay_text is not None else None
    policy = make_policy(spec, params, replay)
    path = Path(out_dir) / f"{cfg.route_id}.jsonl"
    rec = {"route_id": cfg.route_id, "log": path.name, "digest": config_digest(cfg)}
    try:
        res = run_episode(cfg, policy)
    except EpisodeAborted as exc:
        if exc.result is not None:
            _write(path, exc.result.log.to_jsonl())
        rec.update(status="aborted", error=str(exc))
        return rec
    _write(path, res.log.to_jsonl())
    rec.update(status="ok", end_reason=res.end_reason, collisions=res.collisions)
    return rec


def _replay_source(spec: str, route_id: str) -> Optional[str]:
    kind, _, arg = spec.partition(":")
    if kind != "replay":
        return None
    if not arg:
        raise SpeedBenchError("replay policy needs a path: replay:<log or logs dir>")
    p = Path(arg)
    if p.is_dir():
        p = p / f"{route_id}.jsonl"
    if not p.exists():
        raise MissingLog([route_id])
    return p.read_text(encoding="utf-8")


def cmd_run(args) -> int:
    cfgs = load_suite(args.suite)
    params = load_params(args.params) if args.params else ExpertParams()
    spec = args.policy.split(":", 1)[0] if args.policy.startswith("replay") else args.policy
    make_policy(spec, params, TrajectoryLog({}, []) if spec == "replay" else None)  # reject bad specs early
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [
        (serialize_config(c), spec, params, _replay_source(args.policy, c.route_id), args.behavior, str(out))
        for c in cfgs
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = [_run_one(j) for j in jobs]
    manifest = {
        "version": __version__,
        "suite": str(Path(args.suite)),
        "policy": args.policy,
        "behavior": args.behavior,
        "seed": _suite_seed(args.suite),
        "out": str(out),
        "routes": records,
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    bad = [r for r in records if r["status"] != "ok"]
    for r in bad:
        print(f"{r['route_id']}: {r['status']}: {r.get('error', '')}", file=sys.stderr)
    print(f"ran {len(records)} episodes ({len(bad)} aborted) -> {out}")
    return 1 if bad else 0


def _suite_seed(suite_dir) -> Optional[int]:
    index = Path(suite_dir) / "index.json"
    return json.loads(index.read_text()).get("seed") if index.exists() else None


# ---- score

def cmd_score(args) -> int:
    cfgs = load_suite(args.suite)
    logs_dir = Path(args.logs)
    missing = [c.route_id for c in cfgs if not (logs_dir / f"{c.route_id}.jsonl").exists()]
    if missing:
        raise MissingLog(missing)
    mcfg = MetricConfig(alpha=args.alpha, epsilon=args.epsilon, softening=args.softening)
    reports = []
    for cfg in cfgs:
        tlog = TrajectoryLog.from_jsonl((logs_dir / f"{cfg.route_id}.jsonl").read_text(encoding="utf-8"))
        digest = tlog.meta.get("config_digest")
        if digest != config_digest(cfg) and not _digest_matches_any_behavior(cfg, digest):
            raise ConfigMismatch(f"{cfg.route_id}: log was produced from a different config")
        reports.append(score_log(tlog, cfg, mcfg))
    out = Path(args.out) if args.out else logs_dir / "scores"
    for r in reports:
        _write(out / "routes" / f"{r.route_id}.json", json.dumps(r.to_dict(), indent=2) + "\n")
    rollup = aggregate(reports)
    _write(out / "report.json", report_json(reports, rollup))
    csv_text = rollup_csv(rollup, args.label)
    _write(out / "rollup.csv", csv_text)
    sys.stdout.write(csv_text)
    return 0


def _digest_matches_any_behavior(cfg, digest) -> bool:
    # runs with --behavior rewrite the scenario behavior; the rest of the config must still match
    if not cfg.scenarios:
        return False
    return any(config_digest(with_behavior(cfg, b)) == digest for b in Behavior)


# ---- annotate / plot

def cmd_annotate(args) -> int:
    trace = read_speed_trace(args.input)
    ann = virtual_target_speed(trace, preset(args.preset, args.seed), args.trace_index)
    text = ann.to_csv()
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_plot(args) -> int:
    tlog = TrajectoryLog.from_jsonl(Path(args.log).read_text(encoding="utf-8"))
    cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    svg = render_svg(tlog, cfg.plan, title=args.title or cfg.route_id)
    _write(Path(args.out), svg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="speedbench", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a route-config suite")
    g.add_argument("--difficulty", choices=[d.value for d in Difficulty] + ["all"], default="all")
    g.add_argument("--count", type=int, default=16)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--speeds", help="comma-separated target-speed set (m/s)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run a policy on every route of a suite")
    r.add_argument("suite")
    r.add_argument("--policy", default="expert", help="expert | inert | nolane | constant:<v> | replay:<log or dir>")
    r.add_argument("--behavior", choices=[b.value for b in Behavior], help="override every scenario's commanded behavior")
    r.add_argument("--params", help="expert parameter file (key=value lines)")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="score logs against their suite")
    s.add_argument("logs")
    s.add_argument("--suite", required=True)
    s.add_argument("--alpha", type=float, default=3.0)
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--softening", choices=["full", "half", "off"], default="full")
    s.add_argument("--label", default="run")
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)

    a = sub.add_parser("annotate", help="virtual target speeds for a speed trace")
    a.add_argument("input", help="trajectory log (.jsonl) or CSV with a 'v' column")
    a.add_argument("--preset", choices=["long", "short"], default="long")
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--trace-index", type=int, default=0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_annotate)

    pl = sub.add_parser("plot", help="speed profile SVG for one log")
    pl.add_argument("log")
    pl.add_argument("--config", required=True)
    pl.add_argument("--title")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "seed", 0) is None:
        args.seed = _default_seed()
    try:
        return args.func(args)
    except MissingLog as exc:
        print(f"error: missing logs for {len(exc.route_ids)} route(s): {', '.join(exc.route_ids)}", file=sys.stderr)
        return 2
    except (SpeedBenchError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

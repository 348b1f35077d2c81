"""Command-line entry point: ``hybridbft run|sweep|check``.

Every flag can also come from an environment variable named
``HYBRIDBFT_<FLAG>`` (upper case, dashes as underscores), e.g.
``HYBRIDBFT_SEED=7``. Flags given on the command line win.

Exit codes: 0 success, 1 a property was violated, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import metrics, oracle, suites
from .sim.config import ConfigError, ScenarioConfig, apply_override, load_config
from .sim.scenario import run_scenario

ENV_PREFIX = "HYBRIDBFT_"
EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


def _env(flag: str, default=None):
    return os.environ.get(ENV_PREFIX + flag.upper().replace("-", "_"), default)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridbft", description="Hybrid-ordering Multi-BFT simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one scenario and write metrics plus verdicts")
    run.add_argument("--config", default=_env("config"), help="scenario YAML file")
    run.add_argument("--seed", type=int, default=_env("seed"))
    run.add_argument("--out", default=_env("out", "out"), help="output directory")
    run.add_argument("--mode", choices=("orthrus", "global_all"), default=_env("mode"))
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override one config key (repeatable)")

    sweep = sub.add_parser("sweep", help="cross product of config values over K seeds")
    sweep.add_argument("--config", default=_env("config"))
    sweep.add_argument("--vary", action="append", default=None, metavar="KEY=V1,V2,...",
                       help="values for one key (repeatable; runs take the cross product)")
    sweep.add_argument("--seeds", type=int, default=_env("seeds", "1"))
    sweep.add_argument("--seed", type=int, default=_env("seed"), help="base seed; run k uses seed+k")
    sweep.add_argument("--mode", choices=("orthrus", "global_all"), default=_env("mode"))
    sweep.add_argument("--out", default=_env("out", "sweep_out"))
    sweep.add_argument("--jobs", type=int, default=_env("jobs", "1"), help="worker processes")

    check = sub.add_parser("check", help="run the property suites")
    check.add_argument("--suite", choices=suites.SUITES + ("all",), default=_env("suite", "all"))
    check.add_argument("--seeds", type=int, default=_env("seeds", "10"))
    check.add_argument("--seed", type=int, default=_env("seed", "0"), help="base seed")
    return p


def _load(args) -> ScenarioConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.run.seed = int(args.seed)
    if args.mode:
        cfg.system.mode = args.mode
    return cfg


def _split_assignment(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), value.strip()


def cmd_run(args) -> int:
    cfg = _load(args)
    for item in args.set:
        apply_override(cfg, *_split_assignment(item))
    cfg.validate()
    out = Path(args.out)
    result = run_scenario(cfg)
    metrics.report(result, out, cfg.run.bucket_s)
    v = suites.evaluate(result)
    oracle.write_verdicts(out / "verdicts.json", v)
    (out / "config.json").write_text(json.dumps(result.config, sort_keys=True, indent=2) + "\n")
    ok = oracle.all_pass(v)
    failed = [name for name, item in v.items() if not item["pass"]]
    print(f"seed={result.seed} mode={result.mode} confirmed="
          f"{sum(1 for r in result.times.values() if r.client_confirm(result.f) is not None)}/"
          f"{len(result.times)} mean_latency_ms={metrics.mean_latency_ms(result):.3f} "
          f"verdicts={'pass' if ok else 'FAIL ' + ','.join(failed)} out={out}")
    return EXIT_OK if ok else EXIT_VIOLATION


def throughput_tps(result) -> float:
    confirms = [r.client_confirm(result.f) for r in result.times.values()]
    confirms = [t for t in confirms if t is not None]
    if not confirms:
        return 0.0
    start = min(r.submit for r in result.times.values())
    span = max(confirms) - start
    return len(confirms) / (span / 1e9) if span > 0 else 0.0


def _sweep_one(job) -> dict:
    cfg, point, seed = job
    result = run_scenario(cfg, seed=seed)
    v = suites.evaluate(result)
    row = dict(point)
    row.update({
        "seed": seed,
        "mean_latency_ms": metrics.mean_latency_ms(result),
        "payment_latency_ms": metrics.mean_latency_ms(result, "payment"),
        "contract_latency_ms": metrics.mean_latency_ms(result, "contract"),
        "throughput_tps": throughput_tps(result),
        "pass": oracle.all_pass(v),
    })
    return row


def sweep_jobs(cfg: ScenarioConfig, vary: list, seeds: int) -> list:
    """(config, {key: text}, seed) for the cross product; seeds are base+k for k < seeds."""
    axes = []
    for item in vary:
        key, values = _split_assignment(item)
        texts = [v.strip() for v in values.split(",") if v.strip()]
        if not texts:
            raise ConfigError(f"no values given for {key}")
        axes.append((key, texts))
    jobs = []
    for combo in itertools.product(*[texts for _, texts in axes]):
        point = {key: text for (key, _), text in zip(axes, combo)}
        c = cfg.copy()
        for key, text in point.items():
            apply_override(c, key, text)
        c.validate()
        for k in range(seeds):
            jobs.append((c, point, cfg.run.seed + k))
    return jobs


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "pass" if x else "fail"
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if not args.vary:
        raise ConfigError("--vary KEY=V1,V2,... is required")
    if args.seeds < 1 or args.jobs < 1:
        raise ConfigError("--seeds and --jobs must be >= 1")
    jobs = sweep_jobs(cfg, args.vary, args.seeds)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = list(rows[0].keys())
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])
    bad = sum(1 for r in rows if not r["pass"])
    print(f"{len(rows)} runs, {bad} with violations -> {out / 'sweep.csv'}")
    return EXIT_OK if bad == 0 else EXIT_VIOLATION


def cmd_check(args) -> int:
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    names = suites.SUITES if args.suite == "all" else (args.suite,)
    failures = 0
    for name in names:
        t0 = time.perf_counter()
        count = 0
        for label, picked, ok in suites.run_suite(name, args.seeds, args.seed):
            count += 1
            if not ok:
                failures += 1
                bad = {c: item["counterexamples"][:3] for c, item in picked.items() if not item["pass"]}
                print(f"FAIL {label}: {json.dumps(bad, sort_keys=True)}")
        print(f"{name}: {count} scenarios in {time.perf_counter() - t0:.1f}s")
    print("all properties hold" if failures == 0 else f"{failures} scenario(s) violated a property")
    return EXIT_OK if failures == 0 else EXIT_VIOLATION


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "check": cmd_check}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"hybridbft: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

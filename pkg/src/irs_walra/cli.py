"""Command line entry point.

Exit status: 0 on success, 1 on invalid input or configuration, 2 on
runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .channel import generate_bs_irs, generate_irs_rx, cascade
from .errors import WalraError
from .harness import (
    METHODS,
    POLICIES,
    ScenarioConfig,
    build_scenario,
    campaign_measurements,
    emit_results,
    estimate_campaign,
    preset,
    run_coverage_sweep,
    run_estimation_sweep,
)
from .measurement import MeasurementSet
from .reflection import optimize_reflection
from .serialize import array_from_json, array_to_json, dump, load

log = logging.getLogger("irs_walra")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON file with ScenarioConfig fields (applied over the preset)")
    p.add_argument("--seed", type=int, help="base seed; the run uses seeds seed, seed+1, ...")
    p.add_argument("--out", help="output path")
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: CPU count)")
    p.add_argument("--dry-run", action="store_true", help="print the resolved configuration and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="irs-walra", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", parents=[common], help="estimate autocorrelation matrices from a measurement file")
    p.add_argument("measurements", help="file written by gen-measurements")
    p.add_argument("--tp", type=int, help="use only the first TP measurements")
    p.add_argument("--location", type=int, help="estimate a single location index")
    p.add_argument("--D", dest="D", help=f"rank policy: {', '.join(POLICIES)} or an integer")

    sub.add_parser("sweep-error", parents=[common], help="estimation error versus T_p for each rank policy")

    p = sub.add_parser("sweep-coverage", parents=[common], help="average channel gain versus T_p for each method")
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")

    sub.add_parser("gen-channels", parents=[common], help="write the cascaded channels of one scenario")

    p = sub.add_parser("gen-measurements", parents=[common], help="write power measurements of one scenario")
    p.add_argument("--tp", type=int, help="number of training reflections (default: largest T_p)")

    p = sub.add_parser("optimize", parents=[common], help="optimize a reflection vector for a stored matrix")
    p.add_argument("matrix", help="JSON file holding 'R' (or 'R_avg') as written by estimate")
    p.add_argument("--b", type=int, help="phase bits (default: from the file or config)")
    p.add_argument("--restarts", type=int, default=16)
    return parser


def resolve_config(args) -> ScenarioConfig:
    cfg = preset(args.preset)
    if args.config:
        data = load(args.config)
        if not isinstance(data, dict):
            raise WalraError(f"{args.config}: expected a JSON object")
        cfg = ScenarioConfig.from_dict(data, base=cfg)
    if args.seed is not None:
        cfg.seeds = [args.seed + i for i in range(len(cfg.seeds))]
    cfg.validate()
    return cfg


def _parse_policy(text):
    if text is None:
        return None
    if text.upper() in ("AUTO", "M", "TRUE-RANK"):
        return text.upper()
    try:
        return int(text)
    except ValueError:
        raise WalraError(f"invalid rank policy {text!r}") from None


def _write(obj, out):
    if out:
        dump(obj, out)
    else:
        json.dump(obj, sys.stdout, indent=1)
        sys.stdout.write("\n")


def cmd_estimate(args, cfg):
    data = load(args.measurements)
    sets = [MeasurementSet.from_json(d) for d in data["sets"]]
    if not sets:
        raise WalraError("measurement file holds no locations")
    for ms in sets:
        if ms.ofdm.N != cfg.N and args.config:
            raise WalraError(f"dimension mismatch: measurements have N={ms.ofdm.N} but the config has N={cfg.N}")
    o = sets[0].ofdm
    cfg = replace(cfg, N=o.N, M=o.M, b=o.b, P0=o.P0, sigma2=o.sigma2)
    if args.tp:
        if args.tp > sets[0].T_p:
            raise WalraError(f"--tp {args.tp} exceeds the {sets[0].T_p} recorded measurements")
        sets = [s.head(args.tp) for s in sets]
    if args.location is not None:
        sets = [s for s in sets if s.location_index == args.location]
        if not sets:
            raise WalraError(f"no measurements for location {args.location}")
    policy = _parse_policy(args.D) or cfg.D_policy
    if policy == "TRUE-RANK":
        raise WalraError("TRUE-RANK needs the true channels and is only available inside sweeps")
    est, R_avg = estimate_campaign(cfg, sets, policy)
    _write(
        {
            "b": sets[0].ofdm.b,
            "T_p": sets[0].T_p,
            "policy": policy,
            "estimates": [e.to_json() for e in est],
            "R_avg": array_to_json(R_avg),
        },
        args.out,
    )


def cmd_sweep(args, cfg, kind):
    threads = args.threads or os.cpu_count() or 1
    if kind == "error":
        result = run_estimation_sweep(cfg, threads=threads)
    else:
        methods = args.methods.split(",") if args.methods else None
        result = run_coverage_sweep(cfg, methods=methods, threads=threads)
    out = args.out or f"{kind}.csv"
    sidecar = emit_results(result, out, "JSON" if out.endswith(".json") else "CSV")
    log.info("wrote %s (sidecar %s)", out, sidecar)


def cmd_gen_channels(args, cfg):
    seed = cfg.seeds[0]
    prof = cfg.channel_profile
    g = generate_bs_irs(seed, prof, cfg.N)
    locations = []
    for k in range(cfg.K):
        r = generate_irs_rx(seed, k, prof, cfg.N)
        ch = cascade(g, r)
        locations.append({"k": k, "irs_rx": r.to_json(), "cascaded": ch.to_json()})
    _write({"seed": seed, "config": cfg.to_dict(), "bs_irs": g.to_json(), "locations": locations}, args.out)


def cmd_gen_measurements(args, cfg):
    seed = cfg.seeds[0]
    sc = build_scenario(cfg, seed, with_eval=False)
    sets = campaign_measurements(cfg, sc)
    if args.tp:
        if args.tp > sets[0].T_p:
            raise WalraError(f"--tp {args.tp} exceeds the largest configured T_p {sets[0].T_p}")
        sets = [s.head(args.tp) for s in sets]
    _write({"seed": seed, "config": cfg.to_dict(), "sets": [s.to_json() for s in sets]}, args.out)


def cmd_optimize(args, cfg):
    data = load(args.matrix)
    key = "R_avg" if "R_avg" in data else "R"
    if key not in data:
        raise WalraError(f"{args.matrix}: no 'R' or 'R_avg' entry")
    R = array_from_json(data[key])
    b = args.b or data.get("b") or cfg.b
    report = optimize_reflection(R, int(b), args.restarts, cfg.seeds[0])
    _write(report.to_json(), args.out)
    print(report.v_opt.to_csv(), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.dry_run:
            json.dump(cfg.to_dict(), sys.stdout, indent=1)
            sys.stdout.write("\n")
            return 0
        if args.command == "estimate":
            cmd_estimate(args, cfg)
        elif args.command == "sweep-error":
            cmd_sweep(args, cfg, "error")
        elif args.command == "sweep-coverage":
            cmd_sweep(args, cfg, "coverage")
        elif args.command == "gen-channels":
            cmd_gen_channels(args, cfg)
        elif args.command == "gen-measurements":
            cmd_gen_measurements(args, cfg)
        elif args.command == "optimize":
            cmd_optimize(args, cfg)
    except (WalraError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``oswitch`` command line: simulate, sweep, gen-traces, audit, export-stats."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

log = logging.getLogger("oswitch")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


class CommandError(RuntimeError):
    """Runtime failure attributed to one module."""

    def __init__(self, module: str, message: str):
        super().__init__(message)
        self.module = module


def _margins(text: str) -> List[float]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            m = float(part)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {part!r}") from None
        if not 0 <= m < 1:
            raise argparse.ArgumentTypeError(f"margin {m} outside [0, 1)")
        out.append(m)
    if not out:
        raise argparse.ArgumentTypeError("empty margin list")
    return out


def _tariff(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("tariff must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oswitch", description=(
        "Outlet-level PV/grid switching simulator and office consumption audit."))
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("simulate", help="run one scenario and write report, summary and event log")
    s.add_argument("--scenario", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=int)

    s = sub.add_parser("sweep", help="rerun a fixed-margin policy over several margins")
    s.add_argument("--scenario", required=True, type=Path)
    s.add_argument("--margins", required=True, type=_margins, help="comma-separated fractions, each < 1")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=int)

    s = sub.add_parser("gen-traces", help="write synthetic outlet and PV traces as CSV")
    s.add_argument("--spec", required=True, type=Path, help="scenario file or bare trace spec (TOML)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, type=Path)

    s = sub.add_parser("audit", help="weekly profile, baseline and reduction potential of metered lines")
    s.add_argument("--traces", required=True, type=Path, help="directory of history or outlet trace CSVs")
    s.add_argument("--registry", type=Path, help="device registry CSV with interruptible flags")
    s.add_argument("--schedule", required=True, type=Path, help="weekday,open_hour,close_hour CSV")
    s.add_argument("--tariff", type=_tariff, default=None, help="currency per kWh (default 0.20)")
    s.add_argument("--out", required=True, type=Path)

    s = sub.add_parser("export-stats", help="write the warm-up slot statistics of a scenario")
    s.add_argument("--scenario", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path, help="output CSV path")
    s.add_argument("--seed", type=int)
    return p


# --- commands ----------------------------------------------------------------

def _load(path: Path, seed: Optional[int]):
    from .sim.scenario import ScenarioError, load_scenario
    from .sim.traces import TraceError
    try:
        return load_scenario(path, seed)
    except FileNotFoundError as exc:
        raise CommandError("scenario", str(exc)) from None
    except (ScenarioError, ValueError, TypeError, KeyError) as exc:
        module = "traces" if isinstance(exc, TraceError) else "scenario"
        raise CommandError(module, f"malformed scenario {path}: {exc}") from None


def cmd_simulate(args) -> int:
    from .sim import run
    sc = _load(args.scenario, args.seed)
    res = run(sc)
    paths = res.save(args.out)
    print(res.report.summary())
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return 0


def cmd_sweep(args) -> int:
    from .policy import has_fixed_margin, policy_name
    from .sim.engine import sweep, write_sweep
    sc = _load(args.scenario, args.seed)
    if not has_fixed_margin(sc.policy):
        raise CommandError("policy", f"{policy_name(sc.policy)} sets its own margin; sweep needs "
                                     "naive or a static policy")
    rows = sweep(sc, args.margins)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        write_sweep(rows, fh)
    for r in rows:
        print(f"margin {r.margin:.2f}  saving {r.saving_percent:6.2f} %  errors {r.error_count}")
    return 0


def cmd_gen_traces(args) -> int:
    from .sim.scenario import read_toml
    from .sim.traces import DAY, generate_traces, write_traces
    if not args.spec.is_file():
        raise CommandError("traces", f"trace spec not found: {args.spec}")
    try:
        doc = read_toml(args.spec)
    except Exception as exc:  # tomli/tomllib decode errors share no public base
        raise CommandError("traces", f"malformed trace spec {args.spec}: {exc}") from None
    if "traces" in doc:
        run = doc.get("run", {})
        total = int(run.get("warmup_days", 7)) * DAY + float(run.get("duration_s", DAY))
        spec = {"days": int(-(-total // DAY)), "resolution_s": float(run.get("resolution_s", 1.0)),
                "outlets": doc["traces"].get("outlets", []), "pv": doc["traces"].get("pv", {})}
        seed = int(run.get("seed", 0))
    else:
        spec, seed = doc, int(doc.get("seed", 0))
    if args.seed is not None:
        seed = args.seed
    try:
        traces = generate_traces(spec, seed)
    except (ValueError, KeyError, TypeError) as exc:
        raise CommandError("traces", str(exc)) from None
    paths = write_traces(traces, args.out)
    print(f"{traces.n_outlets} outlets, {traces.duration:.0f} s -> {paths['outlets']}, {paths['pv']}")
    return 0


def cmd_audit(args) -> int:
    from .audit import DEFAULT_TARIFF, AuditError, ClosingSchedule, audit, read_lines
    from .gateway import DeviceRegistry
    if not args.traces.is_dir():
        raise CommandError("audit", f"trace directory not found: {args.traces}")
    files = sorted(args.traces.glob("*.csv"))
    if not files:
        raise CommandError("audit", f"no CSV files in {args.traces}")
    try:
        lines = {}
        for f in files:
            for name, trace in read_lines(f).items():
                key = name if len(files) == 1 else f"{f.stem}:{name}"
                lines[key] = trace
        if not args.schedule.is_file():
            raise CommandError("audit", f"schedule file not found: {args.schedule}")
        schedule = ClosingSchedule.read_csv(args.schedule)
        flags = {}
        if args.registry is not None:
            if not args.registry.is_file():
                raise CommandError("gateway", f"registry file not found: {args.registry}")
            registry = DeviceRegistry.read(args.registry)
            for key in lines:
                dev = registry.lookup(key.split(":")[-1])
                if dev is None:
                    log.warning("line %s is not in the registry; treated as non-interruptible", key)
                flags[key] = bool(dev and dev.interruptible)
        report = audit(lines, schedule, flags,
                       DEFAULT_TARIFF if args.tariff is None else args.tariff)
    except AuditError as exc:
        raise CommandError("audit", str(exc)) from None
    except ValueError as exc:
        raise CommandError("audit", str(exc)) from None
    report.save(args.out)
    print(report.summary(), end="")
    return 0


def cmd_export_stats(args) -> int:
    from .sim import warmup_statistics
    sc = _load(args.scenario, args.seed)
    stats = warmup_statistics(sc)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        stats.write_csv(fh)
    return 0


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "gen-traces": cmd_gen_traces,
            "audit": cmd_audit, "export-stats": cmd_export_stats}


def _setup_logging() -> None:
    level = os.environ.get("OSWITCH_LOG", "warn").strip().lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except CommandError as exc:
        print(f"oswitch: {exc.module}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"oswitch: io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

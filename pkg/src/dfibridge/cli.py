"""Command-line front end: ``run``, ``train``, ``codec`` and ``stats``.

Exit codes: 0 clean, 1 usage or config error, 2 errors detected during the
run (decode, slot, timing, illegal command), 3 training did not converge.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .cmdword import (CmdWordError, decode, encode, format_command, parse_command, parse_stream,
                      read_binary, render_stream, write_binary)
from .config import load_scenario
from .sim import ScenarioInvalid, report_from_trace
from .trace import iter_file

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUN_ERRORS = 2
EXIT_NO_CONVERGENCE = 3

VERIFY_BURSTS = 1000


class UsageError(Exception):
    pass


def _diagnostics(config: str, exc: ScenarioInvalid) -> list[str]:
    return [f"{config}: {f}: {m}" if f else f"{config}: {m}" for f, m in exc.errors]


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


# -- rendering --------------------------------------------------------------


def pretty_run(report: dict) -> str:
    width = max(map(len, report))
    lines = []
    for k, v in report.items():
        if isinstance(v, float):
            v = f"{v:.6f}"
        lines.append(f"{k:<{width}}  {v}")
    return "\n".join(lines) + "\n"


def pretty_train(report: dict) -> str:
    out = []
    init = report["init"]
    status = "ready" if init["ready"] else "FAILED"
    steps = ", ".join(f"{s['step']}={s['status']}" for s in init["steps"])
    out.append(f"init: {status} after {init['attempts']} attempt(s) [{steps}]")
    for name in ("read", "write"):
        tr = report[name]
        if tr is None:
            out.append(f"{name}: skipped")
            continue
        out.append(f"{name}: {'converged' if tr['converged'] else 'NOT converged'}")
        out.append("  lane  window      tap  margin")
        for ln in tr["lanes"]:
            win = "-" if ln["pass_window"] is None else "[{}, {}]".format(*ln["pass_window"])
            out.append(f"  {ln['lane']:>4}  {win:<10}  {ln['chosen_tap']:>3}  {ln['margin_taps']:>6}")
    if report["verify_ratio"] is not None:
        out.append(f"verify: {report['verify_ratio']:.6f} over {report['verify_bursts']} bursts")
    if report["failed_lanes"]:
        out.append(f"no eye: {report['failed_lanes']}")
    return "\n".join(out) + "\n"


# -- jobs (run in worker processes when --jobs > 1) ----------------------------


def _write(path: Path | None, text: str) -> None:
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def run_job(config: str, seed: int | None, trace_out: str | None,
            report_out: str | None) -> tuple[int, str, dict | None, list[str]]:
    """Execute one ``run`` scenario; returns (exit code, report path or "", report, messages)."""
    try:
        sc = load_scenario(config)
    except ScenarioInvalid as exc:
        return EXIT_USAGE, "", None, _diagnostics(config, exc)
    if seed is not None:
        sc.seed = seed
    trace_path = Path(trace_out) if trace_out else sc.trace_out
    report_path = Path(report_out) if report_out else sc.report_out
    sim = sc.build(preinit=True, trace=trace_path is not None)
    rep = sim.run()
    report = rep.to_dict()
    if trace_path is not None:
        _write(trace_path, sim.trace.dumps())
    _write(report_path, dumps_report(report))
    msgs = []
    code = EXIT_OK
    if rep.run_errors:
        code = EXIT_RUN_ERRORS
        msgs.append(f"{config}: run detected errors: "
                    + ", ".join(f"{k}={report[k]}" for k in RUN_ERROR_KEYS if report[k]))
    return code, str(report_path or ""), report, msgs


RUN_ERROR_KEYS = ("decode_errors", "slot_errors", "capture_misses", "timing_violations",
                  "illegal_commands", "unknown_opcodes", "phy_errors")


def train_job(config: str, seed: int | None, trace_out: str | None,
              report_out: str | None) -> tuple[int, str, dict | None, list[str]]:
    from .training import Firmware, InitTimeout, NoEyeFound

    try:
        sc = load_scenario(config)
    except ScenarioInvalid as exc:
        return EXIT_USAGE, "", None, _diagnostics(config, exc)
    if seed is not None:
        sc.seed = seed
    trace_path = Path(trace_out) if trace_out else sc.trace_out
    report_path = Path(report_out) if report_out else sc.report_out
    sim = sc.build(preinit=False, trace=trace_path is not None)
    fw = Firmware(sim.bus)
    report: dict = {"init": None, "read": None, "write": None, "verify_bursts": VERIFY_BURSTS,
                    "verify_ratio": None, "converged": False, "failed_lanes": {}, "run": None}
    msgs: list[str] = []
    code = EXIT_OK
    try:
        report["init"] = fw.initialize_device().to_dict()
    except InitTimeout as exc:
        report["init"] = exc.report.to_dict()
        msgs.append(f"{config}: {exc}")
        code = EXIT_NO_CONVERGENCE
    if code == EXIT_OK:
        for name, routine in (("read", fw.read_training), ("write", fw.write_leveling)):
            try:
                report[name] = routine().to_dict()
            except NoEyeFound as exc:
                report[name] = exc.report.to_dict()
                report["failed_lanes"][name] = exc.lanes
                msgs.append(f"{config}: no eye found on {name} lanes "
                            + ", ".join(map(str, exc.lanes)))
                code = EXIT_NO_CONVERGENCE
                break
        report["converged"] = code == EXIT_OK
        if code == EXIT_OK:
            report["verify_ratio"] = fw.verify_link(VERIFY_BURSTS, sc.seed)
            if report["verify_ratio"] != 1.0:
                msgs.append(f"{config}: verify ratio {report['verify_ratio']}")
                code = EXIT_RUN_ERRORS
    run = sim.report()
    report["run"] = run.to_dict()
    if code == EXIT_OK and run.run_errors:
        msgs.append(f"{config}: errors detected while training")
        code = EXIT_RUN_ERRORS
    if trace_path is not None:
        _write(trace_path, sim.trace.dumps())
    _write(report_path, dumps_report(report))
    return code, str(report_path or ""), report, msgs


# -- subcommands ----------------------------------------------------------------


def _check_outputs(args) -> None:
    """Resolve output collisions before any job starts."""
    if len(args.config) > 1 and (args.trace_out or args.report_out):
        raise UsageError("--trace-out/--report-out name a single file; "
                         "with several --config files use [output] in each scenario")
    seen: dict[Path, str] = {}
    for cfg in args.config:
        try:
            sc = load_scenario(cfg)
        except ScenarioInvalid:
            continue  # reported by the job itself
        outs = [Path(args.trace_out) if args.trace_out else sc.trace_out,
                Path(args.report_out) if args.report_out else sc.report_out]
        for p in outs:
            if p is None:
                continue
            key = p.resolve()
            if key in seen:
                raise UsageError(f"output {p} is written by both {seen[key]} and {cfg}")
            seen[key] = cfg


def _scenario_command(args, job) -> int:
    _check_outputs(args)
    jobs = [(c, args.seed, args.trace_out, args.report_out) for c in args.config]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(job, *zip(*jobs)))
    else:
        results = [job(*j) for j in jobs]
    worst = EXIT_OK
    for (cfg, *_), (code, path, report, msgs) in zip(jobs, results):
        for m in msgs:
            print(m, file=sys.stderr)
        if report is not None:
            if args.pretty:
                render = pretty_train if job is train_job else pretty_run
                if len(jobs) > 1:
                    print(f"== {cfg}")
                sys.stdout.write(render(report))
            elif not path:
                sys.stdout.write(dumps_report(report))
        worst = max(worst, code)
    return worst


def cmd_run(args) -> int:
    return _scenario_command(args, run_job)


def cmd_train(args) -> int:
    return _scenario_command(args, train_job)


def _read_input(path: str, binary: bool):
    if path == "-":
        return sys.stdin.buffer.read() if binary else sys.stdin.read()
    p = Path(path)
    try:
        return p.read_bytes() if binary else p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"{path}: no such file") from None


def _write_output(path: str | None, data) -> None:
    if path is None or path == "-":
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
        else:
            sys.stdout.write(data)
        return
    Path(path).write_bytes(data) if isinstance(data, bytes) else \
        Path(path).write_text(data, encoding="utf-8")


def cmd_codec(args) -> int:
    src = args.input
    if args.direction == "decode":
        data = _read_input(src, args.binary)
        try:
            words = read_binary(data) if args.binary else parse_stream(data)
        except CmdWordError as exc:
            where = f"{src}:{exc.line}: " if exc.line is not None else f"{src}: "
            msg = str(exc)
            if msg.startswith(f"line {exc.line}: "):
                msg = msg.split(": ", 1)[1]
            print(where + msg, file=sys.stderr)
            return EXIT_USAGE
        _write_output(args.output, "".join(format_command(decode(w)) + "\n" for w in words))
        return EXIT_OK

    text = _read_input(src, False)
    words = []
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            words.append(encode(parse_command(body)))
        except ValueError as exc:
            errors.append(f"{src}:{lineno}: {exc}")
    if errors:
        for e in errors:
            print(e, file=sys.stderr)
        return EXIT_USAGE
    _write_output(args.output, write_binary(words) if args.binary else render_stream(words))
    return EXIT_OK


def cmd_stats(args) -> int:
    try:
        records = list(iter_file(args.trace))
    except FileNotFoundError:
        raise UsageError(f"{args.trace}: no such file") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.trace}:{exc.lineno}: not a trace record") from None
    report = report_from_trace(records).to_dict()
    if args.report_out:
        _write(Path(args.report_out), dumps_report(report))
    if args.pretty:
        sys.stdout.write(pretty_run(report))
    elif not args.report_out:
        sys.stdout.write(dumps_report(report))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dfibridge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def scenario_flags(sp):
        sp.add_argument("--config", action="append", required=True, metavar="PATH",
                        help="scenario file (TOML); repeat to run several scenarios")
        sp.add_argument("--trace-out", metavar="PATH", help="write the event trace (JSON lines)")
        sp.add_argument("--report-out", metavar="PATH", help="write the report (JSON)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--jobs", type=_positive, default=1, metavar="N",
                        help="run up to N scenarios in parallel (default 1)")
        sp.add_argument("--pretty", action="store_true", help="print a human-readable report")

    sp = sub.add_parser("run", help="simulate a scenario and report bus utilization")
    scenario_flags(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("train", help="initialize the device, train read/write delays, verify")
    scenario_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("codec", help="convert between field syntax and hex command words")
    sp.add_argument("direction", choices=("encode", "decode"),
                    help="encode: field syntax to hex; decode: hex to field syntax")
    sp.add_argument("input", help="input file, or - for stdin")
    sp.add_argument("-o", "--output", metavar="PATH", help="output file (default stdout)")
    sp.add_argument("--binary", action="store_true",
                    help="hex side is little-endian binary words instead of text")
    sp.set_defaults(func=cmd_codec)

    sp = sub.add_parser("stats", help="summarize a trace file into a run report")
    sp.add_argument("trace", help="trace file written by --trace-out")
    sp.add_argument("--report-out", metavar="PATH", help="write the report (JSON)")
    sp.add_argument("--pretty", action="store_true", help="print a human-readable report")
    sp.set_defaults(func=cmd_stats)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dfibridge {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioInvalid as exc:
        for line in _diagnostics(f"dfibridge {args.command}", exc):
            print(line, file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

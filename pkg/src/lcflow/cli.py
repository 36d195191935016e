"""Command-line front end: run, sweep, check, report, defaults.

Exit codes: 0 success, 2 configuration error, 3 blow-up, 4 check failure,
5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from .artifacts import read_manifest, timestamp, verify_manifest, write_manifest
from .config import ConfigError, defaults_table, emit_config, load_config, parse_sweep_config
from .diagnostics import BootstrapTracker, RecordCSV, format_float, read_records
from .integrator import SinkError, build_initial_data, read_checkpoint, run, write_checkpoint

log = logging.getLogger("lcflow")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_CHECK = 4
EXIT_IO = 5

HORIZON_NOTE = "finite horizon: completion to t_end is evidence of persistence, not of global existence"


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# -- run -----------------------------------------------------------------------------------


def _truncate_records(path: Path, t_cut: float) -> None:
    with open(path, newline="") as fh:
        lines = fh.read().splitlines(keepends=True)
    kept = lines[:1] + [ln for ln in lines[1:] if float(ln.split(",", 1)[0]) < t_cut]
    with open(path, "w", newline="") as fh:
        fh.writelines(kept)


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot read config: {exc}")
    if not cfg.regime.admissible:
        log.warning("(alpha, gamma) outside the large-density regime: %s", "; ".join(cfg.regime.failures()))

    out = Path(args.out or cfg.output.directory)
    records_path = out / "records.csv"
    ckpt_path = out / "checkpoint.bin"
    tracker_path = out / "bootstrap_state.json"
    tracker = BootstrapTracker(cfg.params, cfg.output.bootstrap_weight)
    start_step, last_dt = 0, 0.0
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.resume:
            if (out / "manifest.txt").exists():
                bad = verify_manifest(out)
                stale = [b for b in bad if b not in ("records.csv", "bootstrap.txt")]
                if stale:
                    return _fail(EXIT_IO, f"checksum mismatch for {', '.join(stale)}")
            try:
                ckpt = read_checkpoint(ckpt_path, cfg.params)
            except ValueError as exc:
                return _fail(EXIT_CONFIG, f"cannot resume: {exc}")
            if ckpt.state.grid != cfg.grid:
                return _fail(EXIT_CONFIG, "cannot resume: checkpoint grid differs from grid.dims/grid.lengths")
            state, start_step, last_dt = ckpt.state, ckpt.step_index, ckpt.last_dt
            tracker.restore(tracker_path.read_text())
            _truncate_records(records_path, state.t)
        else:
            try:
                state = build_initial_data(cfg.grid, cfg.params, cfg.init, cfg.scheme)
            except ValueError as exc:
                return _fail(EXIT_CONFIG, f"init: {exc}")
        (out / "config.txt").write_text(emit_config(cfg))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))

    def checkpoint(st, n, dt):
        write_checkpoint(ckpt_path, st, cfg.params, n, dt)
        tracker_path.write_text(tracker.to_json())

    started = timestamp()
    status_code = EXIT_OK
    try:
        with open(records_path, "a" if args.resume else "w", newline="") as fh:
            sinks = [RecordCSV(fh, header=not args.resume), tracker]
            try:
                outcome = run(
                    state, cfg.params, cfg.solver, sinks,
                    cadence=cfg.output.cadence, start_step=start_step, last_dt=last_dt,
                    checkpoint_every=cfg.output.checkpoint_every, on_checkpoint=checkpoint,
                )
            except SinkError as exc:
                outcome = exc.outcome
                status_code = EXIT_IO
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))

    if status_code == EXIT_OK and outcome.status == "blew_up":
        status_code = EXIT_BLOWUP
    files = ["config.txt", "records.csv"]
    blocks = []
    if tracker.report.ticks:
        (out / "bootstrap.txt").write_text(tracker.report.as_text())
        files.append("bootstrap.txt")
        blocks.append(tracker.report.as_text())
    files += [p.name for p in (ckpt_path, tracker_path) if p.exists()]
    info = {
        "seed": cfg.init.seed,
        "started": started,
        "finished": timestamp(),
        "outcome": outcome.status,
        "t_final": format_float(outcome.t),
        "steps": outcome.steps,
        "reason": outcome.reason or "-",
        "mode": cfg.scheme.value,
        "params_digest": cfg.params.digest().hex(),
        "regime_admissible": str(cfg.regime.admissible).lower(),
        "resumed_from_step": start_step if args.resume else "-",
        "note": HORIZON_NOTE,
    }
    try:
        write_manifest(out, info, files, blocks)
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    print(f"{outcome.status} t={outcome.t:.6g} steps={outcome.steps} {outcome.reason}".rstrip())
    return status_code


# -- sweep ---------------------------------------------------------------------------------


def cmd_sweep(args) -> int:
    from .experiments import SweepSpec, sweep, trend_report, write_sweep_outputs

    try:
        text = Path(args.spec).read_text(encoding="utf-8")
        cfg, section = parse_sweep_config(text, os.environ)
        spec = SweepSpec.from_config(cfg, section)
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot read sweep spec: {exc}")
    out = Path(args.out or cfg.output.directory)
    started = timestamp()
    try:
        out.mkdir(parents=True, exist_ok=True)
        cells = sweep(spec, out, workers=args.workers or section.workers)
        files = write_sweep_outputs(spec, cells, out)
        (out / "sweep_config.txt").write_text(emit_config(cfg, sweep=section))
        files.append("sweep_config.txt")
        for cell_dir in sorted((out / "cells").glob("cell_*")):
            for name in ("config.txt", "records.csv", "manifest.txt"):
                if (cell_dir / name).exists():
                    files.append(str((cell_dir / name).relative_to(out)))
        info = {"started": started, "finished": timestamp(), "cells": len(cells), "note": HORIZON_NOTE}
        write_manifest(out, info, files)
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    counts = {}
    for c in cells:
        counts[c.outcome] = counts.get(c.outcome, 0) + 1
    print(" ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    print(trend_report(cells).as_text(), end="")
    return EXIT_OK


# -- check ---------------------------------------------------------------------------------


def cmd_check(args) -> int:
    from . import checks

    suites = checks.SUITES if args.suite == "all" else (args.suite,)
    results = []
    for suite in suites:
        print(f"[{suite}]")
        if suite == "identities":
            batch = (
                checks.check_equilibrium(steps=args.steps)
                + checks.check_unit_norm()
                + checks.check_director_identities(seed=args.seed)
            )
        elif suite == "gn":
            batch, consts = checks.check_gn(samples=args.samples, seed=args.seed)
            print(consts.as_text(), end="")
        elif suite == "flux":
            batch = checks.check_flux(seed=args.seed)
        else:
            batch = checks.check_g_oracle(seed=args.seed)
        for r in batch:
            print(r.line())
        results += batch
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


# -- report --------------------------------------------------------------------------------


def _read_bootstrap_block(path: Path) -> dict[str, str]:
    values = {}
    if path.exists():
        for line in path.read_text().splitlines():
            if "=" in line:
                k, v = (s.strip() for s in line.split("=", 1))
                values[k] = v
    return values


def _report_run(src: Path, dest: Path, figures: bool) -> list[Path]:
    records = read_records(src / "records.csv")
    if not records:
        raise ValueError("records.csv has no rows")
    manifest = read_manifest(src).get("run", {}) if (src / "manifest.txt").exists() else {}
    boot = _read_bootstrap_block(src / "bootstrap.txt")
    first, last = records[0], records[-1]
    energies = [r.total_energy for r in records]
    increases = [b - a for a, b in zip(energies, energies[1:])]
    lines = [
        "run summary",
        f"outcome: {manifest.get('outcome', 'unknown')} ({manifest.get('reason', '-')})",
        f"records: {len(records)}  t: {first.t:.6g} -> {last.t:.6g}",
        f"total energy: {first.total_energy:.10g} -> {last.total_energy:.10g}",
        f"largest energy increase between records: {max(increases, default=0.0):.3e}",
        f"relative mass drift: {abs(last.mass / first.mass - 1):.3e}",
        f"max unit-norm defect: {max(r.unit_defect for r in records):.3e}",
        f"max flux residual: {max(r.flux_residual for r in records):.3e}",
        f"note: {HORIZON_NOTE}",
    ]
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "summary.txt").write_text("\n".join(lines) + "\n")
    written = [dest / "summary.txt"]
    if boot:
        with open(dest / "bootstrap.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["functional", "value", "initial"])
            for name in ("E_d", "E_rho1", "E_rho2", "E_rho3", "E_u1", "E_u2"):
                w.writerow([name, boot.get(name, ""), boot.get(f"{name}_initial", "")])
            w.writerow(["N3", boot.get("N3", ""), ""])
        written.append(dest / "bootstrap.csv")
    if figures:
        from .plotting import plot_run

        written += plot_run(records, dest)
    return written


def _report_sweep(src: Path, dest: Path, figures: bool) -> list[Path]:
    from .experiments import bootstrap_closure_check, read_regime_map, trend_report

    cells = read_regime_map(src / "regime_map.csv")
    dest.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple, list] = {}
    for c in cells:
        groups.setdefault((c.alpha, c.gamma, c.rho_bar, c.grad_d_target), []).append(c)
    with open(dest / "regime_table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "gamma", "rho_bar", "grad_d_target", "persisted", "runs", "outcomes"])
        for key in sorted(groups):
            cs = groups[key]
            outcomes = ";".join(sorted(c.outcome for c in cs))
            w.writerow([format_float(v) for v in key] + [sum(c.persisted for c in cs), len(cs), outcomes])
    delta = None
    trend_file = src / "trend.txt"
    if trend_file.exists():
        for line in trend_file.read_text().splitlines():
            if line.startswith("delta ="):
                delta = float(line.split("=", 1)[1])
    lines = ["sweep summary", f"cells: {len(cells)}"]
    lines.append(trend_report(cells).as_text())
    if delta is not None:
        lines.append(f"closure (delta = {delta:.6g}); counts of cells passing assumed / concluded bounds")
        tallies: dict[str, list[int]] = {}
        for c in cells:
            if c.outcome == "config_error":
                continue
            for v in bootstrap_closure_check(c, delta):
                t = tallies.setdefault(v.name + (" (empirical)" if v.empirical else ""), [0, 0, 0])
                t[0] += v.assumption_ok
                t[1] += v.conclusion_ok
                t[2] += 1
        for name, (a, b, n) in tallies.items():
            lines.append(f"  {name}: assumed {a}/{n}, concluded {b}/{n}")
    (dest / "summary.txt").write_text("\n".join(lines) + "\n")
    written = [dest / "regime_table.csv", dest / "summary.txt"]
    if figures:
        from .plotting import plot_regime

        written += plot_regime(cells, dest)
    return written


def cmd_report(args) -> int:
    src = Path(args.directory)
    dest = Path(args.out) if args.out else src / "report"
    if not src.is_dir():
        return _fail(EXIT_IO, f"{src} is not a directory")
    if (src / "manifest.txt").exists():
        bad = verify_manifest(src)
        if bad:
            return _fail(EXIT_IO, f"checksum mismatch for {', '.join(bad)}")
    try:
        if (src / "regime_map.csv").exists():
            written = _report_sweep(src, dest, not args.no_figures)
        elif (src / "records.csv").exists():
            written = _report_run(src, dest, not args.no_figures)
        else:
            return _fail(EXIT_IO, f"{src} holds neither records.csv nor regime_map.csv")
    except (OSError, ValueError, KeyError) as exc:
        return _fail(EXIT_IO, str(exc))
    except RuntimeError as exc:
        return _fail(EXIT_IO, str(exc))
    print((dest / "summary.txt").read_text(), end="")
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_defaults(args) -> int:
    print(defaults_table(), end="")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one configuration")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: output.directory)")
    p.add_argument("--resume", action="store_true", help="continue from checkpoint.bin in the output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a regime sweep")
    p.add_argument("spec")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=0, help="override sweep.workers")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="run the identity / inequality self-checks")
    p.add_argument("suite", choices=("identities", "gn", "flux", "g", "all"))
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=200, help="equilibrium steps in the identity suite")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("report", help="summarize a run or sweep directory")
    p.add_argument("directory")
    p.add_argument("--out", help="report directory (default: DIRECTORY/report)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("defaults", help="print the configuration key table")
    p.set_defaults(func=cmd_defaults)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

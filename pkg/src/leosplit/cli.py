"""Command-line front door: ``leosplit run --config <path> ...``.

Exit codes: 0 on success, 1 for configuration problems, 2 for failures while
the experiment runs. ``LEOSPLIT_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path
from typing import Sequence, TextIO

from .config import MODES, ConfigError, ExperimentConfig, load_config
from .protocol import RoundReport, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("leosplit")


def metrics_header(n_classes: int) -> list[str]:
    cols = ["round", "sat_id", "loss_x", "loss_u", "loss_v", "server_loss", "test_acc", "bytes_up", "bytes_down"]
    cols += [f"pseudo_count_{m}" for m in range(n_classes)]
    cols += [f"tau_{m}" for m in range(n_classes)]
    return cols


def _num(v: float) -> str:
    # repr round-trips exactly, so equal runs give equal bytes
    return repr(float(v))


def metrics_rows(report: RoundReport) -> list[list[str]]:
    """One row per satellite, then a ground-station row (``sat_id = gs``)
    carrying round totals."""
    rows = []
    n_classes = report.thresholds.shape[1]
    for i, (lx, lu, lv) in enumerate(report.losses):
        rows.append(
            [str(report.round), str(i), _num(lx), _num(lu), _num(lv), "", "",
             str(report.bytes_up[i]), str(report.bytes_down[i])]
            + [str(int(c)) for c in report.pseudo_counts[i]]
            + [_num(t) for t in report.thresholds[i]]
        )
    rows.append(
        [str(report.round), "gs", "", "", "", _num(report.server_loss), _num(report.test_acc),
         str(sum(report.bytes_up)), str(sum(report.bytes_down))]
        + [str(int(c)) for c in report.pseudo_counts.sum(axis=0)]
        + [""] * n_classes
    )
    return rows


def write_metrics(reports: Sequence[RoundReport], n_classes: int, out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(metrics_header(n_classes))
    for rep in reports:
        writer.writerows(metrics_rows(rep))


def summary_line(reports: Sequence[RoundReport]) -> str:
    if not reports:
        return "rounds=0 final_acc=nan sim_time_s=0.0 bytes_total=0"
    last = reports[-1]
    total = sum(sum(r.bytes_up) + sum(r.bytes_down) for r in reports)
    return (
        f"rounds={len(reports)} final_acc={last.test_acc:.4f} "
        f"sim_time_s={last.sim_time_s:.1f} bytes_total={total}"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leosplit", description="Semi-supervised split learning over a LEO constellation.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment and write per-round metrics")
    run.add_argument("--config", required=True, help="key = value config file, or 'defaults'")
    run.add_argument("--seed", type=int)
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--rounds", type=int)
    run.add_argument("--out", help="metrics CSV path (default: stdout)")
    return parser


def _configure_logging() -> None:
    level = os.environ.get("LEOSPLIT_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = {k: getattr(args, k) for k in ("seed", "mode", "rounds") if getattr(args, k) is not None}
    if overrides:
        cfg = cfg.replace(**overrides)
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage; that is a configuration problem here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    def progress(rep: RoundReport) -> None:
        log.info("round %d acc=%.4f server_loss=%.4f", rep.round, rep.test_acc, rep.server_loss)

    try:
        reports = run_experiment(cfg, on_round=progress)
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    buf = io.StringIO()
    write_metrics(reports, cfg.n_classes, buf)
    if args.out:
        try:
            Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
        except OSError as exc:
            print(f"runtime error: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(summary_line(reports))
    else:
        sys.stdout.write(buf.getvalue())
        print(summary_line(reports), file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points: simulate, run, eval, all.

Exit codes: 0 success, 1 input error, 2 runtime invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import formats
from .errors import InputDataError, InvariantViolationError
from .pipeline import PipelineConfig, compute_mape, run_pipeline
from .sim import build_fieldmap, generate_trajectory, simulate_survey


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = (PipelineConfig.from_file(args.config) if args.config
              else PipelineConfig())
    if args.seed is not None:
        config.seed = args.seed
    for item in args.set or []:
        if "=" not in item:
            raise InputDataError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        config.override(key.strip(), value.strip())
    return config


def cmd_simulate(args: argparse.Namespace) -> int:
    """Generate scan/pose/frame logs plus ground truth from the specs."""
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    survey = config.survey_spec()

    # frames stream to disk as rendered; scans are small enough to batch
    scans = []
    frame_writer = formats.FrameLogWriter(out / "frames")
    frame_count = 0
    seen_frames = set()
    for sample in simulate_survey(survey, seed=config.seed):
        scans.append(sample.cloud)
        if sample.frame is not None and sample.frame.timestamp not in seen_frames:
            seen_frames.add(sample.frame.timestamp)
            frame_writer.add(sample.frame)
            frame_count += 1
    frame_writer.close()
    poses = generate_trajectory(survey.trajectory, survey.orchard, survey.noise,
                                config.seed)

    formats.write_pose_log(out / "poses.csv", poses)
    if config.scan_format == "bin":
        formats.write_scan_log_bin(out / "scans.bin", scans)
    else:
        formats.write_scan_log_csv(out / "scans.csv", scans)
    formats.write_fieldmap(out / "groundtruth.csv", build_fieldmap(survey.orchard))
    (out / "config.txt").write_text(config.to_text())
    print(f"simulated {len(scans)} scans, {frame_count} frames -> {out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    """Replay logs through the pipeline and write the report."""
    config = _load_config(args)
    logs = Path(args.logs)
    config.mode = "replay"
    config.pose_log = str(logs / "poses.csv")
    scan_bin = logs / "scans.bin"
    config.scan_log = str(scan_bin if scan_bin.exists() else logs / "scans.csv")
    config.scan_format = "bin" if scan_bin.exists() else "csv"
    if (logs / "frames" / "index.csv").exists():
        config.frame_dir = str(logs / "frames")
    if (logs / "groundtruth.csv").exists():
        config.fieldmap = str(logs / "groundtruth.csv")
    config.out_dir = args.out

    report = run_pipeline(config)
    if report.scans_processed == 0:
        print("warning: no scans processed (empty log?)", file=sys.stderr)
    if getattr(args, "plot", False):
        _write_survey_plot(config, report, Path(args.out) / "survey.png")
    print(report.to_table_text(), end="")
    print(f"mean per-scan latency: {1000.0 * report.mean_latency_s:.1f} ms")
    return 0


def _write_survey_plot(config: PipelineConfig, report, path: Path) -> None:
    """Panoramic view: robot path, registry trees, and landmark estimates."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available; skipping plot", file=sys.stderr)
        return
    poses = formats.read_pose_log(config.pose_log)
    truth = formats.read_fieldmap(config.fieldmap) if config.fieldmap else None

    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot([p.x for p in poses], [p.y for p in poses], "-", color="0.6",
            linewidth=1.0, label="robot path")
    if truth is not None and len(truth):
        ax.scatter([r.utm_x for r in truth.records],
                   [r.utm_y for r in truth.records],
                   marker="+", s=120, color="tab:green", label="registry trees")
    if report.landmark_positions:
        xs, ys = zip(*report.landmark_positions.values())
        ax.scatter(xs, ys, marker="o", s=30, facecolors="none",
                   edgecolors="tab:red", label="landmarks")
    ax.set_xlabel("UTM x (m)")
    ax.set_ylabel("UTM y (m)")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    print(f"wrote {path}")


def cmd_eval(args: argparse.Namespace) -> int:
    """Recompute MAPE tables from a report's per-tree rows and ground truth."""
    report_path = Path(args.report)
    if not report_path.exists():
        raise InputDataError(f"report not found: {report_path}")
    truth = formats.read_fieldmap(args.truth)
    gt_w = {r.tree_id: r.gt_width for r in truth.records}
    gt_h = {r.tree_id: r.gt_height for r in truth.records}

    est_w, est_h, ref_w, ref_h = [], [], [], []
    lines = report_path.read_text().splitlines()
    if not lines or not lines[0].startswith("tree_id,"):
        raise InputDataError(f"bad report header in {report_path}")
    for line in lines[1:]:
        if not line.strip():
            break
        parts = line.split(",")
        tree_id = int(parts[0])
        if gt_w.get(tree_id) and gt_h.get(tree_id):
            est_w.append(float(parts[2]))
            est_h.append(float(parts[4]))
            ref_w.append(gt_w[tree_id])
            ref_h.append(gt_h[tree_id])
    if not ref_w:
        print("no trees with ground truth; nothing to score")
        return 0
    print(f"trees scored: {len(ref_w)}")
    print(f"width MAPE:  {compute_mape(est_w, ref_w):6.2f} %")
    print(f"height MAPE: {compute_mape(est_h, ref_h):6.2f} %")
    return 0


def cmd_all(args: argparse.Namespace) -> int:
    """simulate + run + eval chained through files in one output directory."""
    out = Path(args.out)
    sim_args = argparse.Namespace(config=args.config, seed=args.seed,
                                  set=args.set, out=str(out / "logs"))
    rc = cmd_simulate(sim_args)
    if rc:
        return rc
    run_args = argparse.Namespace(config=args.config, seed=args.seed,
                                  set=args.set, logs=str(out / "logs"),
                                  out=str(out))
    rc = cmd_run(run_args)
    if rc:
        return rc
    eval_args = argparse.Namespace(report=str(out / "report.csv"),
                                   truth=str(out / "logs" / "groundtruth.csv"))
    return cmd_eval(eval_args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treescan",
        description="Tree detection, landmark association, and trait "
                    "estimation from fused RGN + LiDAR surveys.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")

    p_sim = sub.add_parser("simulate", help="generate survey logs + ground truth")
    add_common(p_sim)
    p_sim.add_argument("--out", required=True, help="output log directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_run = sub.add_parser("run", help="replay logs through the pipeline")
    add_common(p_run)
    p_run.add_argument("--logs", required=True, help="directory from 'simulate'")
    p_run.add_argument("--out", required=True, help="report output directory")
    p_run.add_argument("--plot", action="store_true",
                       help="also write a path + landmark scatter PNG")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score a report against ground truth")
    p_eval.add_argument("--report", required=True, help="report.csv from 'run'")
    p_eval.add_argument("--truth", required=True, help="ground-truth field map CSV")
    p_eval.set_defaults(func=cmd_eval)

    p_all = sub.add_parser("all", help="simulate + run + eval in one go")
    add_common(p_all)
    p_all.add_argument("--out", required=True, help="output directory")
    p_all.set_defaults(func=cmd_all)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputDataError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolationError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

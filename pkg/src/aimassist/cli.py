"""Operator command line: batch experiments, calibration, predictor
training, the live session server, and plot-data reports.

One binary, five subcommands (run, calibrate, train, serve, report). All
randomness flows from --seed through documented stream splitting, so any
subcommand with identical flags is byte-reproducible in its file outputs.

Exit codes: 0 success, 2 usage, 3 I/O, 4 schema/format.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import agents, harness, predictor, scene, service
from .assist import AssistConfig, AssistConfigError, GravityField, LerpParams

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4


def _build_assist(args) -> AssistConfig:
    method = args.assist
    if method == "none":
        return AssistConfig()
    if method == "lerp":
        return AssistConfig(method="lerp", lerp=LerpParams(
            radius_px=args.assist_radius, alpha_max=args.alpha_max,
            gamma=args.assist_gamma))
    if method == "gravity":
        return AssistConfig(method="gravity", gravity=GravityField(
            radius_px=args.assist_radius, gamma=args.assist_gamma,
            kappa=args.kappa))
    if method == "predictor":
        if not args.model:
            raise AssistConfigError("--assist predictor requires --model")
        return AssistConfig(method="predictor", predictor_path=args.model,
                            blend=args.blend)
    raise AssistConfigError(f"unknown assist {method!r}")


def cmd_run(args) -> int:
    params = agents.preset(args.agent, path=args.presets)
    config = _build_assist(args)
    records = []
    if args.mode == "follow":
        speeds = [float(s) for s in args.speeds.split(",") if s]
        per_band = max(1, args.trials // len(speeds))
        for sp in speeds:
            records.extend(harness.run_batch(
                "follow", params, config, per_band, seed=args.seed,
                n_targets=args.targets, follow_speed=sp,
                agent_label=args.agent, jobs=args.jobs))
    else:
        records = harness.run_batch(
            args.mode, params, config, args.trials, seed=args.seed,
            n_targets=args.targets, agent_label=args.agent, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    rec_path = os.path.join(args.out, f"records.{args.format}")
    harness.export_records(records, rec_path, fmt=args.format)
    table = harness.aggregate(records)
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(table.to_json(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(harness.format_summary(table))
    print(f"{len(records)} subtask records -> {rec_path}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    doc = agents.calibrate(budget=args.budget, seed=args.seed,
                           classes=tuple(args.classes.split(",")))
    agents.save_presets(doc, args.out)
    for cls, entry in doc["classes"].items():
        a = entry["achieved"]
        g = entry["goal"]
        print(f"{cls}: converged={entry['converged']} "
              f"select {a['select_success_pct']:.1f}% (goal {g['select_success_pct']}) "
              f"locate {a['locate_success_pct']:.1f}% "
              f"avg time {a['locate_avg_time_s']:.2f}s (goal {g['locate_avg_time_s']})")
    print(f"presets -> {args.out}")
    if not all(e["converged"] for e in doc["classes"].values()):
        print("warning: calibration did not converge for every class",
              file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = predictor.EncoderConfig()
    train_set = predictor.generate_training_set(
        args.trials, args.seed, cfg=cfg, max_examples=args.examples)
    print(f"training set: {len(train_set)} examples "
          f"{train_set.balance_report()['octants']}")
    model = predictor.PredictorModel(seed=args.seed, encoder=cfg)
    hyper = predictor.TrainHyper(learning_rate=args.lr, epochs=args.epochs,
                                 batch_size=args.batch, seed=args.seed,
                                 lam=args.lam)
    model, curve = predictor.train(model, train_set, hyper)
    predictor.save_checkpoint(model, args.out)
    if args.curve:
        with open(args.curve, "w") as fh:
            fh.write("epoch,loss\n")
            for i, v in enumerate(curve):
                fh.write(f"{i},{v!r}\n")
        print(f"loss curve -> {args.curve}")
    holdout = predictor.straight_line_set(1000, args.seed + 1, cfg=cfg)
    cos = predictor.evaluate_cosine(model, holdout)
    print(f"checkpoint -> {args.out}  final loss {curve[-1]:.4f}  "
          f"holdout cosine {cos:.3f}")
    return EXIT_OK


def cmd_serve(args) -> int:
    frontend = args.frontend
    if frontend and not os.path.isdir(frontend):
        print(f"error: frontend dir not found: {frontend}", file=sys.stderr)
        return EXIT_IO
    try:
        service.serve(host=args.host, port=args.port,
                      presets_path=args.presets, frontend_dir=frontend)
    except service.SessionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_report(args) -> int:
    records = harness.import_records(args.records)
    os.makedirs(args.out, exist_ok=True)
    if not records:
        print("warning: no records; emitting header-only series",
              file=sys.stderr)
        headers = {
            "locate_screen_appear": "appear_x,appear_y,success",
            "locate_distance_time": "camera_dist_m,acquire_time_s,success",
            "select_screen_appear": "appear_x,appear_y,success",
            "select_distance_time": "camera_dist_m,extra_time_s,success",
            "follow_flytime_success": "fly_time_s,fly_distance_m,success",
            "follow_flytime_score": "fly_time_s,follow_fraction,success",
        }
        series = {k: v + "\n" for k, v in headers.items()}
    else:
        series = harness.plot_series(records)
    for name, text in sorted(series.items()):
        path = os.path.join(args.out, name + ".csv")
        with open(path, "w") as fh:
            fh.write(text)
        print(f"series -> {path}")
    return EXIT_OK


def _positive_int(value):
    n = int(value)
    if n <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="aimassist",
        description="Pointer-assistance trial harness and session service")
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a batch of seeded trials")
    run.add_argument("--mode", choices=scene.MODES, required=True)
    run.add_argument("--agent", choices=agents.DEVICE_CLASSES, required=True)
    run.add_argument("--assist", choices=["none", "lerp", "gravity", "predictor"],
                     default="none")
    run.add_argument("--model", help="predictor checkpoint path")
    run.add_argument("--blend", type=float, default=0.4,
                     help="predictor blend factor in [0,1]")
    run.add_argument("--assist-radius", type=float, default=250.0)
    run.add_argument("--assist-gamma", type=float, default=1.0)
    run.add_argument("--alpha-max", type=float, default=0.6)
    run.add_argument("--kappa", type=float, default=0.75)
    run.add_argument("--trials", type=_positive_int, required=True)
    run.add_argument("--targets", type=_positive_int, default=5,
                     help="targets per trial")
    run.add_argument("--speeds", default="2,5,10",
                     help="follow-mode speed bands, m/s (comma separated)")
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--out", default="out")
    run.add_argument("--format", choices=["csv", "json"], default="csv")
    run.add_argument("--jobs", type=_positive_int, default=1)
    run.add_argument("--presets", help="presets JSON path override")
    run.set_defaults(func=cmd_run)

    cal = sub.add_parser("calibrate", help="grid-search agent presets")
    cal.add_argument("--budget", type=_positive_int, default=500,
                     help="trials per grid point and mode (>= 100)")
    cal.add_argument("--seed", type=int, default=1)
    cal.add_argument("--classes", default=",".join(agents.DEVICE_CLASSES))
    cal.add_argument("--out", default="agent_presets.json")
    cal.set_defaults(func=cmd_calibrate)

    tr = sub.add_parser("train", help="generate data and train the predictor")
    tr.add_argument("--trials", type=_positive_int, default=60,
                    help="agent trials to harvest examples from")
    tr.add_argument("--examples", type=_positive_int, default=None,
                    help="cap on collected examples")
    tr.add_argument("--epochs", type=_positive_int, default=30)
    tr.add_argument("--lr", type=float, default=0.05)
    tr.add_argument("--batch", type=_positive_int, default=64)
    tr.add_argument("--lam", type=float, default=0.1)
    tr.add_argument("--seed", type=int, default=1)
    tr.add_argument("--out", default="predictor.json")
    tr.add_argument("--curve", default=None, help="loss curve CSV path")
    tr.set_defaults(func=cmd_train)

    sv = sub.add_parser("serve", help="run the live session server")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8080)
    sv.add_argument("--presets", help="presets JSON path override")
    sv.add_argument("--frontend", help="static frontend directory to serve")
    sv.set_defaults(func=cmd_serve)

    rp = sub.add_parser("report", help="emit plot-data series from records")
    rp.add_argument("--records", required=True, help="records CSV or JSON path")
    rp.add_argument("--out", default="report")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except harness.ExportIOError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (predictor.CheckpointError, predictor.DimensionError,
            scene.SceneError, agents.AgentError, AssistConfigError,
            harness.HarnessError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())

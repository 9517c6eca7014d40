"""Command-line surface: detect / train / eval / cnn / power / synth.

Every report starts with a manifest header (command, resolved parameters,
sha-256 digests of the input files, tool version, seed) so a rerun with the
same flags is byte-identical and verifiable. Exit codes: 0 on success, 2 for
usage errors, 3 for unreadable or malformed inputs, 4 for constraint
violations raised by the models.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cascade import CascadeFormatError, load_cascade, save_cascade
from .cnngraph import GraphError, count_macs_total, count_params_total, load_graph
from .detector import (BudgetTooSmall, Detection, PyramidConfig, ScratchBudget,
                       detect)
from .evaluator import match_by_image
from .imaging import GrayImage, PgmError, load_pgm, save_pgm
from .integral import Rect
from .mcu import UnknownPlatform, builtin_platform, load_platform
from .power import (Battery, DutyCycleConfig, PhaseEnergy, daily_energy,
                    lifetime, simulate, wake_cycle_energy)
from .sched import (BudgetConfig, L1PlanError, compare_budgets, estimate_latency,
                    plan_schedule)
from .synthetic import synth_negative_images, synth_positive_windows, synth_scene
from .trainer import TrainConfig, train_cascade

EXIT_INPUT_ERROR = 3
EXIT_CONSTRAINT = 4

DATA_DIR = Path(__file__).parent / "data"


class InputError(Exception):
    pass


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()[:16]


def manifest_lines(command: str, params: dict, inputs: dict[str, Path],
                   seed=None) -> list[str]:
    lines = [f"# trapnode {__version__}", f"# command={command}"]
    if seed is not None:
        lines.append(f"# seed={seed}")
    for key in sorted(params):
        lines.append(f"# param {key}={params[key]}")
    for name in sorted(inputs):
        lines.append(f"# input {name}=sha256:{_digest(inputs[name])}")
    return lines


def _read_image(path: Path) -> GrayImage:
    try:
        return load_pgm(path.read_bytes())
    except FileNotFoundError:
        raise InputError(f"image not found: {path}") from None
    except PgmError as exc:
        raise InputError(f"{path}: {exc}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="ascii")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- detect --

def cmd_detect(args) -> int:
    image_path = Path(args.image)
    cascade_path = Path(args.cascade)
    img = _read_image(image_path)
    try:
        cascade = load_cascade(cascade_path)
    except FileNotFoundError:
        raise InputError(f"cascade not found: {cascade_path}") from None
    except CascadeFormatError as exc:
        raise InputError(f"{cascade_path}: {exc}") from None

    cfg = PyramidConfig(scale_factor=args.scale_factor, num_levels=args.scales,
                        max_detection_px=args.max_side)
    budget = ScratchBudget(bytes=args.budget, mode=args.budget_mode)
    detections = detect(img, cascade, cfg=cfg, budget=budget,
                        overlap=args.overlap, step=args.step,
                        workers=args.workers, group_iou=args.group_iou)

    params = {
        "scales": args.scales, "scale_factor": args.scale_factor,
        "max_side": args.max_side, "budget": args.budget,
        "budget_mode": args.budget_mode, "overlap": args.overlap,
        "step": args.step, "workers": args.workers,
        "group_iou": args.group_iou,
    }
    lines = manifest_lines("detect", params,
                           {"image": image_path, "cascade": cascade_path},
                           seed=args.seed)
    lines.append("image_id,x,y,w,h,level,score")
    image_id = image_path.stem
    for d in detections:
        lines.append(f"{image_id},{d.bbox.x},{d.bbox.y},{d.bbox.w},{d.bbox.h},"
                     f"{d.level},{d.score:.6f}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


# ----------------------------------------------------------------- train --

def _load_dir(path: Path) -> list[GrayImage]:
    if not path.is_dir():
        raise InputError(f"not a directory: {path}")
    images = []
    for f in sorted(path.glob("*.pgm")):
        images.append(_read_image(f))
    if not images:
        raise InputError(f"no .pgm files in {path}")
    return images


def cmd_train(args) -> int:
    pos_dir = Path(args.positives)
    neg_dir = Path(args.negatives)
    pos = _load_dir(pos_dir)
    neg = _load_dir(neg_dir)
    cfg = TrainConfig(
        num_stages=args.stages,
        min_detection_rate=args.min_detection_rate,
        max_fp_rate=args.max_fp_rate,
        max_weak_per_stage=args.max_weak,
        feature_subsample=args.feature_subsample,
        feature_min_size=args.feature_min_size,
        feature_stride=args.feature_stride,
        negatives_per_stage=args.negatives_per_stage,
        seed=args.seed,
    )
    result = train_cascade(pos, neg, cfg)
    save_cascade(result.cascade, args.out)

    params = {
        "stages": args.stages, "min_detection_rate": args.min_detection_rate,
        "max_fp_rate": args.max_fp_rate, "max_weak": args.max_weak,
        "feature_subsample": args.feature_subsample,
        "feature_min_size": args.feature_min_size,
        "feature_stride": args.feature_stride,
        "negatives_per_stage": args.negatives_per_stage,
        "positives": pos_dir, "negatives": neg_dir,
    }
    lines = manifest_lines("train", params, {}, seed=args.seed)
    lines.append(result.log_text().rstrip("\n"))
    if result.pool_exhausted:
        lines.append(f"# pool exhausted after {len(result.cascade.stages)} stages")
    _emit("\n".join(lines) + "\n", args.log_out)
    return 0


# ------------------------------------------------------------------ eval --

def _parse_box_file(path: Path, with_score: bool):
    if not path.exists():
        raise InputError(f"file not found: {path}")
    by_image: dict[str, list] = {}
    for lineno, raw in enumerate(path.read_text(encoding="ascii").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("image_id"):
            continue
        parts = line.split(",")
        try:
            image_id = parts[0]
            x, y, w, h = (int(v) for v in parts[1:5])
            rect = Rect(x, y, w, h)
            if with_score:
                score = float(parts[6]) if len(parts) > 6 else 0.0
                by_image.setdefault(image_id, []).append((rect, score))
            else:
                by_image.setdefault(image_id, []).append(rect)
        except (ValueError, IndexError) as exc:
            raise InputError(f"{path}:{lineno}: bad row ({exc})") from None
    return by_image


def cmd_eval(args) -> int:
    pred_path = Path(args.predictions)
    gt_path = Path(args.ground_truth)
    preds = _parse_box_file(pred_path, with_score=True)
    gts = _parse_box_file(gt_path, with_score=False)
    report = match_by_image(preds, gts, args.iou)

    params = {"iou": args.iou}
    lines = manifest_lines("eval", params,
                           {"predictions": pred_path, "ground_truth": gt_path})
    lines.append("matched,total_gt,total_pred,detection_rate,false_positives")
    lines.append(f"{report.matched},{report.total_gt},{report.total_pred},"
                 f"{report.detection_rate:.6f},{report.false_positives}")
    _emit("\n".join(lines) + "\n", args.out)
    if args.json_out:
        Path(args.json_out).write_text(json.dumps({
            "matched": report.matched,
            "total_gt": report.total_gt,
            "total_pred": report.total_pred,
            "detection_rate": report.detection_rate,
            "false_positives": report.false_positives,
        }, indent=1), encoding="ascii")
    return 0


# ------------------------------------------------------------------- cnn --

def _resolve_platform(spec: str):
    try:
        return builtin_platform(spec)
    except UnknownPlatform:
        pass
    candidates = [Path(spec)]
    env = os.environ.get("TRAPNODE_PLATFORM_PATH")
    if env:
        candidates.append(Path(env) / spec)
        candidates.append(Path(env) / f"{spec}.json")
    candidates.append(DATA_DIR / f"{spec}.json")
    for c in candidates:
        if c.is_file():
            return load_platform(c)
    raise InputError(f"unknown platform {spec!r} (no builtin, file, or "
                     "TRAPNODE_PLATFORM_PATH match)")


def _latency_lines(schedule, report) -> list[str]:
    lines = ["layer,weight_home,input_home,output_home,class,"
             "compute_cycles,transfer_cycles,total_cycles"]
    for cost in report.layers:
        p = schedule.placement(cost.name)
        lines.append(
            f"{cost.name},{p.weight_home},{p.input_home},{p.output_home},"
            f"{cost.transfer_class},{cost.compute_cycles:.0f},"
            f"{cost.transfer_cycles:.0f},{cost.total_cycles:.0f}"
        )
    lines.append(f"# total_cycles={report.total_cycles:.0f}")
    lines.append(f"# compute_cycles={report.compute_cycles:.0f}")
    lines.append(f"# transfer_cycles={report.transfer_cycles:.0f}")
    for cls in sorted(report.class_cycles):
        lines.append(f"# class {cls}={report.class_cycles[cls]:.0f}")
    lines.append(f"# mac_per_cycle={report.mac_per_cycle:.3f}")
    lines.append(f"# wall_time_ms={report.wall_time_s * 1e3:.3f}")
    return lines


def cmd_cnn(args) -> int:
    graph_path = Path(args.graph) if args.graph else DATA_DIR / "mbnv3_ssdlite_320x240.json"
    try:
        graph = load_graph(graph_path)
    except FileNotFoundError:
        raise InputError(f"graph not found: {graph_path}") from None
    except GraphError as exc:
        raise InputError(f"{graph_path}: {exc}") from None
    platform = _resolve_platform(args.platform)

    params = {
        "platform": args.platform, "engine": args.engine,
        "l1": args.l1, "l2": args.l2, "dma_overlap": args.dma_overlap,
    }
    lines = manifest_lines("cnn", params, {"graph": graph_path})
    lines.append(f"# graph {graph.name}: macs={count_macs_total(graph)} "
                 f"params={count_params_total(graph)}")

    if args.compare_budgets:
        budgets = []
        for pair in args.compare_budgets:
            l1, l2 = (int(v) for v in pair.split(":"))
            budgets.append(BudgetConfig(l1, l2, args.engine, args.dma_overlap))
        comparison = compare_budgets(graph, platform, budgets)
        for budget, rep in zip(comparison.budgets, comparison.reports):
            lines.append(f"# budget l1={budget.l1_bytes} l2={budget.l2_bytes} "
                         f"total_cycles={rep.total_cycles:.0f} "
                         f"wall_time_ms={rep.wall_time_s * 1e3:.3f}")
        lines.append(f"# speedup={comparison.speedup():.3f}")
        lines.append(f"# monotone={int(comparison.monotone_nonincreasing)}")
    else:
        budget = BudgetConfig(args.l1, args.l2, args.engine, args.dma_overlap)
        schedule = plan_schedule(graph, platform, budget)
        report = estimate_latency(schedule, graph, platform, budget)
        lines.append(f"# peak_l2_bytes={schedule.peak_l2_bytes}")
        lines.append(f"# peak_ext_bytes={schedule.peak_ext_bytes}")
        lines.extend(_latency_lines(schedule, report))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


# ----------------------------------------------------------------- power --

def _scenario_from_args(args):
    if args.scenario:
        path = Path(args.scenario)
        if not path.is_file():
            raise InputError(f"scenario file not found: {path}")
        doc = json.loads(path.read_text(encoding="ascii"))
        pe = PhaseEnergy(**doc.get("phase_energy", {}))
        cfg = DutyCycleConfig(**doc.get("duty_cycle", {}))
        batt = Battery(**doc.get("battery", {}))
        return pe, cfg, batt
    pe = PhaseEnergy(compute_mj=args.compute_mj, camera_mj=args.camera_mj,
                     tx_mj_per_byte=args.tx_mj_per_byte,
                     wake_overhead_mj=args.wake_overhead_mj)
    cfg = DutyCycleConfig(
        wake_period_s=args.wake_period, payload_policy=args.policy,
        counter_payload_bytes=args.counter_bytes,
        image_payload_bytes=args.image_bytes,
        detections_per_day=args.detections_per_day,
        sleep_power_uw=args.sleep_uw,
    )
    batt = Battery(capacity_mah=args.battery_mah, voltage_v=args.battery_v)
    return pe, cfg, batt


def cmd_power(args) -> int:
    pe, cfg, batt = _scenario_from_args(args)
    params = {
        "wake_period": cfg.wake_period_s, "policy": cfg.payload_policy,
        "compute_mj": pe.compute_mj, "overhead_mj": pe.wake_overhead_mj,
        "sleep_uw": cfg.sleep_power_uw,
        "battery_mah": batt.capacity_mah, "battery_v": batt.voltage_v,
    }
    inputs = {}
    if args.scenario:
        inputs["scenario"] = Path(args.scenario)
    if args.simulate:
        inputs["trace"] = Path(args.simulate)
    lines = manifest_lines("power", params, inputs)

    if args.simulate:
        trace_path = Path(args.simulate)
        if not trace_path.is_file():
            raise InputError(f"trace file not found: {trace_path}")
        trace = [float(l) for l in trace_path.read_text().split()]
        result = simulate(pe, cfg, batt, trace, args.horizon_days)
        lines.append("t_s,new_detections,wake_mj,battery_j_left")
        for ev in result.timeline:
            lines.append(f"{ev.t_s:.3f},{ev.new_detections},{ev.wake_mj:.6f},"
                         f"{ev.battery_j_left:.6f}")
        lines.append(f"# days_simulated={result.days_simulated:.6f}")
        lines.append(f"# total_j={result.total_j:.6f}")
        for phase in ("compute", "radio", "camera", "sleep", "overhead"):
            lines.append(f"# {phase}_j={getattr(result, phase + '_j'):.6f}")
        if result.battery_exhausted_at_s is not None:
            lines.append(f"# battery_exhausted_at_s={result.battery_exhausted_at_s:.3f}")
    else:
        ledger = daily_energy(pe, cfg)
        wake_counter = wake_cycle_energy(pe, cfg.counter_payload_bytes)
        life = lifetime(batt, ledger.daily_j)
        lines.append("phase,joules_per_day")
        for phase in ("compute", "radio", "camera", "sleep", "overhead"):
            lines.append(f"{phase},{getattr(ledger, phase + '_j'):.6f}")
        lines.append(f"# daily_j={ledger.daily_j:.6f}")
        lines.append(f"# wake_cycle_counter_mj={wake_counter:.6f}")
        lines.append(f"# battery_j={batt.energy_j:.3f}")
        lines.append(f"# lifetime_days={life.days}")
        lines.append(f"# lifetime_days_exact={life.days_exact:.3f}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


# ----------------------------------------------------------------- synth --

def cmd_synth(args) -> int:
    rng = np.random.default_rng(args.seed)
    out = Path(args.out_dir)
    pos_dir = out / "positives"
    neg_dir = out / "negatives"
    scene_dir = out / "scenes"
    for d in (pos_dir, neg_dir, scene_dir):
        d.mkdir(parents=True, exist_ok=True)
    for i, win in enumerate(synth_positive_windows(args.positives, rng)):
        (pos_dir / f"pos_{i:05d}.pgm").write_bytes(save_pgm(win))
    for i, img in enumerate(synth_negative_images(args.negatives, args.neg_size,
                                                  args.neg_size, rng)):
        (neg_dir / f"neg_{i:05d}.pgm").write_bytes(save_pgm(img))
    gt_lines = []
    for i in range(args.scenes):
        scene, boxes = synth_scene(args.scene_width, args.scene_height,
                                   [20] * args.moths_per_scene, rng)
        name = f"scene_{i:05d}"
        (scene_dir / f"{name}.pgm").write_bytes(save_pgm(scene))
        for b in boxes:
            gt_lines.append(f"{name},{b.x},{b.y},{b.w},{b.h}")
    (scene_dir / "ground_truth.csv").write_text(
        "\n".join(gt_lines) + "\n" if gt_lines else "", encoding="ascii")
    sys.stdout.write(
        f"wrote {args.positives} positives, {args.negatives} negatives, "
        f"{args.scenes} scenes under {out}\n"
    )
    return 0


# ---------------------------------------------------------------- parser --

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trapnode",
        description="Camera-trap pest-detection node toolkit: Viola-Jones "
                    "detector, MCU latency model, duty-cycle energy model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the multi-scale cascade detector")
    p.add_argument("image", help="input PGM image")
    p.add_argument("cascade", help="cascade file")
    p.add_argument("--scales", type=int, default=5)
    p.add_argument("--scale-factor", type=float, default=1.1)
    p.add_argument("--max-side", type=int, default=30)
    p.add_argument("--budget", type=int, default=99_600)
    p.add_argument("--budget-mode", default="ii_only",
                   choices=["ii_only", "ii_plus_input",
                            "ii_plus_input_plus_squares"])
    p.add_argument("--overlap", type=int, default=20)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--workers", type=int, default=8)
    p.add_argument("--group-iou", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("train", help="train a cascade on PGM directories")
    p.add_argument("positives", help="directory of window-sized PGM patches")
    p.add_argument("negatives", help="directory of negative pool PGM images")
    p.add_argument("--out", required=True, help="cascade output file")
    p.add_argument("--log-out", default=None)
    p.add_argument("--stages", type=int, default=15)
    p.add_argument("--min-detection-rate", type=float, default=0.995)
    p.add_argument("--max-fp-rate", type=float, default=0.5)
    p.add_argument("--max-weak", type=int, default=40)
    p.add_argument("--feature-subsample", type=float, default=1.0)
    p.add_argument("--feature-min-size", type=int, default=1)
    p.add_argument("--feature-stride", type=int, default=1)
    p.add_argument("--negatives-per-stage", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("predictions", help="detection report file")
    p.add_argument("ground_truth", help="ground-truth boxes file")
    p.add_argument("--iou", type=float, default=0.01)
    p.add_argument("--out", default=None)
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cnn", help="schedule a CNN graph and estimate latency")
    p.add_argument("--graph", default=None,
                   help="graph file (default: shipped mbnv3_ssdlite_320x240)")
    p.add_argument("--platform", default="gap9",
                   help="builtin name, file path, or name under "
                        "TRAPNODE_PLATFORM_PATH")
    p.add_argument("--engine", default="conv_accelerator",
                   choices=["conv_accelerator", "worker_cores"])
    p.add_argument("--l1", type=int, default=115_600)
    p.add_argument("--l2", type=int, default=1_200_000)
    p.add_argument("--dma-overlap", action="store_true", default=True)
    p.add_argument("--no-dma-overlap", dest="dma_overlap", action="store_false")
    p.add_argument("--compare-budgets", nargs="+", metavar="L1:L2",
                   default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_cnn)

    p = sub.add_parser("power", help="daily energy, lifetime, and simulation")
    p.add_argument("--scenario", default=None, help="scenario JSON file")
    p.add_argument("--compute-mj", type=float, default=4.61)
    p.add_argument("--camera-mj", type=float, default=0.0)
    p.add_argument("--tx-mj-per-byte", type=float, default=1.0)
    p.add_argument("--wake-overhead-mj", type=float, default=0.0)
    p.add_argument("--wake-period", type=float, default=30.0)
    p.add_argument("--policy", default="counters_every_wake",
                   choices=["counters_every_wake", "image_per_detection"])
    p.add_argument("--counter-bytes", type=int, default=17)
    p.add_argument("--image-bytes", type=int, default=12_700)
    p.add_argument("--detections-per-day", type=float, default=33.0)
    p.add_argument("--sleep-uw", type=float, default=43.0)
    p.add_argument("--battery-mah", type=float, default=1000.0)
    p.add_argument("--battery-v", type=float, default=3.7)
    p.add_argument("--simulate", default=None,
                   help="moth-arrival trace file (one timestamp per line)")
    p.add_argument("--horizon-days", type=float, default=30.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("synth", help="generate the synthetic moth corpus")
    p.add_argument("out_dir")
    p.add_argument("--positives", type=int, default=400)
    p.add_argument("--negatives", type=int, default=900)
    p.add_argument("--neg-size", type=int, default=96)
    p.add_argument("--scenes", type=int, default=4)
    p.add_argument("--scene-width", type=int, default=320)
    p.add_argument("--scene-height", type=int, default=240)
    p.add_argument("--moths-per-scene", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (BudgetTooSmall, L1PlanError) as exc:
        print(f"constraint violation: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT


if __name__ == "__main__":
    sys.exit(main())

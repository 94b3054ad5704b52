"""Command-line pipeline: synth, train, anchors, optimize, eval, sweep.

Every command resolves its configuration as flag > config file > default,
prints the resolved values, and writes a manifest.json next to its outputs
with the resolved config, seeds, paths, and timings; deterministic commands
re-run from the same manifest reproduce their outputs bitwise.

Exit codes: 0 success, 2 config/validation error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import data_io
from .anchors import kmeans_anchors, random_generate_anchors, random_sample_anchors
from .errors import ConfigError, DataError, NumericError, PoseliftError
from .metrics import evaluate, format_report_table, mpjpe_root_relative
from .optimizer import OptimizerConfig, make_hypotheses, optimize_multi_hypothesis
from .score_model import ModelConfig
from .sde import SdeConfig
from .skeleton import Frame, Pose3D, SkeletonSpec, default_skeleton, select_lsp14
from .synthetic import SyntheticConfig, generate_synthetic
from .training import TrainConfig, train

DEFAULT_SWEEP_ITERS = (100, 250, 500, 1000, 1500, 2000)


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


class ManifestWriter:
    def __init__(self, command: str, args: argparse.Namespace, config: dict):
        self.record = {
            "command": command,
            "argv": sys.argv[1:],
            "config": config,
            "seed": getattr(args, "seed", None),
            "inputs": [],
            "outputs": [],
            "started_unix": time.time(),
            "git": _git_describe(),
        }
        self._t0 = time.perf_counter()

    def add_inputs(self, *paths):
        self.record["inputs"] += [str(p) for p in paths if p]

    def add_outputs(self, *paths):
        self.record["outputs"] += [str(p) for p in paths]

    def write(self, out_dir: Path):
        self.record["wall_time_s"] = time.perf_counter() - self._t0
        data_io.atomic_write_text(out_dir / "manifest.json", json.dumps(self.record, indent=2))


def _load_sections(args) -> dict:
    file_cfg = data_io.load_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_cfg) - {"skeleton", "sde", "model", "train", "optimizer", "synthetic"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return file_cfg

def _override(section: dict, args, names: list[str]) -> dict:
    out = dict(section)
    for name in names:
        val = getattr(args, name, None)
        if val is not None:
            out[name] = val
    return out


def _resolve_skeleton(sections: dict) -> SkeletonSpec:
    if "skeleton" in sections:
        return SkeletonSpec.from_dict(sections["skeleton"])
    return default_skeleton()


def _print_config(command: str, resolved: dict):
    print(f"[{command}] resolved config: {json.dumps(resolved, sort_keys=True)}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    sections = _load_sections(args)
    syn = SyntheticConfig.from_dict(
        _override(sections.get("synthetic", {}), args, ["count", "seed", "noise_sigma_px"])
    )
    spec = _resolve_skeleton(sections)
    resolved = {"synthetic": syn.to_dict(), "skeleton": spec.to_dict()}
    _print_config("synth", resolved)
    out = _out_dir(args)
    manifest = ManifestWriter("synth", args, resolved)
    ds = generate_synthetic(syn, spec)
    data_io.write_poses(out / "poses3d.zpse", ds.poses_cam, Frame.CAMERA_ABSOLUTE, spec)
    data_io.write_keypoints_csv(out / "keypoints.csv", ds.pixels, ds.confidence)
    data_io.write_keypoints_csv(
        out / "keypoints_clean.csv", ds.clean_pixels, np.ones_like(ds.confidence)
    )
    data_io.save_cameras_jsonl(out / "cameras.jsonl", ds.cameras)
    manifest.add_outputs(
        out / "poses3d.zpse", out / "keypoints.csv", out / "keypoints_clean.csv",
        out / "cameras.jsonl",
    )
    manifest.write(out)
    print(f"[synth] wrote {len(ds)} samples to {out}")
    return 0


def cmd_train(args) -> int:
    sections = _load_sections(args)
    cfg = TrainConfig.from_dict(
        _override(sections.get("train", {}), args, ["epochs", "batch_size", "seed"])
    )
    sde = SdeConfig.from_dict(sections.get("sde", {})) if "sde" in sections else SdeConfig()
    model_cfg = ModelConfig.from_dict(sections.get("model", {}))
    spec = _resolve_skeleton(sections)
    resolved = {"train": cfg.to_dict(), "sde": sde.to_dict(), "model": model_cfg.to_dict()}
    _print_config("train", resolved)
    out = _out_dir(args)
    manifest = ManifestWriter("train", args, resolved)
    manifest.add_inputs(args.poses)
    poses, frame, _ = data_io.read_poses(args.poses)
    if frame is Frame.CAMERA_ABSOLUTE:
        poses = poses - poses[:, [spec.pelvis_index], :]
    t0 = time.perf_counter()
    model, history = train(poses, cfg, sde, spec, model_cfg, checkpoint_path=out / "model.ckpt")
    ckpt = out / "model.ckpt"
    data_io.save_checkpoint(ckpt, model)
    data_io.atomic_write_text(
        out / "loss.jsonl", "".join(json.dumps(h) + "\n" for h in history)
    )
    manifest.add_outputs(ckpt, out / "loss.jsonl")
    manifest.write(out)
    print(
        f"[train] {len(history)} steps in {time.perf_counter() - t0:.1f}s, "
        f"loss {history[0]['loss']:.3f} -> {history[-1]['loss']:.3f}, wrote {ckpt}"
    )
    return 0


def cmd_anchors(args) -> int:
    sections = _load_sections(args)
    spec = _resolve_skeleton(sections)
    resolved = {"strategy": args.strategy, "count": args.count, "seed": args.seed or 0}
    _print_config("anchors", resolved)
    out = _out_dir(args)
    manifest = ManifestWriter("anchors", args, resolved)
    seed = args.seed or 0
    if args.strategy == "random_generate":
        if not args.checkpoint:
            raise ConfigError("random_generate needs --checkpoint")
        manifest.add_inputs(args.checkpoint)
        model = data_io.load_checkpoint(args.checkpoint, expected_joints=spec.n_joints)
        aset = random_generate_anchors(model, args.count, seed)
    else:
        if not args.poses:
            raise ConfigError(f"{args.strategy} needs --poses")
        manifest.add_inputs(args.poses)
        poses, frame, _ = data_io.read_poses(args.poses)
        if frame is Frame.CAMERA_ABSOLUTE:
            poses = poses - poses[:, [spec.pelvis_index], :]
        fn = kmeans_anchors if args.strategy == "kmeans" else random_sample_anchors
        aset = fn(poses, args.count, seed)
    path = out / "anchors.zpse"
    data_io.save_anchors(path, aset, spec)
    manifest.add_outputs(path, f"{path}.provenance.json")
    manifest.write(out)
    print(f"[anchors] wrote {len(aset)} {args.strategy} anchors to {path}")
    return 0


def _load_optimize_inputs(args, spec: SkeletonSpec):
    poses2d, warnings = data_io.load_csv_keypoints(args.keypoints)
    for w in warnings:
        print(f"[optimize] warning: {w}", file=sys.stderr)
    cams = data_io.load_cameras(args.camera)
    if len(cams) == 1:
        cams = cams * len(poses2d)
    if len(cams) != len(poses2d):
        raise DataError(f"{len(poses2d)} frames but {len(cams)} cameras")
    model = data_io.load_checkpoint(args.checkpoint, expected_joints=spec.n_joints)
    anchors = data_io.load_anchors(args.anchors, expected_joints=spec.n_joints)
    return poses2d, cams, model, anchors


def _run_frames(poses2d, cams, model, anchors, cfg, spec, threads, frames_limit=None):
    """Run every (frame, anchor) pair, frames in parallel across threads;
    returns results[frame][hyp] in deterministic order."""
    hyps = make_hypotheses([a.joints for a in anchors.poses])
    idx = list(range(len(poses2d) if frames_limit is None else min(frames_limit, len(poses2d))))

    def one_frame(f: int):
        return optimize_multi_hypothesis(hyps, poses2d[f], cams[f], model, cfg, spec)

    if threads <= 1:
        return [one_frame(f) for f in idx]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one_frame, idx))


def _trace_record(frame: int, res, cfg: OptimizerConfig) -> dict:
    rec = {"frame": frame, "hypothesis": res.anchor_id}
    tr = res.trace
    if res.error is not None:
        rec["error"] = f"{type(res.error).__name__}: {res.error}"
    if tr is None:
        return rec
    rec.update(
        {
            "initial_angle_rad": tr.initial_angle,
            "initial_translation": None
            if tr.initial_translation is None
            else [float(v) for v in tr.initial_translation],
            "final_translation": None
            if tr.final_translation is None
            else [float(v) for v in tr.final_translation],
            "iters": int(len(tr.translations)),
            "max_projection_residual_px": float(np.nanmax(tr.projection_residual_px)),
            "final_reproj_px": float(tr.reproj_error_px[-1])
            if np.isfinite(tr.reproj_error_px[-1])
            else None,
            "behind_camera_events": int((tr.behind_camera > 0).sum()),
            "max_pelvis_residual": float(np.nanmax(tr.pelvis_residual)),
        }
    )
    if tr.initial_translation is not None:
        warm = tr.translations[: cfg.warmup_iters]
        rec["warmup_translation_constant"] = bool(np.all(warm == tr.initial_translation))
    return rec


def cmd_optimize(args) -> int:
    sections = _load_sections(args)
    cfg = OptimizerConfig.from_dict(
        _override(sections.get("optimizer", {}), args, ["seed", "total_iters", "denoise_steps"])
    )
    spec = _resolve_skeleton(sections)
    resolved = {"optimizer": cfg.to_dict()}
    _print_config("optimize", resolved)
    out = _out_dir(args)
    manifest = ManifestWriter("optimize", args, resolved)
    manifest.add_inputs(args.keypoints, args.camera, args.checkpoint, args.anchors)
    poses2d, cams, model, anchors = _load_optimize_inputs(args, spec)
    results = _run_frames(poses2d, cams, model, anchors, cfg, spec, args.threads, args.frames)
    n_frames = len(results)
    n_hyp = len(anchors)
    trace_lines = []
    for k in range(n_hyp):
        stack = []
        for f in range(n_frames):
            res = results[f][k]
            if res.error is not None:
                raise type(res.error)(f"frame {f}, hypothesis {k}: {res.error}")
            stack.append(res.pose.joints)
            trace_lines.append(json.dumps(_trace_record(f, res, cfg)))
        data_io.write_poses(out / f"hyp_{k:02d}.zpse", np.stack(stack), Frame.CAMERA_ABSOLUTE, spec)
        manifest.add_outputs(out / f"hyp_{k:02d}.zpse")
    data_io.atomic_write_text(out / "traces.jsonl", "\n".join(trace_lines) + "\n")
    manifest.add_outputs(out / "traces.jsonl")
    manifest.write(out)
    print(f"[optimize] {n_frames} frames x {n_hyp} hypotheses -> {out}")
    return 0


def cmd_eval(args) -> int:
    spec = _resolve_skeleton(_load_sections(args))
    pred_paths = sorted(Path(args.pred).glob("hyp_*.zpse")) if Path(args.pred).is_dir() else [Path(args.pred)]
    if not pred_paths:
        raise DataError(f"no prediction files under {args.pred}")
    resolved = {
        "lsp14": args.lsp14,
        "root_relative": not args.absolute,
        "pred": [str(p) for p in pred_paths],
    }
    _print_config("eval", resolved)
    out = _out_dir(args)
    manifest = ManifestWriter("eval", args, resolved)
    manifest.add_inputs(args.gt, *pred_paths)
    gt, _, _ = data_io.read_poses(args.gt, expected_joints=spec.n_joints)
    hyp_sets = []
    for p in pred_paths:
        poses, _, _ = data_io.read_poses(p, expected_joints=spec.n_joints)
        if len(poses) != len(gt):
            raise DataError(f"{p}: {len(poses)} frames, ground truth has {len(gt)}")
        hyp_sets.append(poses)
    if args.lsp14:
        sel = list(spec.lsp14_subset)
        if not sel:
            raise ConfigError("skeleton spec has no lsp14_subset")
        gt = gt[:, sel]
        hyp_sets = [h[:, sel] for h in hyp_sets]
        pelvis_spec = None  # after subsetting, root-align on row 0 of the subset
    else:
        pelvis_spec = spec
    report = evaluate(
        hyp_sets,
        list(gt),
        skeleton=pelvis_spec,
        root_relative=not args.absolute,
        metadata={"gt": str(args.gt), "joints": gt.shape[1], "S": len(hyp_sets)},
    )
    table = format_report_table([report])
    data_io.atomic_write_text(out / "report.txt", table + "\n")
    data_io.atomic_write_text(
        out / "report.jsonl", "".join(json.dumps(r) + "\n" for r in report.records())
    )
    manifest.add_outputs(out / "report.txt", out / "report.jsonl")
    manifest.write(out)
    print(table)
    return 0


def cmd_sweep(args) -> int:
    sections = _load_sections(args)
    base = OptimizerConfig.from_dict(_override(sections.get("optimizer", {}), args, ["seed"]))
    spec = _resolve_skeleton(sections)
    iters = [int(v) for v in args.iters.split(",")] if args.iters else list(DEFAULT_SWEEP_ITERS)
    if any(v < 1 for v in iters):
        raise ConfigError(f"iteration counts must be positive: {iters}")
    resolved = {"optimizer": base.to_dict(), "iters": iters}
    _print_config("sweep", resolved)
    out = _out_dir(args)
    manifest = ManifestWriter("sweep", args, resolved)
    manifest.add_inputs(args.keypoints, args.camera, args.checkpoint, args.anchors, args.gt)
    poses2d, cams, model, anchors = _load_optimize_inputs(args, spec)
    gt, _, _ = data_io.read_poses(args.gt, expected_joints=spec.n_joints)
    records = []
    for n in iters:
        cfg_n = OptimizerConfig.from_dict(
            {**base.to_dict(), "total_iters": n, "warmup_iters": min(base.warmup_iters, n - 1)}
        )
        t0 = time.perf_counter()
        results = _run_frames(poses2d, cams, model, anchors, cfg_n, spec, args.threads, args.frames)
        wall = time.perf_counter() - t0
        errs = []
        for f, frame_results in enumerate(results):
            best = None
            for res in frame_results:
                if res.error is not None:
                    continue
                e = mpjpe_root_relative(res.pose.joints, gt[f], spec.pelvis_index)
                best = e if best is None else min(best, e)
            if best is not None:
                errs.append(best)
        records.append(
            {
                "iters": n,
                "frames": len(results),
                "median_mpjpe_mm": float(np.median(errs)),
                "mean_mpjpe_mm": float(np.mean(errs)),
                "wall_time_s": wall,
            }
        )
        print(f"[sweep] n={n}: median {records[-1]['median_mpjpe_mm']:.1f} mm, {wall:.1f}s")
    data_io.atomic_write_text(
        out / "sweep.jsonl", "".join(json.dumps(r) + "\n" for r in records)
    )
    manifest.add_outputs(out / "sweep.jsonl")
    manifest.write(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poselift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file with section overrides")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--noise-sigma-px", dest="noise_sigma_px", type=float, default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train the pose prior")
    common(p)
    p.add_argument("--poses", required=True, help="pose file (.zpse)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("anchors", help="select starting poses")
    common(p)
    p.add_argument("--poses", help="training pose file (.zpse)")
    p.add_argument("--checkpoint", help="model checkpoint (random_generate only)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument(
        "--strategy", choices=("kmeans", "random_sample", "random_generate"), default="kmeans"
    )
    p.set_defaults(fn=cmd_anchors)

    def optimize_inputs(p):
        p.add_argument("--keypoints", required=True, help="2D keypoint CSV")
        p.add_argument("--camera", required=True, help="camera JSON or per-frame JSONL")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--anchors", required=True)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--frames", type=int, default=None, help="only the first N frames")

    p = sub.add_parser("optimize", help="lift 2D keypoints to 3D poses")
    common(p)
    optimize_inputs(p)
    p.add_argument("--total-iters", dest="total_iters", type=int, default=None)
    p.add_argument("--denoise-steps", dest="denoise_steps", type=int, default=None)
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    common(p)
    p.add_argument("--pred", required=True, help="optimize output dir or one pose file")
    p.add_argument("--gt", required=True, help="ground-truth pose file")
    p.add_argument("--lsp14", action="store_true", help="evaluate on the 14-joint subset")
    p.add_argument("--absolute", action="store_true", help="skip root alignment")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="re-run optimize over several iteration counts")
    common(p)
    optimize_inputs(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--iters", help="comma-separated list, default "
                   + ",".join(str(v) for v in DEFAULT_SWEEP_ITERS))
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return 4
    except PoseliftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line frontend.

Subcommands cover the pipeline end to end: `defend` filters datasets,
`analyze` produces trajectory/matching/energy reports, `scaleloss` evaluates
PLY clouds, `minisplat` runs fitting jobs, `perturb` generates bounded test
perturbations, and `order` solves view orderings on their own.

Every JSON report embeds the resolved run configuration and a SHA-256 over
the input files, and all serialization is pinned (sorted keys, fixed PNG
encoder settings, no timestamps) so identical invocations produce
byte-identical outputs.

Exit codes: 0 success; 1 partial failure (some per-file work failed, details
in the summary); 2 unusable invocation, input, or configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, minisplat as ms
from .errors import AllPairsDegenerate, SplatShieldError, ZeroEnergy
from .gsply import dump_nu_csv, load_gaussian_ply, scale_loss
from .imagecore import clipped_image, load_png, load_ppm, save_png, save_ppm
from .matching import matching_rate
from .pose import PoseWeights, order_trajectory, pose_loss_matrix, \
    read_images_text
from .wavelet import BAND_NAMES, band_planes, dwt2, energy_report, \
    filter_high_freq, subband_ranges, subband_to_image

_IMAGE_SUFFIXES = {".png", ".ppm"}


class _Fail(Exception):
    """Abort the command with a specific exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    """Knobs shared across subcommands, embedded into every report."""

    seed: int = 0
    epsilon: float = 16 / 255
    tau: float = 1.6
    lambda_scale: float = 1.0e5
    w_geo: float = 1.0
    w_trans: float = 1.0
    window: int = 3
    max_keypoints: int = 512
    wavelet_level: int = 1
    denominator: str = "max"
    ratio: float = 0.8
    threshold: float = 0.06

    def validate(self):
        def bad(field, why):
            raise _Fail(2, f"config field {field!r}: {why}")

        if not isinstance(self.seed, int) or self.seed < 0:
            bad("seed", "expected a nonnegative integer")
        if not 0.0 <= self.epsilon <= 1.0:
            bad("epsilon", "must be in [0, 1]")
        if self.tau < 0:
            bad("tau", "must be >= 0")
        if self.lambda_scale < 0:
            bad("lambda_scale", "must be >= 0")
        if self.w_geo < 0 or self.w_trans < 0:
            bad("w_geo/w_trans", "must be >= 0")
        if not isinstance(self.window, int) or self.window < 1:
            bad("window", "expected an integer >= 1")
        if not isinstance(self.max_keypoints, int) or self.max_keypoints < 1:
            bad("max_keypoints", "expected an integer >= 1")
        if not isinstance(self.wavelet_level, int) or self.wavelet_level < 1:
            bad("wavelet_level", "expected an integer >= 1")
        if self.denominator not in ("max", "min"):
            bad("denominator", "must be 'max' or 'min'")
        if not 0.0 < self.ratio <= 1.0:
            bad("ratio", "must be in (0, 1]")
        if self.threshold <= 0:
            bad("threshold", "must be > 0")


def _load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as e:
            raise _Fail(2, f"cannot read config: {e}")
        except json.JSONDecodeError as e:
            raise _Fail(2, f"config is not valid JSON: {e}")
        if not isinstance(raw, dict):
            raise _Fail(2, "config must be a JSON object")
        known = {f.name for f in fields(RunConfig)}
        for key, val in raw.items():
            if key not in known:
                raise _Fail(2, f"unknown config field {key!r}")
            current = getattr(cfg, key)
            if isinstance(current, int) and isinstance(val, bool):
                raise _Fail(2, f"config field {key!r}: expected a number")
            if isinstance(current, float) and isinstance(val, (int, float)) \
                    and not isinstance(val, bool):
                val = float(val)
            elif type(current) is not type(val):
                raise _Fail(
                    2, f"config field {key!r}: expected "
                       f"{type(current).__name__}, got {type(val).__name__}")
            setattr(cfg, key, val)
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


# --- shared plumbing ---------------------------------------------------------

def _out_dir(args) -> Path:
    if not args.out:
        raise _Fail(2, "--out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _find_images(root: Path) -> list[Path]:
    if not root.is_dir():
        raise _Fail(2, f"dataset directory not found: {root}")
    files = sorted(p for p in root.iterdir()
                   if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not files:
        raise _Fail(2, f"no images (png/ppm) in {root}")
    return files


def _load_image(path: Path):
    if path.suffix.lower() == ".ppm":
        return load_ppm(path)
    return load_png(path)


def _save_image(path: Path, img):
    if path.suffix.lower() == ".ppm":
        save_ppm(path, img)
    else:
        save_png(path, img)


def _hash_files(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(paths, key=lambda p: p.name):
        h.update(p.name.encode("utf-8"))
        h.update(b"\0")
        h.update(Path(p).read_bytes())
        h.update(b"\0")
    return h.hexdigest()


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _report_skeleton(cfg: RunConfig, input_paths) -> dict:
    return {"run_config": asdict(cfg), "input_sha256": _hash_files(input_paths),
            "tool_version": __version__}


# --- defend ------------------------------------------------------------------

def cmd_defend(args, cfg: RunConfig) -> int:
    root = Path(args.dataset)
    files = _find_images(root)
    out = _out_dir(args)

    def work(path: Path):
        img = _load_image(path)
        try:
            removed = energy_report(dwt2(img)).removed_by_filter
        except ZeroEnergy:
            removed = 0.0
        filtered = filter_high_freq(img, level=cfg.wavelet_level)
        _save_image(out / path.name, filtered)
        return {"name": path.name, "width": img.width, "height": img.height,
                "energy_removed": removed}

    entries, failures = [], []
    with ThreadPoolExecutor(max_workers=args.jobs) as ex:
        futures = [(p, ex.submit(work, p)) for p in files]
        for path, fut in futures:  # collection order is input order
            try:
                entries.append(fut.result())
            except (SplatShieldError, OSError) as e:
                failures.append({"name": path.name, "error": str(e)})

    summary = _report_skeleton(cfg, files)
    summary["images"] = entries
    summary["errors"] = failures
    _write_json(out / "defend_summary.json", summary)
    return 1 if failures else 0


# --- analyze -----------------------------------------------------------------

def _band_rates(images, cfg: RunConfig, include_hh: bool):
    bands, warnings = {}, []
    wanted = ("ll", "lh", "hl") + (("hh",) if include_hh else ())
    for band in wanted:
        try:
            bands[band] = matching_rate(
                images, band, window=cfg.window,
                max_keypoints=cfg.max_keypoints, threshold=cfg.threshold,
                ratio=cfg.ratio, denominator=cfg.denominator)
        except AllPairsDegenerate as e:
            warnings.append(f"band {band}: {e}")
    return bands, warnings


def cmd_analyze(args, cfg: RunConfig) -> int:
    root = Path(args.dataset)
    files = _find_images(root)
    out = _out_dir(args)
    hashed = list(files)

    names = [p.name for p in files]
    if args.poses:
        poses_path = Path(args.poses)
        if not poses_path.is_file():
            raise _Fail(2, f"poses file not found: {poses_path}")
        hashed.append(poses_path)
        try:
            poses = read_images_text(poses_path)
        except SplatShieldError as e:
            raise _Fail(2, f"cannot parse poses: {e}")
        by_name = {p.view_id: p for p in poses}
        missing = sorted(set(by_name) - set(names))
        if missing:
            raise _Fail(2, f"poses reference unknown images: {missing[:5]}")
        posed = [n for n in names if n in by_name]
        if len(posed) < 2:
            raise _Fail(2, "need at least 2 posed images")
        unposed = [n for n in names if n not in by_name]
        matrix = pose_loss_matrix([by_name[n] for n in posed],
                                  PoseWeights(cfg.w_geo, cfg.w_trans))
        traj = order_trajectory(matrix, mode=args.mode, view_ids=posed)
        ordered_names = [posed[i] for i in traj.order]
        traj_payload = traj.as_dict()
    else:
        if len(names) < 2:
            raise _Fail(2, "need at least 2 images")
        unposed = []
        ordered_names = list(names)
        traj_payload = {"order": ordered_names, "total_cost": None,
                        "method": "input-order", "mode": "open"}

    base = _report_skeleton(cfg, hashed)
    trajectory = dict(base)
    trajectory["trajectory"] = traj_payload
    trajectory["unposed_images"] = unposed
    _write_json(out / "trajectory.json", trajectory)

    by_name_img = {p.name: _load_image(p) for p in files}
    ordered_images = [by_name_img[n] for n in ordered_names]

    bands, warnings = _band_rates(ordered_images, cfg, args.include_hh)
    rates = {k: v.overall for k, v in bands.items()}
    high = 0.5 * (rates["lh"] + rates["hl"]) \
        if "lh" in rates and "hl" in rates else None
    match = dict(base)
    match["window"] = cfg.window
    match["views"] = ordered_names
    match["bands"] = {k: v.as_dict() for k, v in bands.items()}
    match["rates"] = rates
    match["high"] = high
    match["warnings"] = warnings
    _write_json(out / "match_report.json", match)

    with open(out / "match_report.csv", "w", encoding="utf-8", newline="") as f:
        f.write("band,view_a,view_b,extracted_a,extracted_b,matched,rate\n")
        for band_name, rep in bands.items():
            for p in rep.pairs:
                f.write(f"{band_name},{ordered_names[p.view_a]},"
                        f"{ordered_names[p.view_b]},{p.extracted_a},"
                        f"{p.extracted_b},{p.matched},{p.rate!r}\n")

    energy = dict(base)
    per_view = {}
    energy_warnings = []
    mean_acc = np.zeros(4)
    counted = 0
    for name in ordered_names:
        try:
            rep = energy_report(dwt2(by_name_img[name]))
        except ZeroEnergy:
            energy_warnings.append(f"{name} carries no energy")
            continue
        per_view[name] = rep.as_dict()
        mean_acc += rep.mean
        counted += 1
    energy["views"] = per_view
    energy["warnings"] = energy_warnings
    energy["dataset_mean"] = [float(v) for v in mean_acc / counted] \
        if counted else None
    _write_json(out / "energy_report.json", energy)
    with open(out / "energy_report.csv", "w", encoding="utf-8", newline="") as f:
        f.write("view,channel,ll,lh,hl,hh\n")
        for name, rep in per_view.items():
            for ci, row in enumerate(rep["per_channel"]):
                f.write(f"{name},{ci}," + ",".join(repr(v) for v in row) + "\n")

    picks = sorted({0, len(ordered_names) // 2, len(ordered_names) - 1})
    ranges = dict(base)
    ranges["views"] = {}
    for i in picks:
        name = ordered_names[i]
        subs = dwt2(by_name_img[name])
        tiles = {b: subband_to_image(band_planes(subs, b)) for b in BAND_NAMES}
        top = np.concatenate([tiles["ll"].planes, tiles["lh"].planes], axis=2)
        bot = np.concatenate([tiles["hl"].planes, tiles["hh"].planes], axis=2)
        grid = np.concatenate([top, bot], axis=1)
        save_png(out / f"subbands_{Path(name).stem}.png", clipped_image(grid))
        ranges["views"][name] = {
            b: [list(r) for r in subband_ranges(band_planes(subs, b))]
            for b in BAND_NAMES}
    _write_json(out / "subband_ranges.json", ranges)

    if args.baseline:
        try:
            baseline = json.loads(Path(args.baseline).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise _Fail(2, f"cannot read baseline report: {e}")
        base_rates = baseline.get("rates", {})
        diff = dict(base)
        diff["baseline"] = str(args.baseline)
        diff["rate_drop"] = {
            b: base_rates[b] - rates[b]
            for b in rates if b in base_rates}
        if high is not None and baseline.get("high") is not None:
            diff["high_drop"] = baseline["high"] - high
        _write_json(out / "match_diff.json", diff)
    return 0


# --- scaleloss ---------------------------------------------------------------

def cmd_scaleloss(args, cfg: RunConfig) -> int:
    ply = Path(args.ply)
    if not ply.is_file():
        raise _Fail(2, f"PLY file not found: {ply}")
    out = _out_dir(args)
    try:
        cloud = load_gaussian_ply(ply)
    except SplatShieldError as e:
        raise _Fail(2, f"cannot load {ply.name}: {e}")
    report = scale_loss(cloud, tau=cfg.tau, lam=cfg.lambda_scale)
    payload = _report_skeleton(cfg, [ply])
    payload["scale_loss"] = report.as_dict()
    _write_json(out / "scale_loss.json", payload)
    if args.csv:
        dump_nu_csv(report, out / "nu.csv")
    return 0


# --- minisplat ---------------------------------------------------------------

def _job_get(obj, path, typ, default=None, required=False):
    """Walk a dotted path through nested dicts with typed, named errors."""
    cur = obj
    parts = path.split(".")
    for i, key in enumerate(parts):
        if not isinstance(cur, dict):
            prefix = ".".join(parts[:i]) or path
            raise _Fail(2, f"minisplat config field {prefix!r}: "
                           "expected an object")
        if key not in cur:
            if required:
                raise _Fail(2, f"minisplat config field {path!r}: missing")
            return default
        cur = cur[key]
    if typ is float and isinstance(cur, int) and not isinstance(cur, bool):
        cur = float(cur)
    if typ is not None and (not isinstance(cur, typ)
                            or isinstance(cur, bool) and typ is not bool):
        raise _Fail(2, f"minisplat config field {path!r}: expected "
                       f"{getattr(typ, '__name__', typ)}")
    return cur


def cmd_minisplat(args, cfg: RunConfig) -> int:
    job_path = Path(args.job)
    if not job_path.is_file():
        raise _Fail(2, f"job config not found: {job_path}")
    try:
        job = json.loads(job_path.read_text("utf-8"))
    except json.JSONDecodeError as e:
        raise _Fail(2, f"job config is not valid JSON: {e}")
    out = _out_dir(args)
    base_dir = job_path.parent

    targets_spec = _job_get(job, "targets", list, required=True)
    if not targets_spec:
        raise _Fail(2, "minisplat config field 'targets': must not be empty")
    hashed = [job_path]
    views = []
    for i, entry in enumerate(targets_spec):
        if not isinstance(entry, dict):
            raise _Fail(2, f"minisplat config field 'targets[{i}]': "
                           "expected an object")
        rel = _job_get(entry, "path", str, required=True)
        off = entry.get("offset", [0.0, 0.0])
        if (not isinstance(off, list) or len(off) != 2
                or not all(isinstance(v, (int, float))
                           and not isinstance(v, bool) for v in off)):
            raise _Fail(2, f"minisplat config field 'targets[{i}].offset': "
                           "expected [dx, dy]")
        path = (base_dir / rel).resolve()
        if not path.is_file():
            raise _Fail(2, f"target image not found: {path}")
        hashed.append(path)
        views.append(ms.ViewTarget(_load_image(path),
                                   (float(off[0]), float(off[1]))))

    clean = None
    clean_rel = _job_get(job, "clean_reference", str)
    if clean_rel:
        clean_path = (base_dir / clean_rel).resolve()
        if not clean_path.is_file():
            raise _Fail(2, f"clean reference not found: {clean_path}")
        hashed.append(clean_path)
        clean = _load_image(clean_path)

    h, w = views[0].image.height, views[0].image.width
    ckpt_rel = _job_get(job, "scene.checkpoint", str)
    if ckpt_rel:
        ckpt_path = (base_dir / ckpt_rel).resolve()
        if not ckpt_path.is_file():
            raise _Fail(2, f"scene checkpoint not found: {ckpt_path}")
        hashed.append(ckpt_path)
        try:
            scene = ms.scene_from_dict(
                json.loads(ckpt_path.read_text("utf-8"))["scene"])
        except (KeyError, json.JSONDecodeError) as e:
            raise _Fail(2, f"bad scene checkpoint: {e}")
    else:
        n = _job_get(job, "scene.n_gaussians", int, required=True)
        if n < 1:
            raise _Fail(2, "minisplat config field 'scene.n_gaussians': "
                           "expected a positive integer")
        seed = _job_get(job, "scene.seed", int, default=cfg.seed)
        bg = _job_get(job, "scene.background", list,
                      default=[0.5, 0.5, 0.5])
        if len(bg) != 3 or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool)
                for v in bg):
            raise _Fail(2, "minisplat config field 'scene.background': "
                           "expected 3 numbers")
        spread = _job_get(job, "scene.spread", float)
        scene = ms.seed_scene(n, h, w, seed=seed, background=bg,
                              spread=spread)

    train_raw = _job_get(job, "train", dict, default={})
    known = {f.name for f in fields(ms.TrainConfig)}
    for key in train_raw:
        if key not in known:
            raise _Fail(2, f"minisplat config field 'train.{key}': unknown")
    for key in ("iterations", "seed", "scale_loss_warmup"):
        if key in train_raw and (isinstance(train_raw[key], bool)
                                 or not isinstance(train_raw[key], int)):
            raise _Fail(2, f"minisplat config field 'train.{key}': "
                           "expected an integer")
    try:
        tcfg = ms.TrainConfig(**train_raw)
    except (TypeError, ValueError) as e:
        raise _Fail(2, f"minisplat config field 'train': {e}")

    try:
        fitted, trace, metrics = ms.fit(scene, views, tcfg,
                                        clean_reference=clean)
    except SplatShieldError as e:
        raise _Fail(2, f"fit failed: {e}")

    payload = _report_skeleton(cfg, hashed)
    payload["job"] = job
    payload["train_config"] = asdict(tcfg)
    payload["scene"] = ms.scene_to_dict(fitted)
    payload["metrics"] = metrics
    _write_json(out / "checkpoint.json", payload)
    ms.trace_to_csv(trace, out / "trace.csv")
    save_png(out / "final_render.png", ms.render(fitted))

    line = (f"psnr={metrics['psnr'][0]:.4f} ssim={metrics['ssim'][0]:.4f} "
            f"max_nu={metrics['max_nu']:.4f}")
    if metrics["psnr_clean"] is not None:
        line += (f" psnr_clean={metrics['psnr_clean']:.4f} "
                 f"ssim_clean={metrics['ssim_clean']:.4f}")
    print(line)
    return 0


# --- perturb -----------------------------------------------------------------

def cmd_perturb(args, cfg: RunConfig) -> int:
    root = Path(args.dataset)
    if root.is_file():
        files = [root]
    else:
        files = _find_images(root)
    out = _out_dir(args)
    entries, failures = [], []
    for i, path in enumerate(files):
        try:
            img = _load_image(path)
            noisy = ms.perturb(img, mode=args.mode, epsilon=cfg.epsilon,
                               seed=cfg.seed, view=i)
            _save_image(out / path.name, noisy)
            entries.append({"name": path.name, "view_index": i,
                            "mode": args.mode, "epsilon": cfg.epsilon})
        except (SplatShieldError, OSError, ValueError) as e:
            failures.append({"name": path.name, "error": str(e)})
    summary = _report_skeleton(cfg, files)
    summary["images"] = entries
    summary["errors"] = failures
    _write_json(out / "perturb_summary.json", summary)
    return 1 if failures else 0


# --- order -------------------------------------------------------------------

def cmd_order(args, cfg: RunConfig) -> int:
    poses_path = Path(args.poses)
    if not poses_path.is_file():
        raise _Fail(2, f"poses file not found: {poses_path}")
    try:
        poses = read_images_text(poses_path)
    except SplatShieldError as e:
        raise _Fail(2, f"cannot parse poses: {e}")
    if len(poses) < 2:
        raise _Fail(2, "need at least 2 poses")
    matrix = pose_loss_matrix(poses, PoseWeights(cfg.w_geo, cfg.w_trans))
    traj = order_trajectory(matrix, mode=args.mode,
                            view_ids=[p.view_id for p in poses])
    print(" -> ".join(str(v) for v in traj.as_dict()["order"]))
    if args.out:
        out = _out_dir(args)
        payload = _report_skeleton(cfg, [poses_path])
        payload["trajectory"] = traj.as_dict()
        _write_json(out / "trajectory.json", payload)
    return 0


# --- wiring ------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatshield",
        description="Frequency-domain defense toolkit for splat training sets")
    parser.add_argument("--config", help="JSON file overriding run defaults")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the run seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--jobs", type=int, default=os.cpu_count(),
                        help="worker threads for per-image work")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("defend", help="low-pass filter a dataset")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("analyze",
                       help="trajectory, matching-rate and energy reports")
    p.add_argument("dataset")
    p.add_argument("--poses", help="COLMAP images.txt for trajectory ordering")
    p.add_argument("--mode", choices=("open", "closed"), default="open")
    p.add_argument("--include-hh", action="store_true")
    p.add_argument("--baseline",
                   help="previous match_report.json to diff against")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("scaleloss", help="normalized-variance report for a PLY")
    p.add_argument("ply")
    p.add_argument("--csv", action="store_true",
                   help="also dump per-Gaussian nu values")
    p.set_defaults(func=cmd_scaleloss)

    p = sub.add_parser("minisplat", help="run a fitting job")
    p.add_argument("job", help="job config JSON")
    p.set_defaults(func=cmd_minisplat)

    p = sub.add_parser("perturb", help="add bounded synthetic perturbations")
    p.add_argument("dataset", help="image file or dataset directory")
    p.add_argument("--mode", choices=("uniform", "checker", "per-view"),
                   default="uniform")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("order", help="solve the view ordering for a pose file")
    p.add_argument("poses")
    p.add_argument("--mode", choices=("open", "closed"), default="open")
    p.set_defaults(func=cmd_order)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_run_config(args)
        return args.func(args, cfg)
    except _Fail as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except SplatShieldError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``gnrs solve | synth | noise-sweep | rank-sweep | ablation | p-sweep``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import fields, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .algo1 import Algo1Config, run_algorithm1
from .algo2 import Algo2Config, run_algorithm2
from .data_model import MalformedInputError, MeasurementMatrix, RotationStack
from .experiments import (NOISE_LEVELS, ablation_run, add_noise, datafit_sweep, e3d,
                          generate_scene, singular_count_sweep, table_to_csv)
from .io import load_matrix, save_matrix

logger = logging.getLogger("grassnrsfm")

# CLI flag -> config field, per algorithm
_FLAG_FIELDS = {
    1: {"ks": "n_spatial", "kt": "n_temporal", "ps": "p_spatial", "pt": "p_temporal",
        "max_iters": "max_iter", "seed": "seed"},
    2: {"ks": "n_clusters", "ps": "p", "tau": "tau", "dtilde": "dtilde",
        "max_iters": "max_iter", "seed": "seed"},
}
# friendlier spellings accepted in config files
_ALIASES = {"max_iters": "max_iter", "k_s": "n_spatial", "k_t": "n_temporal",
            "p_s": "p_spatial", "p_t": "p_temporal", "k": "n_clusters", "mu": "gamma"}


class CLIError(Exception):
    pass


# -- config ---------------------------------------------------------------------

def read_config_file(path) -> dict:
    """``key=value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CLIError(f"{path}: cannot read config ({exc.strerror})") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise CLIError(f"{path}:{n}: expected key=value, got {raw.strip()!r}")
        out[key.strip().lower()] = val.strip()
    return out


def _coerce(cls, name, text, origin):
    kinds = {f.name: f.type for f in fields(cls)}
    key = _ALIASES.get(name, name)
    if key not in kinds:
        raise CLIError(f"{origin}: unknown setting {name!r} for {cls.__name__}")
    kind = str(kinds[key])
    try:
        if text in ("none", "None", ""):
            return key, None
        if "int" in kind:
            return key, int(text)
        return key, float(text)
    except ValueError:
        raise CLIError(f"{origin}: {name}={text!r} is not a number") from None


def build_config(algo, args, strict=True):
    cls = Algo1Config if algo == 1 else Algo2Config
    values = {}
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config).items():
            key, val = _coerce(cls, k, v, args.config)
            values[key] = val
    for flag, key in _FLAG_FIELDS[algo].items():
        val = getattr(args, flag, None)
        if val is not None:
            values[key] = val
    for flag in ("kt", "pt") if algo == 2 else ("tau", "dtilde"):
        if strict and getattr(args, flag, None) is not None:
            raise CLIError(f"--{flag} does not apply to algorithm {algo}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise CLIError(f"invalid configuration: {exc}") from None


# -- inputs ---------------------------------------------------------------------

def _load(path, what):
    if not os.path.exists(path):
        raise CLIError(f"{path}: {what} file not found")
    try:
        return load_matrix(path)
    except (MalformedInputError, ValueError) as exc:
        raise CLIError(f"{path}: cannot parse {what}: {exc}") from None


def load_inputs(w_path, r_path, gt_path=None, center=False):
    """Load and validate ``W`` (2F x P), ``R`` (2F x 3) and optional ``S_gt`` (3F x P)."""
    W = _load(w_path, "measurement")
    try:
        W = MeasurementMatrix(W).data
    except MalformedInputError as exc:
        raise CLIError(f"{w_path}: {exc}; expected shape 2F x P") from None
    F, P = W.shape[0] // 2, W.shape[1]
    R = _load(r_path, "rotation")
    if R.shape != (2 * F, 3):
        raise CLIError(f"{r_path}: rotation matrix is {R.shape[0]}x{R.shape[1]}, "
                       f"expected shape {2 * F}x3 (2F x 3)")
    try:
        R = np.array(RotationStack(R).blocks)
    except MalformedInputError as exc:
        raise CLIError(f"{r_path}: {exc}") from None
    gt = None
    if gt_path:
        gt = _load(gt_path, "ground-truth")
        if gt.shape != (3 * F, P):
            raise CLIError(f"{gt_path}: ground truth is {gt.shape[0]}x{gt.shape[1]}, "
                           f"expected shape {3 * F}x{P} (3F x P)")
    if center:
        W = W - W.mean(axis=1, keepdims=True)
        if gt is not None:
            gt = gt - gt.mean(axis=1, keepdims=True)
    return np.array(W), R, gt


# -- outputs --------------------------------------------------------------------

def _write_text(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def write_solve_outputs(out, result, W, R, gt, fmt, per_frame_flip):
    os.makedirs(out, exist_ok=True)
    S = result.shape_original_order()
    ext = "bin" if fmt == "binary" else "csv"
    save_matrix(S, os.path.join(out, f"S.{ext}"), fmt)
    keys = ["iter", "maxgap", "beta", "reproj_fro", "nuclear_sharp"]
    _write_text(os.path.join(out, "diagnostics.csv"),
                _rows_csv(keys, [[_fmt(d[k]) for k in keys] for d in result.diagnostics]))
    labels = result.labels_original_order()
    _write_text(os.path.join(out, "clusters.csv"),
                _rows_csv(["point_id", "label"], [[i, int(l)] for i, l in enumerate(labels)]))
    resid = W - RotationStack(R).project(S)
    metrics = {"reproj_fro": float(np.linalg.norm(resid)), "iters": int(result.n_iter),
               "stop_reason": result.stop_reason}
    if gt is not None:
        metrics["e3d"] = e3d(S, gt, per_frame_flip=per_frame_flip)
    _write_json(os.path.join(out, "metrics.json"), metrics)
    return metrics


def _dump_callback(out, every):
    if not every:
        return None
    folder = os.path.join(out, "state")
    os.makedirs(folder, exist_ok=True)

    def dump(it, st):
        if it % every:
            return
        get = st.get if isinstance(st, dict) else (lambda k: getattr(st, k))
        save_matrix(get("S"), os.path.join(folder, f"S_iter{it:05d}.bin"), "binary")
        save_matrix(get("Ssharp"), os.path.join(folder, f"Ssharp_iter{it:05d}.bin"), "binary")
    return dump


# -- commands -------------------------------------------------------------------

def cmd_solve(args) -> int:
    W, R, gt = load_inputs(args.w, args.r, args.gt, center=args.center)
    cfg = build_config(args.algo, args)
    solver = run_algorithm1 if args.algo == 1 else run_algorithm2
    t0 = time.perf_counter()
    result = solver(W, R, cfg, callback=_dump_callback(args.out, args.dump_state_every))
    wall = time.perf_counter() - t0
    metrics = write_solve_outputs(args.out, result, W, R, gt, args.format, args.per_frame_flip)
    # wall time lives apart from metrics.json so that file stays reproducible
    _write_json(os.path.join(args.out, "timing.json"), {"wall_seconds": wall})
    logger.info("%s", json.dumps(metrics, sort_keys=True))
    return 0


def _scene_args(args):
    return dict(F=args.frames, P=args.points, n_groups=args.groups, p_true=args.p_true,
                n_modes=args.modes, deform_scale=args.deform_scale, seed=args.seed,
                orthogonal=args.orthogonal, center=not args.no_center)


def _scene_or_files(args):
    if args.w:
        if not (args.r and args.gt):
            raise CLIError("--w needs --r and --gt for sweeps")
        return load_inputs(args.w, args.r, args.gt, center=args.center)
    try:
        sc = generate_scene(**_scene_args(args))
    except ValueError as exc:
        raise CLIError(f"cannot generate scene: {exc}") from None
    return sc.W, sc.R, sc.S_gt


def cmd_synth(args) -> int:
    try:
        sc = generate_scene(**_scene_args(args))
    except ValueError as exc:
        raise CLIError(f"cannot generate scene: {exc}") from None
    os.makedirs(args.out, exist_ok=True)
    ext = "bin" if args.format == "binary" else "csv"
    W = add_noise(sc.W, args.noise, seed=args.seed) if args.noise else sc.W
    save_matrix(W, os.path.join(args.out, f"W.{ext}"), args.format)
    save_matrix(sc.R.reshape(-1, 3), os.path.join(args.out, f"R.{ext}"), args.format)
    save_matrix(sc.S_gt, os.path.join(args.out, f"S_gt.{ext}"), args.format)
    _write_text(os.path.join(args.out, "labels.csv"),
                _rows_csv(["point_id", "label"],
                          [[i, int(l)] for i, l in enumerate(sc.planted_labels)]))
    return 0


def _emit_table(rows, out):
    text = table_to_csv(rows)
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        _write_text(out, text)


def _int_list(text):
    vals = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            vals.extend(range(int(a), int(b) + 1))
        elif part:
            vals.append(int(part))
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def cmd_noise_sweep(args) -> int:
    W, R, gt = _scene_or_files(args)
    algos = sorted(set(args.algos))
    cfgs = {a: build_config(a, args, strict=False) for a in algos}
    rows = []
    for i, lam in enumerate(args.levels):
        Wn = add_noise(W, lam, seed=args.seed + i)
        row = {"lambda_g": float(lam)}
        for a in algos:
            res = (run_algorithm1 if a == 1 else run_algorithm2)(Wn, R, cfgs[a])
            row[f"e3d_algo{a}"] = e3d(res.S, gt, res.P_history)
        rows.append(row)
    _emit_table(rows, args.out)
    return 0


def cmd_rank_sweep(args) -> int:
    W, R, gt = _scene_or_files(args)
    cfg = build_config(args.algo, args)
    field = "p_spatial" if args.algo == 1 else "p"
    _emit_table(datafit_sweep(W, R, gt, args.k_list, algo=args.algo, config=cfg, field=field),
                args.out)
    return 0


def cmd_ablation(args) -> int:
    W, R, gt = _scene_or_files(args)
    cfg = build_config(1, args)
    rows = [{"mode": m, "e3d": ablation_run(W, R, gt, m, cfg)} for m in args.variants]
    _emit_table(rows, args.out)
    return 0


def cmd_p_sweep(args) -> int:
    W, R, gt = _scene_or_files(args)
    cfg = build_config(args.algo, args)
    _emit_table(singular_count_sweep(W, R, gt, args.p_list, algo=args.algo, config=cfg),
                args.out)
    return 0


# -- parser ---------------------------------------------------------------------

def _add_solver_flags(p, algo_flag=True):
    if algo_flag:
        p.add_argument("--algo", type=int, choices=(1, 2), default=1)
    p.add_argument("--config", help="key=value settings file ('#' comments)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ks", type=int, help="spatial clusters (K for algorithm 2)")
    p.add_argument("--kt", type=int, help="temporal clusters (algorithm 1)")
    p.add_argument("--ps", type=int, help="spatial subspace dimension")
    p.add_argument("--pt", type=int, help="temporal subspace dimension (algorithm 1)")
    p.add_argument("--tau", type=float, help="energy threshold for the reduced dimension")
    p.add_argument("--dtilde", type=int, help="reduced dimension override")
    p.add_argument("--max-iters", type=int, dest="max_iters")


def _add_scene_flags(p):
    g = p.add_argument_group("synthetic scene")
    g.add_argument("--frames", type=int, default=20)
    g.add_argument("--points", type=int, default=400)
    g.add_argument("--groups", type=int, default=2)
    g.add_argument("--p-true", type=int, default=3, dest="p_true")
    g.add_argument("--modes", type=int, default=2)
    g.add_argument("--deform-scale", type=float, default=1.0, dest="deform_scale")
    g.add_argument("--orthogonal", action="store_true")
    g.add_argument("--no-center", action="store_true", dest="no_center")


def _add_common(p):
    p.add_argument("--threads", type=int, default=None,
                   help="cap on BLAS threads (default: $GNRS_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_sweep_inputs(p):
    p.add_argument("--w", help="measurement matrix (else a synthetic scene is used)")
    p.add_argument("--r")
    p.add_argument("--gt")
    p.add_argument("--center", action="store_true")
    p.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    _add_scene_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnrs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="reconstruct a shape from W and R")
    p.add_argument("--w", required=True)
    p.add_argument("--r", required=True)
    p.add_argument("--gt")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "binary"), default="csv")
    p.add_argument("--dump-state-every", type=int, default=0, dest="dump_state_every")
    p.add_argument("--per-frame-flip", action="store_true", dest="per_frame_flip")
    p.add_argument("--center", action="store_true", help="subtract each frame's mean")
    _add_solver_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("synth", help="write a synthetic scene")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="lambda_g noise level for W")
    p.add_argument("--format", choices=("csv", "binary"), default="csv")
    _add_scene_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("noise-sweep", help="e3d against the noise level")
    p.add_argument("--levels", type=_float_list, default=list(NOISE_LEVELS))
    p.add_argument("--algos", type=_int_list, default=[1, 2])
    _add_solver_flags(p, algo_flag=False)
    _add_sweep_inputs(p)
    _add_common(p)
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("rank-sweep", help="data fit and ground-truth fit against rank")
    p.add_argument("--k-list", type=_int_list, default=list(range(1, 11)), dest="k_list")
    _add_solver_flags(p)
    _add_sweep_inputs(p)
    _add_common(p)
    p.set_defaults(func=cmd_rank_sweep)

    p = sub.add_parser("ablation", help="spatial/temporal self-expression on and off")
    p.add_argument("--variants", type=lambda s: [m.strip() for m in s.split(",")],
                   default=["none", "spatial", "temporal", "both"])
    _add_solver_flags(p, algo_flag=False)
    _add_sweep_inputs(p)
    _add_common(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("p-sweep", help="e3d against the number of retained singular vectors")
    p.add_argument("--p-list", type=_int_list, default=list(range(1, 7)), dest="p_list")
    _add_solver_flags(p)
    _add_sweep_inputs(p)
    _add_common(p)
    p.set_defaults(func=cmd_p_sweep)
    return parser


def _thread_limit(args):
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("GNRS_THREADS")
        if not env:
            return None
        try:
            n = int(env)
        except ValueError:
            raise CLIError(f"GNRS_THREADS={env!r} is not an integer") from None
    if n < 1:
        raise CLIError("thread count must be positive")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is None and args.command != "synth":
        args.seed = None if args.command == "solve" else 0
    try:
        n = _thread_limit(args)
        if n is None:
            return args.func(args)
        with threadpool_limits(limits=n):
            return args.func(args)
    except CLIError as exc:
        print(f"gnrs: error: {exc}", file=sys.stderr)
        return 2
    except (MalformedInputError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"gnrs: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

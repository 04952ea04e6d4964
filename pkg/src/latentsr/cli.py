"""Command-line entry point.

Exit codes: 0 on success, 2 for usage, format, configuration or I/O errors,
3 when toy training diverges.
"""

import argparse
import csv
import glob
import io
import os
import sys

import numpy as np

from . import daw, evaluation, lfim, lrrb
from .config import load_config
from .errors import DivergenceError, LatentSRError
from .spatial_filters import detail_map
from .tensor_io import (
    _atomic_write,
    image_read_png,
    image_write_png,
    tensor_read_ft32,
    tensor_write_ft32,
    to_gray,
)

EXIT_USAGE = 2
EXIT_DIVERGED = 3


def _f(x):
    return f"{x:.6f}"


def cmd_detail_map(args, out):
    img = image_read_png(args.inp)
    d = detail_map(to_gray(img))
    tensor_write_ft32(d, args.out)
    if args.png:
        # detail values already live in [0, 1]
        image_write_png(d, args.png)
    print(f"detail_max={_f(float(d.max()))} detail_mean={_f(float(d.mean()))}", file=out)


def cmd_daw(args, out):
    cfg = load_config(daw.DawConfig, args.config)
    sr = image_read_png(args.sr)
    hq = image_read_png(args.hq)
    if sr.shape != hq.shape:
        raise LatentSRError(f"size mismatch: {args.sr} is {sr.shape}, {args.hq} is {hq.shape}")
    perc = tensor_read_ft32(args.perc) if args.perc else None
    if perc is not None and perc.ndim != 2:
        raise LatentSRError(f"{args.perc}: perceptual map must be rank 2, got shape {perc.shape}")
    stages = daw.daw_trace(sr, hq, cfg, e_perc=perc)
    tensor_write_ft32(stages["weights"], args.out)
    if perc is None:
        print("diagnostics: no --perc given, using blur-pyramid perceptual proxy", file=out)
    print(f"weighted_l2={_f(stages['l2'])}", file=out)
    if perc is not None:
        print(f"weighted_perc={_f(stages['perc_loss'])}", file=out)


def cmd_lfim(args, out):
    cfg = load_config(lfim.LfimConfig, args.config)
    z = tensor_read_ft32(args.latent)
    if z.ndim != 3:
        raise LatentSRError(f"{args.latent}: latent must be rank 3, got shape {z.shape}")
    if cfg.hf_use_diff and not args.ref:
        raise LatentSRError("hf_use_diff=true requires --ref")
    z_ref = tensor_read_ft32(args.ref) if args.ref else None
    lq = image_read_png(args.lq)
    detail_lq = lfim.lq_detail(lq)
    z_f = lfim.lfim_apply(z, detail_lq, cfg, z_ref=z_ref)
    tensor_write_ft32(z_f, args.out)
    detail = lfim.latent_detail(detail_lq, z.shape[1:])
    g_lf, g_hf = lfim.lfim_gates(z, detail, cfg)
    for c in range(z.shape[0]):
        print(f"channel {c}: lf_gate={_f(float(g_lf.m_ch[c]))} hf_gate={_f(float(g_hf.m_ch[c]))}", file=out)
    delta = z_f.astype(np.float64) - z
    print(f"injected_delta_l2={_f(float(np.sqrt(np.sum(delta * delta))))}", file=out)


def cmd_lrrb_demo(args, out):
    data = lrrb.synthetic_task(seed=args.seed)
    params = lrrb.init_params(seed=args.seed)
    result = lrrb.lrrb_train_toy(data, params, steps=args.steps)
    lrrb.save_params(result.params, args.out)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "loss"])
    for i, loss in enumerate(result.losses):
        writer.writerow([i, f"{loss:.6f}"])
    _atomic_write(os.path.join(args.out, "loss.csv"), buf.getvalue().encode())
    print(
        f"initial_loss={_f(result.losses[0])} final_loss={_f(result.losses[-1])} ratio={_f(result.ratio)}",
        file=out,
    )


def cmd_refine(args, out):
    z_l = tensor_read_ft32(args.zl)
    r = tensor_read_ft32(args.r)
    params = lrrb.load_params(args.params)
    state = lrrb.refine(z_l, r, params)
    tensor_write_ft32(state.z_r, args.out)
    print(f"max_abs_delta_r={_f(float(np.max(np.abs(state.delta_r))))}", file=out)


def cmd_trend(args, out):
    paths = sorted(glob.glob(os.path.join(args.hq_dir, "*.png")))
    if len(paths) < evaluation.MIN_TREND_IMAGES:
        raise LatentSRError(
            f"{args.hq_dir}: need at least {evaluation.MIN_TREND_IMAGES} PNG images, found {len(paths)}"
        )
    images = [image_read_png(p) for p in paths]
    rows = evaluation.lfim_trend_report(
        images, args.sweep, degradation=evaluation.DegradationConfig(seed=args.seed)
    )
    _atomic_write(args.out, evaluation.report_csv(rows).encode())
    out.write(evaluation.report_text(rows))


def cmd_hf_error(args, out):
    base = tensor_read_ft32(args.base)
    refined = tensor_read_ft32(args.refined)
    true = tensor_read_ft32(args.true)
    m = evaluation.sign_log(evaluation.hf_error_map(base, refined, true))
    if args.out.lower().endswith(".png"):
        image_write_png(evaluation.diverging_rgb(m), args.out)
    else:
        tensor_write_ft32(m, args.out)
    print(f"max_abs={_f(float(np.max(np.abs(m))))} mean={_f(float(m.mean()))}", file=out)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="latentsr", description="Detail-aware weighting, latent frequency injection and residual refinement."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detail-map", help="detail map of an image")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--png")
    p.set_defaults(func=cmd_detail_map)

    p = sub.add_parser("daw", help="difficulty weights and weighted losses")
    p.add_argument("--sr", required=True)
    p.add_argument("--hq", required=True)
    p.add_argument("--perc")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_daw)

    p = sub.add_parser("lfim", help="frequency injection into a latent")
    p.add_argument("--latent", required=True)
    p.add_argument("--lq", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--ref")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lfim)

    p = sub.add_parser("lrrb-demo", help="train the refinement block on the toy task")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lrrb_demo)

    p = sub.add_parser("refine", help="apply a trained refinement block")
    p.add_argument("--zl", required=True)
    p.add_argument("--r", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("trend", help="LF or HF intensity sweep over a directory of HQ images")
    p.add_argument("--hq-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sweep", choices=("lf", "hf"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_trend)

    p = sub.add_parser("hf-error", help="signed high-frequency error-improvement map")
    p.add_argument("--base", required=True)
    p.add_argument("--refined", required=True)
    p.add_argument("--true", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hf_error)
    return parser


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args, out)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=err)
        return EXIT_DIVERGED
    except (LatentSRError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())

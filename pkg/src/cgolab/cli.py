"""Command-line entry point: verify | quasimode | reconstruct | sweep.

Exit codes: 0 success, 1 invariant or solver failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from threadpoolctl import threadpool_limits

from . import config as config_mod
from . import io as cio
from .errors import CGOError, ConfigError
from .geometry import Profile, TransversalManifold, build_fermi_chart, shoot_geodesic
from .quasimode import QuasimodeConfig, assemble_quasimode, make_beam, make_spectral_parameter, quasimode_residual
from .reconstruct import SmoothBump, noiseless_schedule, parameter_schedule, reconstruct, sigma_for
from .cylinder import LineGrid
from .spectral import band_grid

CSV_HEADER = ["k", "eps", "case", "tau", "lambda_window", "l2_error", "wall_ms"]


def _manifold(cfg):
    return TransversalManifold(Profile(cfg.family, cfg.amplitude, cfg.width))


def _coefficient(cfg):
    return SmoothBump(cfg.c_amplitude, cfg.c_x1, cfg.c_w1, (cfg.c_center_x, cfg.c_center_y), cfg.c_radius)


def _schedule(k, eps, sigma, cfg):
    return noiseless_schedule(k, sigma) if eps == 0 else parameter_schedule(k, eps, sigma, cfg.T)


def cmd_verify(cfg, args):
    from .verify import run_suite
    report = run_suite(cfg)
    for e in report:
        vals = " ".join(f"{k}={v:.6g}" for k, v in e["measured"].items())
        print(f"{'PASS' if e['passed'] else 'FAIL'} {e['name']} {vals}{' ' + e['error'] if 'error' in e else ''}")
    path = os.path.join(cio.ensure_dir(cfg.out), "verify_report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"invariants": report, "passed": all(e["passed"] for e in report)}, fh, indent=2)
    n_fail = sum(not e["passed"] for e in report)
    print(f"{len(report) - n_fail}/{len(report)} invariants passed; report: {path}")
    return 1 if n_fail else 0


def cmd_quasimode(cfg, args):
    M0 = _manifold(cfg)
    sp = make_spectral_parameter(cfg.k, cfg.tau, cfg.lam)
    geo = shoot_geodesic(M0, (0.0, 0.0), (1.0, 0.0), extend=cfg.delta)
    chart = build_fermi_chart(geo, cfg.delta)
    qcfg = QuasimodeConfig(delta=cfg.delta, n=cfg.n)
    beam = make_beam(chart, sp, qcfg)
    grid = band_grid(M0, abs(sp.s) + cfg.band_margin)
    qm = assemble_quasimode(chart, beam.phase, beam.amplitude, sp, qcfg, grid)
    _, res, rel = quasimode_residual(qm)
    sigma = sigma_for(M0)
    l4 = qm.l4_norm()
    report = {
        "k": sp.k, "tau": sp.tau, "lambda": sp.lam, "varsigma": sp.varsigma,
        "residual_l2": res, "relative_residual": rel,
        "l4_norm": l4, "l4_norm_weighted": l4 * math.exp(-sigma * abs(sp.lam)),
        "residual_bound_ratio": rel * sp.varsigma ** 1.5,
    }
    out = cio.ensure_dir(cfg.out)
    cio.write_grid_dump(os.path.join(out, "quasimode.grid"), qm.field,
                        spacings=(grid.h, 2 * math.pi / grid.n_theta), meta={"kind": grid.kind, **report})
    with open(os.path.join(out, "quasimode.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    for key in ("varsigma", "relative_residual", "l4_norm", "l4_norm_weighted", "residual_bound_ratio"):
        print(f"{key} = {report[key]:.6g}")
    return 0


def _run_one(cfg, k, eps, sigma, pool, index):
    M0 = _manifold(cfg)
    sch = _schedule(k, eps, sigma, cfg)
    res = reconstruct(M0, _coefficient(cfg), k, sch, sigma, eps=eps, seed=cfg.seed,
                      line=LineGrid(cfg.T, cfg.n1, cfg.n_pad), qcfg=QuasimodeConfig(delta=cfg.delta, n=cfg.n),
                      y0_spacing=cfg.y0_spacing, margin=cfg.margin, n_lambda=cfg.n_lambda, index=index, pool=pool)
    return sch, res


def cmd_reconstruct(cfg, args):
    k = args.k if args.k is not None else cfg.k_list[0]
    eps = args.eps if args.eps is not None else cfg.eps_list[0]
    sigma = sigma_for(_manifold(cfg))
    with ThreadPoolExecutor(cfg.threads) as pool:
        sch, res = _run_one(cfg, k, eps, sigma, pool, (0, 0))
    out = cio.ensure_dir(cfg.out)
    meta = {"k": k, "eps": eps, "case": sch.case, "tau": sch.tau, "lambda_window": sch.lambda_window}
    dx = cfg.T / cfg.n1
    cio.write_grid_dump(os.path.join(out, "c_true.grid"), res.c_true, spacings=(cfg.y0_spacing, dx), T=cfg.T,
                        meta={**meta, "y0": res.slice.y0s.tolist()})
    cio.write_grid_dump(os.path.join(out, "c_rec.grid"), res.c_rec, spacings=(cfg.y0_spacing, dx), T=cfg.T,
                        meta={**meta, "y0": res.slice.y0s.tolist()})
    cio.write_grid_dump(os.path.join(out, "slice.grid"), res.slice.values, spacings=(cfg.y0_spacing,), T=cfg.T,
                        meta={**meta, "lambda": res.slice.lambdas.tolist(), "budget": res.slice.budget.tolist()})
    metrics = {**meta, "l2_error": res.l2_error, "band_error": res.band_error, "failures": res.failures}
    with open(os.path.join(out, "reconstruct.json"), "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
    print(f"case {sch.case}  tau {sch.tau:.6g}  window {sch.lambda_window:.6g}")
    print(f"windowed L2 error {res.l2_error:.6g}  (band-limited {res.band_error:.6g})")
    for f in res.failures:
        print(f"failed cell: {f}", file=sys.stderr)
    return 0


def sweep_rows(cfg, timing=False):
    """Rows sorted by (eps, k); solver failures are recorded with a NaN error."""
    sigma = sigma_for(_manifold(cfg))
    eps_list = sorted(cfg.eps_list)
    k_list = sorted(cfg.k_list)
    rows = []
    with ThreadPoolExecutor(cfg.threads) as pool:
        for ie, eps in enumerate(eps_list):
            for ik, k in enumerate(k_list):
                t0 = time.perf_counter()
                try:
                    sch, res = _run_one(cfg, k, eps, sigma, pool, (ie, ik))
                    row = [k, eps, sch.case, sch.tau, sch.lambda_window, res.l2_error]
                except CGOError as exc:
                    print(f"row k={k} eps={eps} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
                    row = [k, eps, "", None, None, math.nan]
                wall = (time.perf_counter() - t0) * 1e3 if timing else None
                rows.append(row + [None if wall is None else round(wall, 3)])
    return rows


def cmd_sweep(cfg, args):
    rows = sweep_rows(cfg, timing=args.timing)
    out = cio.ensure_dir(cfg.out)
    cio.write_csv(os.path.join(out, "sweep.csv"), CSV_HEADER, rows)
    cols = {name: [r[i] if r[i] is not None else math.nan for r in rows] for i, name in enumerate(CSV_HEADER[:6])}
    cols["case"] = [str(c) if c != "" else "nan" for c in cols["case"]]
    cio.write_plot_data(os.path.join(out, "sweep.dat"), cols)
    series = {}
    for eps in sorted(set(r[1] for r in rows)):
        sel = [r for r in rows if r[1] == eps]
        series[f"eps={eps:g}"] = ([r[0] for r in sel], [r[5] for r in sel])
    cio.svg_line_plot(os.path.join(out, "sweep.svg"), series, "k", "relative L2 error", logx=True, logy=True)
    for r in rows:
        print(",".join(cio.fmt_float(v) if isinstance(v, float) or v is None else str(v) for v in r))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="cgolab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--seed", type=int, help="noise seed (unsigned 64-bit)")
        sp.add_argument("--out", help="output directory (created if missing)")
        sp.add_argument("--threads", type=int, help="worker threads")

    common(sub.add_parser("verify", help="run every named invariant"))
    q = sub.add_parser("quasimode", help="build one quasimode, dump it and report residuals")
    common(q)
    q.add_argument("--k", type=float)
    q.add_argument("--tau", type=float)
    q.add_argument("--lam", type=float)
    r = sub.add_parser("reconstruct", help="one reconstruction at a single (k, eps)")
    common(r)
    r.add_argument("--k", type=float)
    r.add_argument("--eps", type=float)
    s = sub.add_parser("sweep", help="stability sweep over the configured k and eps lists")
    common(s)
    s.add_argument("--timing", action="store_true", help="fill the wall_ms column (not deterministic)")
    return p


def load_config(args):
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    for key in ("seed", "out", "threads"):
        if getattr(args, key, None) is not None:
            setattr(cfg, key, getattr(args, key))
    if args.command == "quasimode":
        for key in ("k", "tau", "lam"):
            if getattr(args, key) is not None:
                setattr(cfg, key, getattr(args, key))
    return config_mod.validate(cfg)


COMMANDS = {"verify": cmd_verify, "quasimode": cmd_quasimode, "reconstruct": cmd_reconstruct, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    # one BLAS thread per worker keeps results independent of the thread count
    with threadpool_limits(limits=1):
        try:
            return COMMANDS[args.command](cfg, args)
        except (CGOError, OSError) as exc:
            print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
            return 1


if __name__ == "__main__":
    sys.exit(main())

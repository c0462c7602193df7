"""Command-line entry point: ``csfmpnp <command> [options]``.

Exit codes: 0 success, 1 unexpected package error, 2 configuration error,
3 data or file-format error, 4 numerical failure, 5 selfcheck failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from .csfm import build_csfm, load_csfm, nn_lookup, partition_grid, save_csfm
from .errors import CsfmPnpError, InvalidConfigError
from .estimators import estimate_lmmse, estimate_ls, estimate_mmse_gmm
from .harness import ESTIMATORS, parse_config, default_schedule, run_sweep, timing_path, to_db
from .observation import make_dft_pilots, noise_for_snr, observe
from .pnp import run_csfm_pnp, write_trace_csv
from .scene import generate_dataset, load_scene, random_scene, save_scene, synthesize_channel

log = logging.getLogger("csfmpnp")


def _pair(text, kind=float):
    vals = [kind(v) for v in text.replace(",", " ").split()]
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two values, got {text!r}")
    return tuple(vals)


def _triple(text):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three values, got {text!r}")
    return tuple(vals)


def cmd_gen_scene(args):
    kwargs = {}
    if args.area:
        kwargs["area_extent"] = args.area
    if args.bs:
        kwargs["bs_position"] = args.bs
    if args.upa:
        kwargs["upa_dims"] = args.upa
    if args.wavelength:
        kwargs["carrier_wavelength"] = args.wavelength
    if args.paths:
        kwargs["paths_per_location"] = args.paths
    scene = random_scene(args.seed, args.scatterers, **kwargs)
    save_scene(scene, args.output)
    log.info("wrote scene with %d scatterers to %s", args.scatterers, args.output)
    if args.dataset:
        ds = generate_dataset(scene, args.interval)
        ds.to_csv(args.dataset)
        log.info("wrote %d channels to %s", len(ds), args.dataset)
    return 0


def cmd_build_csfm(args):
    scene = load_scene(args.scene)
    partition = partition_grid(scene.area_extent, args.grid_size)
    ds = generate_dataset(scene, args.interval)
    store = build_csfm(ds, partition, n_components=args.components, storage_interval=args.storage_interval,
                       seed=args.seed, grid_ids=args.grids or None)
    save_csfm(store, args.output)
    log.info("wrote %d grids to %s", len(store.grids), args.output)
    return 0


def cmd_estimate(args):
    scene = load_scene(args.scene)
    store = load_csfm(args.csfm)
    q = np.array([args.x, args.y])
    h, xi = synthesize_channel(scene, q)
    grid = store.grid_for(q)
    pilots = make_dft_pilots(h.size, args.tau)
    snr = 10.0 ** (args.snr_db / 10.0)
    noise_var = noise_for_snr(pilots, grid.stats.second_moment(), xi, snr) if args.tau else 1.0
    obs = observe(h, xi, pilots, noise_var, args.noise_seed)
    trace = None
    if args.estimator == "ls":
        est = estimate_ls(obs, pilots)
    elif args.estimator == "lmmse":
        est = estimate_lmmse(obs, pilots, grid.stats)
    elif args.estimator == "mmse-gmm":
        est = estimate_mmse_gmm(obs, pilots, grid.gmm)
    elif args.estimator == "csfm-nn":
        est = nn_lookup(grid, q)
    else:
        regime = "short" if args.tau < h.size else "long"
        cfg = default_schedule(snr if args.tau else 1.0, regime).config()
        est, trace = run_csfm_pnp(obs, pilots, grid, q, cfg)
    err = float(np.sum(np.abs(h - est) ** 2) / np.sum(np.abs(h) ** 2))
    print(f"estimator={args.estimator} grid={grid.grid_id} nmse={err!r} nmse_db={float(to_db(err))!r}")
    if args.trace and trace is not None:
        write_trace_csv(args.trace, trace)
    return 0


def cmd_sweep(args):
    config = parse_config(args.config)
    if args.workers:
        config = replace(config, workers=args.workers)
    if args.output:
        config = replace(config, output=args.output)
    result = run_sweep(config)
    log.info("wrote %d rows to %s (timing in %s)", len(result.rows), config.output, timing_path(config.output))
    return 0


def cmd_selfcheck(args):
    from .selfcheck import run_selfcheck
    return 0 if run_selfcheck(args.seed) else 5


def build_parser():
    p = argparse.ArgumentParser(prog="csfmpnp", description="Environment-aware channel estimation toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scene", help="write a seeded random scene config")
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scatterers", type=int, default=24)
    g.add_argument("--area", type=_pair, help="side_x,side_y in metres")
    g.add_argument("--bs", type=_triple, help="x,y,z of the base station")
    g.add_argument("--upa", type=lambda s: _pair(s, int), help="rows,cols")
    g.add_argument("--wavelength", type=float)
    g.add_argument("--paths", type=int)
    g.add_argument("--dataset", help="also write the channel lattice to this CSV")
    g.add_argument("--interval", type=float, default=1.0)
    g.set_defaults(func=cmd_gen_scene)

    b = sub.add_parser("build-csfm", help="fit per-grid priors and write a CSFM file")
    b.add_argument("--scene", required=True)
    b.add_argument("-o", "--output", required=True)
    b.add_argument("--grid-size", type=float, default=50.0)
    b.add_argument("--interval", type=float, default=1.0, help="dataset sampling interval")
    b.add_argument("--storage-interval", type=float, default=1.0)
    b.add_argument("--components", type=int, default=4)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--grids", type=int, nargs="*", help="only fit these grid ids")
    b.set_defaults(func=cmd_build_csfm)

    e = sub.add_parser("estimate", help="estimate the channel at one location")
    e.add_argument("--scene", required=True)
    e.add_argument("--csfm", required=True)
    e.add_argument("--x", type=float, required=True)
    e.add_argument("--y", type=float, required=True)
    e.add_argument("--tau", type=int, default=16)
    e.add_argument("--snr-db", type=float, default=0.0)
    e.add_argument("--estimator", choices=ESTIMATORS, default="csfm-pnp")
    e.add_argument("--noise-seed", type=int, default=0)
    e.add_argument("--trace", help="write the iteration trace CSV here (csfm-pnp only)")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("sweep", help="run a Monte-Carlo NMSE sweep from a config file")
    s.add_argument("config")
    s.add_argument("--workers", type=int)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("selfcheck", help="run the fast invariant checks")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CsfmPnpError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InvalidConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())

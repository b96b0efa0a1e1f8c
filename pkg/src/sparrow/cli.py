"""Command-line interface: simulate | estimate | bench | equiv.

Exit codes: 0 success, 1 usage or validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import baselines, bench, grid, gridless, io, model
from .errors import NumericalError, SparrowError, ValidationError

ESTIMATE_METHODS = (
    "sparrow-cd",
    "sparrow-sdp",
    "gl-sparrow",
    "anm",
    "l21",
    "music",
    "root-music",
    "spice-us",
    "spice-os",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit with code 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _parse_float_list(text: str) -> np.ndarray:
    try:
        return np.asarray([float(tok) for tok in text.split(",") if tok.strip()], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from exc


def _geometry_from_args(args) -> model.ArrayGeometry:
    if args.ula is not None:
        return model.ArrayGeometry.ula(args.ula)
    if args.positions is not None:
        return model.ArrayGeometry(positions=_parse_float_list(args.positions))
    raise ValidationError("specify the array with --ula M or --positions 0,1.5,...")


def cmd_simulate(args) -> int:
    geometry = _geometry_from_args(args)
    freqs = _parse_float_list(args.freqs)
    powers = _parse_float_list(args.powers) if args.powers else np.ones(freqs.size)
    scene = model.SourceScene(frequencies=freqs, powers=powers)
    sigma2 = args.sigma2 if args.sigma2 is not None else model.snr_to_noise_power(args.snr)
    batch = model.simulate_mmv(geometry, scene, args.n, sigma2, seed=args.seed)
    io.save_batch(args.out, batch, geometry, scene)
    print(f"wrote {geometry.n_sensors}x{batch.n_snapshots} measurement file to {args.out}")
    return 0


def _resolve_lambda(args, batch) -> float:
    if args.lam != "auto":
        return float(args.lam)
    if batch.noise_power is None:
        raise ValidationError(
            "--lambda auto needs the noise power recorded in the input file; pass an explicit value"
        )
    return grid.select_lambda(batch.noise_power, batch.n_sensors)


def cmd_estimate(args) -> int:
    batch, geometry, scene = io.load_batch(args.input)
    cov = model.sample_covariance(batch)
    method = args.method
    needs_order = method in ("music", "root-music")
    if needs_order and args.order is None:
        raise ValidationError(f"{method} needs the model order: pass --order L")
    lam = None
    if method in ("sparrow-cd", "sparrow-sdp", "gl-sparrow", "anm", "l21"):
        lam = _resolve_lambda(args, batch)

    dictionary = None
    if method in ("sparrow-cd", "sparrow-sdp", "l21", "music", "spice-us", "spice-os"):
        dictionary = grid.build_dictionary(geometry, model.uniform_grid(args.grid_k))

    t0 = time.perf_counter()
    objective = None
    model_order = None
    if method == "sparrow-cd":
        sol = grid.sparrow_cd(dictionary, cov, lam)
        freqs, mags = bench._peaks_from_spectrum(sol.s, dictionary.grid.points)
        objective = sol.objective
    elif method == "sparrow-sdp":
        sol = grid.sparrow_sdp_auto(dictionary, batch, lam)
        freqs, mags = bench._peaks_from_spectrum(sol.s, dictionary.grid.points)
        objective = sol.objective
    elif method == "l21":
        sol = baselines.l21_solve(dictionary, batch, lam)
        s = np.linalg.norm(sol.x, axis=1) / np.sqrt(batch.n_snapshots)
        freqs, mags = bench._peaks_from_spectrum(s, dictionary.grid.points)
        objective = sol.objective
    elif method == "gl-sparrow":
        sol = gridless.gl_sparrow_covariance(geometry, cov, lam)
        model_order = gridless.estimate_model_order(sol.u)
        if model_order:
            dec = gridless.vandermonde_decomposition(sol.u, model_order)
            freqs, mags = dec.frequencies, dec.magnitudes
        else:
            freqs, mags = np.zeros(0), np.zeros(0)
        objective = sol.objective
    elif method == "anm":
        sol = gridless.anm_sdp(geometry, batch, lam)
        u = sol.v / np.sqrt(batch.n_snapshots)
        model_order = gridless.estimate_model_order(u)
        if model_order:
            dec = gridless.vandermonde_decomposition(u, model_order)
            freqs, mags = dec.frequencies, dec.magnitudes
        else:
            freqs, mags = np.zeros(0), np.zeros(0)
        objective = sol.objective
    elif method == "music":
        spectrum, freqs = baselines.music_spectrum(cov, args.order, dictionary.grid, geometry)
        mags = spectrum[np.searchsorted(dictionary.grid.points, freqs)]
    elif method == "root-music":
        freqs = baselines.root_music(cov, args.order, geometry)
        mags = np.ones(freqs.size)
    elif method == "spice-us":
        sol = baselines.spice_undersampled(dictionary, cov)
        freqs, mags = bench._peaks_from_spectrum(sol.p, dictionary.grid.points)
        objective = sol.objective
    elif method == "spice-os":
        sol = baselines.spice_oversampled(dictionary, cov)
        freqs, mags = bench._peaks_from_spectrum(sol.p, dictionary.grid.points)
        objective = sol.objective
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown method {method!r}")
    wall = time.perf_counter() - t0

    if model_order is None:
        model_order = int(np.size(freqs))
    doc = {
        "schema_version": io.SCHEMA_VERSION,
        "kind": "estimate_report",
        "method": method,
        "frequencies": np.asarray(freqs, dtype=float).tolist(),
        "magnitudes": np.asarray(mags, dtype=float).tolist(),
        "model_order": model_order,
        "objective": objective,
        "lambda": lam,
        "wall_time_s": wall,
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh)
    print(json.dumps(doc, indent=2))
    return 0


def _preset_path(name: str):
    pkg = resources.files("sparrow") / "presets" / f"{name}.json"
    if not pkg.is_file():
        available = sorted(
            p.name.removesuffix(".json")
            for p in (resources.files("sparrow") / "presets").iterdir()
        )
        raise ValidationError(f"unknown preset {name!r}; available: {available}")
    return pkg


def cmd_bench(args) -> int:
    if (args.config is None) == (args.preset is None):
        raise ValidationError("pass exactly one of --config PATH or --preset NAME")
    if args.config is not None:
        cfg = io.load_experiment_config(args.config)
    else:
        with resources.as_file(_preset_path(args.preset)) as path:
            cfg = io.load_experiment_config(path)
    if args.trials is not None:
        if args.trials < 1:
            raise ValidationError("--trials must be positive")
        cfg = bench.ExperimentConfig(
            **{**cfg.__dict__, "trials": args.trials}
        )
    report = bench.run_experiment(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_trial_csv(out / "trials.csv", report)
    io.write_aggregate_csv(out / "aggregate.csv", report)
    io.write_report_json(out / "report.json", report)
    header = f"{'method':>12} {report.sweep_variable:>12} {'bias':>10} {'std':>10} {'rmse':>10} {'resol':>7} {'ms':>8} {'fail':>5}"
    print(header)
    for row in report.rows:
        res = "" if row.resolution is None else f"{row.resolution:.3f}"
        print(
            f"{row.method:>12} {row.sweep_value:>12.4g} {row.bias:>10.4g} {row.std:>10.4g} "
            f"{row.rmse:>10.4g} {res:>7} {row.mean_ms:>8.1f} {row.failures:>5}"
        )
    print(f"outputs in {out}")
    return 0


def cmd_equiv(args) -> int:
    if args.trials < 1:
        raise ValidationError("--trials must be positive")
    geometry = model.ArrayGeometry.ula(args.m)
    gridpts = model.uniform_grid(args.k)
    d = grid.build_dictionary(geometry, gridpts)
    sigma2 = model.snr_to_noise_power(args.snr)
    lam = grid.select_lambda(sigma2, args.m)
    rng = np.random.default_rng(args.seed)
    worst_rownorm = worst_x = worst_u = worst_obj = 0.0
    for trial in range(args.trials):
        kidx = np.sort(rng.choice(args.k, 2, replace=False))
        scene = model.SourceScene(frequencies=gridpts.points[kidx], powers=np.ones(2))
        n = int(rng.choice([1, 5, args.m + 2]))
        batch = model.simulate_mmv(geometry, scene, n, sigma2, seed=args.seed, trial=trial)
        cov = model.sample_covariance(batch)

        cd = grid.sparrow_cd(d, cov, lam)
        oracle = baselines.l21_solve(d, batch, lam)
        rn = np.linalg.norm(oracle.x, axis=1) / np.sqrt(n)
        worst_rownorm = max(worst_rownorm, float(np.abs(rn - cd.s).max()))
        x_hat = grid.reconstruct_signal(cd.s, d, batch, lam)
        denom = max(np.linalg.norm(oracle.x), 1e-12)
        worst_x = max(worst_x, float(np.linalg.norm(x_hat - oracle.x) / denom))

        snap = gridless.gl_sparrow_snapshot(geometry, batch, lam)
        anm = gridless.anm_sdp(geometry, batch, lam)
        rep = gridless.check_anm_equivalence(snap, anm, n, lam)
        worst_u = max(worst_u, rep.u_gap)
        worst_obj = max(worst_obj, rep.raw_objective_gap)

    print(f"row-norm agreement (direct solver vs compact):   {worst_rownorm:.3e}")
    print(f"signal reconstruction relative error:            {worst_x:.3e}")
    print(f"gridless vs atomic-norm first-column gap:        {worst_u:.3e}")
    print(f"gridless vs atomic-norm scaled objective gap:    {worst_obj:.3e}")
    ok = worst_rownorm <= args.tol and worst_x <= 10 * args.tol and worst_u <= args.tol and worst_obj <= args.tol
    print("PASS" if ok else "FAIL", f"(tol={args.tol:g})")
    return 0 if ok else 2


def build_parser() -> _Parser:
    parser = _Parser(prog="sparrow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a measurement file")
    p.add_argument("--ula", type=int, help="uniform linear array with M sensors")
    p.add_argument("--positions", help="comma-separated sensor positions (first 0)")
    p.add_argument("--freqs", required=True, help="comma-separated source frequencies in [-1,1)")
    p.add_argument("--powers", help="comma-separated source powers (default all 1)")
    p.add_argument("--snr", type=float, default=10.0, help="SNR in dB (1/sigma^2, unit powers)")
    p.add_argument("--sigma2", type=float, help="noise power (overrides --snr)")
    p.add_argument("--n", type=int, required=True, help="number of snapshots")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run one estimator on a measurement file")
    p.add_argument("--in", dest="input", required=True, help="measurement JSON path")
    p.add_argument("--method", required=True, choices=ESTIMATE_METHODS)
    p.add_argument("--lambda", dest="lam", default="auto", help="regularization, number or 'auto'")
    p.add_argument("--order", type=int, help="model order for subspace methods")
    p.add_argument("--grid-k", type=int, default=200, help="grid size for grid-based methods")
    p.add_argument("--out", help="write the report JSON here as well")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bench", help="run a Monte-Carlo experiment")
    p.add_argument("--config", help="experiment config JSON path")
    p.add_argument("--preset", help="name of a shipped preset (e.g. fig5_desk)")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--out-dir", default="bench_out", help="output directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("equiv", help="audit the solver equivalences")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--m", type=int, default=6)
    p.add_argument("--k", type=int, default=24)
    p.add_argument("--snr", type=float, default=10.0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_equiv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, SparrowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

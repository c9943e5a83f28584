"""Command-line interface.

Subcommands cover the whole batch workflow: ``synth`` (generate a synthetic
gap dataset with ground truth), ``decompose`` (robust low-rank/sparse
split), ``train`` (fit a model directory), ``predict`` (full field from a
sparse measurement file), ``crossval`` (leave-one-out accuracy report with
random-sensor baseline), and ``report`` (render the per-region summary
table).

Exit codes: 0 success, 2 argument or input-schema violations, 3 I/O errors,
4 numerical failure, 5 missing sensor measurements.  The environment
variable ``SHIMSENSE_SEED`` supplies the master seed when ``--seed`` is not
given.
"""

import argparse
import os
import sys

import numpy as np

from . import io as sio
from .dataset import ShimSegmentation
from .errors import (IngestionError, MissingSensorError, NumericalError,
                     ParameterError, ShimsenseError)
from .pipeline import (PipelineConfig, compare_baseline, loo_crossval,
                       predict, train)
from .rpca import PcpConfig, pcp
from .synth import SynthConfig, generate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4
EXIT_MISSING_SENSORS = 5


def _env_seed(value):
    if value is not None:
        return value
    env = os.environ.get("SHIMSENSE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ParameterError(
            f"SHIMSENSE_SEED must be an integer, got {env!r}") from None


def _require_file(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")


def _require_dir(path):
    if not os.path.isdir(path):
        raise FileNotFoundError(f"no such directory: {path}")


def _pcp_config(args):
    return PcpConfig(lam=args.lam, mu0=args.mu0, rho=args.rho,
                     tol=args.pcp_tol, max_iter=args.max_iter,
                     svd_mode=args.svd_mode)


def _add_pcp_flags(parser):
    parser.add_argument("--lam", type=float, default=None,
                        help="sparsity weight (default: 1/sqrt(max(n, m)))")
    parser.add_argument("--mu0", type=float, default=None,
                        help="initial penalty (default: n*m / (4 * sum|X|))")
    parser.add_argument("--rho", type=float, default=1.5,
                        help="penalty growth factor (default: 1.5)")
    parser.add_argument("--pcp-tol", type=float, default=1e-7,
                        help="relative residual tolerance (default: 1e-7)")
    parser.add_argument("--max-iter", type=int, default=500,
                        help="iteration budget (default: 500)")
    parser.add_argument("--svd-mode", choices=("exact", "randomized"),
                        default="exact",
                        help="SVD used inside the solver (default: exact)")


def _pipeline_config(args):
    return PipelineConfig(
        center=not getattr(args, "no_center", False),
        robust=not getattr(args, "no_robust", False),
        rank=getattr(args, "rank", None),
        n_sensors=getattr(args, "n_sensors", None),
        pcp=_pcp_config(args),
        tolerance=getattr(args, "tol", None) or 0.005,
        seed=_env_seed(getattr(args, "seed", None)))


def _add_pipeline_flags(parser):
    parser.add_argument("--rank", type=int, default=None,
                        help="override the optimal-threshold rank selection")
    parser.add_argument("--n-sensors", type=int, default=None,
                        help="sensors per region (default: basis rank)")
    parser.add_argument("--no-center", action="store_true",
                        help="skip per-location mean centering")
    parser.add_argument("--no-robust", action="store_true",
                        help="skip robust decomposition (plain SVD features)")
    _add_pcp_flags(parser)


def _load_segmentation(args, dataset):
    if getattr(args, "segmentation", None):
        _require_file(args.segmentation)
        return sio.read_segmentation_json(args.segmentation, dataset)
    return ShimSegmentation.single_region(dataset.n_locations)


def cmd_synth(args):
    cfg = SynthConfig(
        n_locations=args.n, n_units=args.m, true_rank=args.rank,
        mode_family=args.mode_family, mean_amplitude=args.mean_amplitude,
        coeff_scale=args.coeff_scale, noise_sigma=args.noise_sigma,
        outlier_fraction=args.outlier_fraction,
        outlier_magnitude=args.outlier_magnitude,
        seed=_env_seed(args.seed))
    dataset, truth = generate(cfg)
    out = args.out
    os.makedirs(out, exist_ok=True)
    sio.write_gap_csv(os.path.join(out, "gaps.csv"), dataset)
    sio.write_matrix_csv(os.path.join(out, "truth_low_rank.csv"),
                         truth.low_rank, dataset.location_ids,
                         dataset.unit_ids)
    sio.write_matrix_csv(os.path.join(out, "truth_sparse.csv"), truth.sparse,
                         dataset.location_ids, dataset.unit_ids)
    sio.write_matrix_csv(os.path.join(out, "truth_clean.csv"), truth.clean,
                         dataset.location_ids, dataset.unit_ids)
    sio.write_matrix_csv(os.path.join(out, "truth_modes.csv"), truth.modes,
                         dataset.location_ids,
                         [f"mode_{j + 1}" for j in range(truth.modes.shape[1])])
    sio.write_field_csv(os.path.join(out, "truth_mean.csv"),
                        dataset.location_ids, truth.mean, column="mean")
    sio.write_json(os.path.join(out, "truth_meta.json"), {
        "format": sio.TRUTH_FORMAT,
        "outlier_count": int(np.count_nonzero(truth.sparse)),
        "config": {
            "n_locations": cfg.n_locations, "n_units": cfg.n_units,
            "true_rank": cfg.true_rank, "mode_family": cfg.mode_family,
            "mean_amplitude": cfg.mean_amplitude,
            "coeff_scale": None if cfg.coeff_scale is None
            else list(cfg.coeff_scale),
            "noise_sigma": cfg.noise_sigma,
            "outlier_fraction": cfg.outlier_fraction,
            "outlier_magnitude": cfg.outlier_magnitude, "seed": cfg.seed,
        },
    })
    print(f"wrote {dataset.n_locations}x{dataset.n_units} gap matrix to "
          f"{os.path.join(out, 'gaps.csv')}")
    return EXIT_OK


def cmd_decompose(args):
    _require_file(args.input)
    dataset = sio.read_gap_csv(args.input)
    result = pcp(dataset.values, _pcp_config(args))
    out = args.out
    os.makedirs(out, exist_ok=True)
    sio.write_matrix_csv(os.path.join(out, "L.csv"), result.low_rank,
                         dataset.location_ids, dataset.unit_ids)
    sio.write_matrix_csv(os.path.join(out, "S.csv"), result.sparse,
                         dataset.location_ids, dataset.unit_ids)
    sio.write_json(os.path.join(out, "diagnostics.json"), {
        "format": sio.DECOMPOSITION_FORMAT,
        "iterations": result.iterations,
        "converged": result.converged,
        "final_residual": result.final_residual,
        "lam": result.lam,
        "mu0": result.mu0,
        "sparsity": result.sparsity,
        "residual_history": list(result.residual_history),
        "mu_schedule": list(result.mu_history),
    })
    status = "converged" if result.converged else "did not converge"
    print(f"decomposition {status} after {result.iterations} iterations "
          f"(residual {result.final_residual:.3e})")
    return EXIT_OK


def cmd_train(args):
    _require_file(args.input)
    dataset = sio.read_gap_csv(args.input)
    segmentation = _load_segmentation(args, dataset)
    model = train(dataset, segmentation, _pipeline_config(args))
    sio.save_model(model, args.out)
    sensors = model.sensor_location_ids()
    total = sum(len(v) for v in sensors.values())
    print(f"trained {len(model.regions)} region(s), {total} sensors total; "
          f"model written to {args.out}")
    return EXIT_OK


def cmd_predict(args):
    _require_dir(args.model)
    _require_file(args.measurements)
    model = sio.load_model(args.model)
    measurements = sio.read_field_csv(args.measurements)
    result = predict(model, measurements)
    sio.write_prediction_csv(args.out, result, model.location_ids)
    print(f"predicted {int(result.covered.sum())} locations; wrote {args.out}")
    return EXIT_OK


def cmd_crossval(args):
    _require_file(args.input)
    dataset = sio.read_gap_csv(args.input)
    segmentation = _load_segmentation(args, dataset)
    truth = None
    if args.truth:
        _require_file(args.truth)
        ids, _, truth_values = sio.read_matrix_csv(args.truth)
        if ids != dataset.location_ids:
            raise IngestionError(
                f"{args.truth}: location ids do not match {args.input}")
        truth = truth_values
    cfg = _pipeline_config(args)
    report = loo_crossval(dataset, segmentation, cfg, truth=truth)
    sio.write_report_json(args.out, report)
    if args.histograms:
        os.makedirs(args.histograms, exist_ok=True)
        for index, name in enumerate(report.regions):
            sio.write_histogram_csv(
                os.path.join(args.histograms,
                             f"histogram_{sio._region_dirname(index, name)}.csv"),
                report, name)
    comparison = compare_baseline(report)
    for name, region in report.regions.items():
        ratio = comparison.regions[name].median_error_ratio
        print(f"{name}: {region.optimal.percent_within_tol:.2f}% within "
              f"{report.tolerance:g} ({region.avg_sensor_count:.1f} sensors, "
              f"random-arm error ratio {ratio:.2f})")
    if report.failed_folds:
        print(f"warning: {len(report.failed_folds)} fold(s) failed: "
              f"{', '.join(report.failed_folds)}", file=sys.stderr)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_report(args):
    _require_file(args.input)
    report = sio.read_report_json(args.input)
    if args.out:
        sio.write_summary(args.out, report, args.format)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(sio.render_summary_table(report))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shimsense",
        description="Predictive shimming: learn gap-field structure, place "
                    "sparse sensors, and predict full fields from few "
                    "measurements.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic gap dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=600, help="locations (default 600)")
    p.add_argument("--m", type=int, default=40, help="units (default 40)")
    p.add_argument("--rank", type=int, default=5, help="true rank (default 5)")
    p.add_argument("--mode-family", choices=("cosine-1d", "cosine-2d"),
                   default="cosine-1d")
    p.add_argument("--mean-amplitude", type=float, default=0.05)
    p.add_argument("--coeff-scale", type=lambda s: [float(v) for v in
                                                    s.split(",")],
                   default=None, help="comma-separated per-mode scales")
    p.add_argument("--noise-sigma", type=float, default=0.0005)
    p.add_argument("--outlier-fraction", type=float, default=0.05)
    p.add_argument("--outlier-magnitude", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("decompose",
                       help="robust low-rank + sparse decomposition")
    p.add_argument("--input", required=True, help="gap matrix CSV")
    p.add_argument("--out", required=True, help="output directory")
    _add_pcp_flags(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("train", help="train a model directory")
    p.add_argument("--input", required=True, help="gap matrix CSV")
    p.add_argument("--segmentation", default=None,
                   help="JSON mapping region name -> location ids")
    p.add_argument("--out", required=True, help="model output directory")
    p.add_argument("--seed", type=int, default=None)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict",
                       help="predict a full field from sparse measurements")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--measurements", required=True,
                   help="CSV with location_id,gap rows at the sensor locations")
    p.add_argument("--out", required=True, help="prediction CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("crossval",
                       help="leave-one-out accuracy with random baseline")
    p.add_argument("--input", required=True, help="gap matrix CSV")
    p.add_argument("--segmentation", default=None)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--truth", default=None,
                   help="optional reference matrix CSV used for held-out "
                        "measurement and scoring (e.g. truth_clean.csv)")
    p.add_argument("--tol", type=float, default=0.005,
                   help="within-tolerance threshold (default 0.005)")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--histograms", default=None,
                   help="directory for per-region histogram CSV tables")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("report", help="render the per-region summary table")
    p.add_argument("--input", required=True, help="report JSON")
    p.add_argument("--out", default=None,
                   help="write summary here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingSensorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_SENSORS
    except (ParameterError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ShimsenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

"""Command-line interface: ``bvscal {fit,apply,validate,sweep,curve}``.

Options may also come from a TOML file given with ``--config``; keys are the
long option names with dashes replaced by underscores. Command-line flags
override the file.

Exit codes: 0 success, 2 usage error, 3 invalid data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path
from typing import Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from bvscal import _io
from bvscal.binning import BinPartition, equal_count_partition, group_partition, partition_2d
from bvscal.data import UNCERTAINTY, Schema, UQDataset, load_dataset, save_dataset
from bvscal.diagnostics import BY_UNCERTAINTY, CURVE_HEADER, LZMS_HEADER, ORACLE, confidence_curve
from bvscal.errors import DataError, NumericalError
from bvscal.isotonic import apply_isotonic, fit_isotonic
from bvscal.metrics import score_report
from bvscal.scaling import LOSSES, NLL, ScalingModel, apply, apply_training, fit, sweep_bins, sweep_table
from bvscal.validation import simulate_reference, validate

log = logging.getLogger("bvscal")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _csv_list(text: str | None) -> tuple[str, ...]:
    if not text:
        return ()
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


def _schema(args) -> Schema:
    return Schema(
        uncertainty=args.u_col,
        error=args.error_col if not (args.ref_col or args.pred_col) else None,
        reference=args.ref_col,
        prediction=args.pred_col,
        features=_csv_list(args.features),
        formula=args.formula_col,
        group=args.group_col,
        group_from_formula=bool(args.groups_from_formula),
    )


def _load(path, args) -> UQDataset:
    if not path:
        raise UsageError("missing input file")
    return load_dataset(path, _schema(args))


def build_partition(ds: UQDataset, binning: str, n_bins: str | int, min_group_size: int = 10) -> BinPartition:
    """Partition for ``binning`` = a variable name, ``"a,b"`` (2d) or ``"group"``."""
    if binning == "group":
        if ds.groups is None:
            raise UsageError("group binning needs --group-col or --groups-from-formula")
        return group_partition(ds.groups, min_group_size)
    names = _csv_list(binning)
    counts = [int(x) for x in _csv_list(str(n_bins))]
    if len(names) == 2:
        na, nb = (counts * 2)[:2] if len(counts) == 1 else counts
        return partition_2d(ds.variable(names[0]), ds.variable(names[1]), na, nb, tuple(names))
    if len(names) != 1 or len(counts) != 1:
        raise UsageError(f"cannot parse binning {binning!r} with n_bins {n_bins!r}")
    return equal_count_partition(ds.variable(names[0]), counts[0], names[0])


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit_kwargs(args) -> dict:
    return {
        "feature_names": _csv_list(args.score_features) or None,
        "n_score_bins": args.n_score_bins,
        "seed": args.seed,
        "maxiter": args.maxiter,
        "popsize": args.popsize,
    }


def _print_scores(label: str, d: dict) -> None:
    keys = [k for k in d if k != "n_score_bins"]
    print(label + ": " + " ".join(f"{k}={d[k]:.2f}" for k in keys))


def cmd_fit(args) -> int:
    train = _load(args.train, args)
    part = build_partition(train, args.binning, args.n_bins, args.min_group_size)
    model = fit(train, part, args.loss, **_fit_kwargs(args))
    out = _out(args)
    model.save(out / "model.json")
    scaled = apply_training(model, train, part)
    scores = score_report(scaled, _csv_list(args.score_features) or None, args.n_score_bins).to_dict()
    _io.write_json(out / "scores_train.json", scores)
    if part.rejected.size:
        print(f"rejected {part.rejected.size} points in undersized groups")
    print(f"fitted {model.n_bins} factors ({model.loss})")
    _print_scores("train", scores)
    return EXIT_OK


def cmd_apply(args) -> int:
    test = _load(args.test, args)
    model = ScalingModel.load(args.model)
    scaled = apply(model, test, strict=args.strict)
    out = _out(args)
    save_dataset(scaled, out / "scaled.csv")
    scores = score_report(scaled, _csv_list(args.score_features) or None, args.n_score_bins).to_dict()
    _io.write_json(out / "scores_test.json", scores)
    _print_scores("test", scores)
    return EXIT_OK


def cmd_validate(args) -> int:
    data = _load(args.data or args.test, args)
    if args.model:
        data = apply(ScalingModel.load(args.model), data, strict=args.strict)
    variables = (UNCERTAINTY, *(_csv_list(args.score_features) or data.feature_names))
    report = validate(data, variables, args.n_score_bins, args.draws, args.seed)
    feats = {k: data.features[k] for k in variables if k != UNCERTAINTY}
    if args.replicates < 100:
        print(f"warning: only {args.replicates} replicates; simulated references are noisy",
              file=sys.stderr)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        simul = simulate_reference(data.uncertainties, feats, args.n_score_bins, args.replicates,
                                   args.seed, args.fv_replicates, args.draws)
    out = _out(args)
    _io.write_json(out / "validation.json", report.to_dict())
    simul_d = simul.to_dict()
    actual = score_report(data, [k for k in variables if k != UNCERTAINTY], args.n_score_bins)
    simul_d["nll_actual_minus_simulated"] = actual.nll - simul.mean["nll"]
    _io.write_json(out / "simul.json", simul_d)
    for name, rows in report.per_variable.items():
        _io.write_csv(out / f"lzms_{name}.csv", LZMS_HEADER, rows)
    for name, f in report.fv.items():
        print(f"f_v[{name}] = {f.fraction:.2f} [{f.lo:.2f}, {f.hi:.2f}]")
    print(f"NLL - simulated NLL = {simul_d['nll_actual_minus_simulated']:.3f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    train = _load(args.train, args)
    test = _load(args.test, args)
    lo, _, hi = str(args.range).partition(":")
    bin_range = range(int(lo), int(hi or lo) + 1)
    feats = _csv_list(args.score_features) or None
    rows = sweep_bins(train, test, bin_range, args.loss, args.binning, **_fit_kwargs(args),
                      draws=args.draws)
    header, table = sweep_table(rows)
    header = ["method", *header]
    lines = [["bvs", *r] for r in table]
    if args.references:
        fv_vars = [h[3:] for h in header if h.startswith("fv.")]
        iso = apply_isotonic(fit_isotonic(train), test)
        iso_d = score_report(iso, feats, args.n_score_bins).to_dict()
        iso_fv = {}
        if fv_vars:
            iso_fv = validate(iso, fv_vars, args.n_score_bins, args.draws, args.seed).fv
        names = [k for k in (feats or test.feature_names)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sim = simulate_reference(test.uncertainties, {k: test.features[k] for k in names},
                                     args.n_score_bins, args.replicates, args.seed,
                                     args.fv_replicates if fv_vars else 0, max(args.draws, 100))
        for method, scores, fvs in (("isotonic", iso_d, iso_fv), ("simul", sim.mean, sim.fv)):
            line = [method, None]
            for h in header[2:]:
                if h.startswith("fv"):
                    kind, _, var = h.partition(".")
                    f = fvs.get(var)
                    line.append(None if f is None else
                                {"fv": f[0], "fv_lo": f[1], "fv_hi": f[2]}[kind])
                else:
                    line.append(scores.get(h))
            lines.append(line)
    out = _out(args)
    _io.write_csv(out / "sweep.csv", header, lines)
    print(f"wrote {len(rows)} sweep rows to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_curve(args) -> int:
    out = _out(args)
    written = 0
    for label, path in (("train", args.train), ("test", args.test)):
        if not path:
            continue
        ds = _load(path, args)
        rows = []
        for variant in (BY_UNCERTAINTY, ORACLE):
            rows += confidence_curve(ds, args.steps, variant).rows()
        _io.write_csv(out / f"curve_{label}.csv", CURVE_HEADER, rows)
        written += 1
    if not written:
        raise UsageError("curve needs --train and/or --test")
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input schema")
    g.add_argument("--u-col", default="u", help="uncertainty column")
    g.add_argument("--error-col", default="E", help="error column (ignored with --ref-col/--pred-col)")
    g.add_argument("--ref-col", help="reference value column; error = reference - prediction")
    g.add_argument("--pred-col", help="prediction column")
    g.add_argument("--features", help="comma-separated feature columns")
    g.add_argument("--formula-col", help="molecular formula column (derives X1, X2)")
    g.add_argument("--group-col", help="group label column")
    g.add_argument("--groups-from-formula", action="store_true",
                   help="label rows by O/N composition of the formula")
    g = p.add_argument_group("settings")
    g.add_argument("--config", help="TOML file with option defaults")
    g.add_argument("--out", default="out", help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-score-bins", type=int, default=100)
    g.add_argument("--score-features", help="features to score (default: all)")
    g.add_argument("--draws", type=int, default=1500, help="bootstrap draws")
    g.add_argument("--replicates", type=int, default=1000, help="simulation replicates")
    g.add_argument("--fv-replicates", type=int, default=20,
                   help="simulation replicates that also get f_v statistics")
    g.add_argument("--binning", default="u", help="variable, 'a,b' for 2d, or 'group'")
    g.add_argument("--n-bins", default="40", help="bin count ('a,b' per axis for 2d)")
    g.add_argument("--min-group-size", type=int, default=10)
    g.add_argument("--loss", default=NLL, choices=LOSSES)
    g.add_argument("--maxiter", type=int, default=30, help="global optimizer generations")
    g.add_argument("--popsize", type=int, default=10, help="global optimizer population per factor")
    g.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                   help="fail on group labels unknown to the model")
    g.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bvscal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {}

    p = sub.add_parser("fit", help="fit scaling factors on a training set")
    p.add_argument("--train")
    cmds["fit"] = (p, cmd_fit)

    p = sub.add_parser("apply", help="apply a model to a dataset and score it")
    p.add_argument("--test")
    p.add_argument("--model", required=False)
    cmds["apply"] = (p, cmd_apply)

    p = sub.add_parser("validate", help="LZMS intervals, f_v and simulated references")
    p.add_argument("--data")
    p.add_argument("--test")
    p.add_argument("--model")
    cmds["validate"] = (p, cmd_validate)

    p = sub.add_parser("sweep", help="scores of the scaled test set over a range of bin counts")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--range", default="2:99", help="inclusive bin-count range 'lo:hi'")
    p.add_argument("--references", action=argparse.BooleanOptionalAction, default=True,
                   help="append isotonic and simulated reference rows")
    cmds["sweep"] = (p, cmd_sweep)

    p = sub.add_parser("curve", help="confidence curves for train and test sets")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--steps", type=int, default=100)
    cmds["curve"] = (p, cmd_curve)

    for p, func in cmds.values():
        _common(p)
        p.set_defaults(func=func)
    parser._bvscal_commands = cmds  # type: ignore[attr-defined]
    return parser


def _config_defaults(path: str) -> dict:
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    return {str(k).replace("-", "_"): v for k, v in cfg.items()}


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = _config_defaults(args.config)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        sub_parser = parser._bvscal_commands[args.command][0]  # type: ignore[attr-defined]
        sub_parser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "apply" and not args.model:
        print("error: apply needs --model", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

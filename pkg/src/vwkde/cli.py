"""Command-line interface.

Subcommands: ``kl``, ``posterior``, ``lpdr``, ``bench``, ``inspect``. Every
run with identical flags and seed writes byte-identical primary outputs, and
each report starts with comment lines recording the resolved settings. Exit
codes: 0 success, 1 numeric failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import bench as bench_mod
from . import inspection as insp
from .core import SeedSpec, fit_gaussian, load_dataset_csv
from .errors import (
    InsufficientDataError,
    InvalidConfigError,
    InvalidDataError,
    PgmParseError,
    VwkdeError,
)
from .estimators import kl_estimate_grid, lpdr_grid, posterior_grid
from .scores import GaussianScoreField, PairScores
from .weight import ConstantAlpha, fit_rkhs_alpha, load_rkhs_alpha, save_rkhs_alpha

USAGE_ERRORS = (InvalidConfigError, InvalidDataError, PgmParseError,
                InsufficientDataError, OSError, ValueError)


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise InvalidConfigError(f"bad bandwidth grid {text!r}: {exc}") from exc


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--estimator", choices=("kde", "vwkde-mb"), default="vwkde-mb",
                        help="plain KDE plug-in or the model-based weighted estimator")
    parser.add_argument("--h", type=float, default=None, help="kernel bandwidth")
    parser.add_argument("--h-grid", type=str, default=None,
                        help="comma-separated bandwidths (overrides --h)")
    parser.add_argument("--gamma", type=float, default=None,
                        help="class-prior ratio (default: N2/N1)")
    parser.add_argument("--sigma", type=float, default=None,
                        help="weight-fit basis kernel width (default: median heuristic)")
    parser.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="weight-fit regularizer (default: 1e-3 * pooled N)")
    parser.add_argument("--max-basis", type=int, default=3000,
                        help="cap on weight-fit basis points")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--out", type=str, default=None, help="CSV report path")
    parser.add_argument("--load-weight", type=str, default=None,
                        help="reuse a fitted weight CSV instead of refitting")
    parser.add_argument("--save-weight", type=str, default=None,
                        help="write the fitted weight CSV for reuse")


def _resolve_alpha(args, d1, d2):
    if args.estimator == "kde":
        return ConstantAlpha(1.0)
    if args.load_weight:
        return load_rkhs_alpha(args.load_weight)
    g1 = fit_gaussian(d1)
    g2 = fit_gaussian(d2)
    pair = PairScores(GaussianScoreField(g1), GaussianScoreField(g2))
    alpha = fit_rkhs_alpha(d1, d2, pair, sigma=args.sigma, lam=args.lam,
                           max_basis=args.max_basis, seed=SeedSpec(args.seed))
    if args.save_weight:
        save_rkhs_alpha(alpha, args.save_weight)
    return alpha


def _settings_lines(args, extra: dict) -> list[str]:
    keep = ("estimator", "h", "h_grid", "gamma", "sigma", "lam", "max_basis", "seed")
    vals = {k: getattr(args, k, None) for k in keep}
    vals.update(extra)
    return [f"# {k}={v}" for k, v in vals.items()]


def _hs(args) -> list[float]:
    if args.h_grid:
        return _parse_grid(args.h_grid)
    if args.h is None:
        raise InvalidConfigError("provide --h or --h-grid")
    return [args.h]


def cmd_kl(args) -> int:
    d1 = load_dataset_csv(args.p1)
    d2 = load_dataset_csv(args.p2)
    hs = _hs(args)
    alpha = _resolve_alpha(args, d1, d2)
    results = kl_estimate_grid(d1, d2, alpha, hs)
    if len(hs) == 1:
        print(f"{results[0].value:.17g}")
    else:
        for h, res in zip(hs, results):
            print(f"{h:.17g}\t{res.value:.17g}")
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            for line in _settings_lines(args, {"p1": args.p1, "p2": args.p2}):
                fh.write(line + "\n")
            fh.write("h,estimate,flagged_terms\n")
            for h, res in zip(hs, results):
                fh.write(f"{h:.17g},{res.value:.17g},{res.n_flagged}\n")
    return 0


def _cmd_pointwise(args, kind: str) -> int:
    d1 = load_dataset_csv(args.p1)
    d2 = load_dataset_csv(args.p2)
    query = load_dataset_csv(args.query)
    hs = _hs(args)
    alpha = _resolve_alpha(args, d1, d2)
    if kind == "posterior":
        table = posterior_grid(d1, d2, alpha, hs, query.points, gamma=args.gamma)
    else:
        table = lpdr_grid(d1, d2, alpha, hs, query.points)
    for row in table.T:
        print("\t".join(f"{v:.17g}" for v in row))
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            for line in _settings_lines(
                args, {"p1": args.p1, "p2": args.p2, "query": args.query, "kind": kind}
            ):
                fh.write(line + "\n")
            header = [f"x{j}" for j in range(query.dim)]
            header += [f"{kind}_h={h:.17g}" for h in hs]
            fh.write(",".join(header) + "\n")
            for pt, vals in zip(query.points, table.T):
                cells = [f"{v:.17g}" for v in pt] + [f"{v:.17g}" for v in vals]
                fh.write(",".join(cells) + "\n")
    return 0


def cmd_bench(args) -> int:
    configs = bench_mod.load_config(args.config)
    rows: list = []
    aggregates: list = []
    n_failed = 0
    for cfg in configs:
        if cfg.scenario == "posterior_homoscedastic":
            rep = bench_mod.run_posterior_bias_sweep(cfg)
        else:
            rep = bench_mod.run_kl_sweep(cfg)
        rows.extend(rep.rows)
        aggregates.extend(rep.aggregates)
        n_failed += rep.n_failed
    merged = bench_mod.TrialReport(tuple(rows), tuple(aggregates), n_failed)
    out = args.out or "bench_report.csv"
    bench_mod.write_report(merged, out)
    print(f"wrote {out}: {len(rows)} trial rows, {len(aggregates)} aggregates, "
          f"{n_failed} failed trials")
    return 0


def cmd_inspect(args) -> int:
    normal_paths = sorted(Path(args.normals).glob("*.pgm"))
    if not normal_paths:
        raise InvalidDataError(f"no .pgm files under {args.normals}")
    if args.query:
        query_paths = [Path(args.query)]
    elif args.query_dir:
        query_paths = sorted(Path(args.query_dir).glob("*.pgm"))
        if not query_paths:
            raise InvalidDataError(f"no .pgm files under {args.query_dir}")
    else:
        raise InvalidConfigError("provide --query or --query-dir")

    normal_feats = [insp.image_features(insp.load_pgm(p)) for p in normal_paths]
    whitener = insp.fit_whitener([f.features for f in normal_feats])
    normals_w = [whitener.apply_image(f) for f in normal_feats]
    h = args.h
    if h is None:
        h = insp.select_inspection_bandwidth(normals_w, SeedSpec(args.seed))
    rows = []
    for qp in query_paths:
        qf = whitener.apply_image(insp.image_features(insp.load_pgm(qp)))
        det = insp.detect_defect(qf, normals_w, k=args.k, h=h)
        loc = insp.localize_defect(qf, normals_w[det.best_match], h=h)
        box = loc.box if loc.found else None
        rows.append((qp.name, det.score, normal_paths[det.best_match].name, box))
        box_text = f"box={box}" if box else "box=none"
        print(f"{qp.name}\tscore={det.score:.6g}\t"
              f"match={normal_paths[det.best_match].name}\t{box_text}")
    if args.out:
        insp.write_inspection_csv(rows, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vwkde",
        description="Bias-reduced density-ratio, posterior, and KL divergence "
                    "estimation with variationally weighted KDEs.",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP threads (default: all cores); "
                             "results do not depend on it")
    sub = parser.add_subparsers(dest="command", required=True)

    p_kl = sub.add_parser("kl", help="KL divergence between two sample CSVs")
    p_kl.add_argument("--p1", required=True, help="CSV of samples from p1")
    p_kl.add_argument("--p2", required=True, help="CSV of samples from p2")
    _add_common(p_kl)
    p_kl.set_defaults(func=cmd_kl)

    for name, help_text in (("posterior", "plug-in posterior at query points"),
                            ("lpdr", "log probability density ratio at query points")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--p1", required=True)
        p.add_argument("--p2", required=True)
        p.add_argument("--query", required=True, help="CSV of query points")
        _add_common(p)
        p.set_defaults(func=lambda a, kind=name: _cmd_pointwise(a, kind))

    p_bench = sub.add_parser("bench", help="run experiment configs from JSON")
    p_bench.add_argument("--config", required=True, help="JSON experiment config")
    p_bench.add_argument("--out", default=None, help="CSV report path")
    p_bench.set_defaults(func=cmd_bench)

    p_insp = sub.add_parser("inspect", help="surface inspection over PGM images")
    p_insp.add_argument("--normals", required=True, help="directory of normal PGMs")
    p_insp.add_argument("--query", default=None, help="query PGM path")
    p_insp.add_argument("--query-dir", default=None, help="directory of query PGMs")
    p_insp.add_argument("--k", type=int, default=5, help="pass-2 re-rank depth")
    p_insp.add_argument("--h", type=float, default=None,
                        help="bandwidth (default: 25%%-subsample LOO heuristic)")
    p_insp.add_argument("--seed", type=int, default=0)
    p_insp.add_argument("--out", default=None, help="CSV results path")
    p_insp.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise InvalidConfigError(f"--threads must be >= 1, got {args.threads}")
        limit = args.threads if args.threads is not None else None
        with threadpool_limits(limits=limit):
            return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VwkdeError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

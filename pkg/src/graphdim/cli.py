"""Command-line entry point: ``graphdim synth | estimate | bench``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 estimation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from graphdim.errors import (
    DataParseError,
    EstimationFailedError,
    GraphDimError,
    InvalidInputError,
)
from graphdim.estimators import EstimatorConfig, estimate
from graphdim.harness import (
    BenchConfig,
    load_cloud,
    parse_k_grid,
    run_bench,
    save_cloud,
    stability_search,
    write_results,
)
from graphdim.manifolds import KINDS, ManifoldSpec, SampleConfig, sample

log = logging.getLogger("graphdim")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ESTIMATION = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _param(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter value must be numeric, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphdim", description="Intrinsic dimension estimation from local graph structure.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="sample a synthetic manifold to CSV")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--d", type=int, required=True, help="intrinsic dimension")
    p.add_argument("--p", type=int, required=True, help="ambient dimension")
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="std of isotropic Gaussian noise")
    p.add_argument("--rotate", action="store_true", help="apply a seeded random orthogonal map after padding")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="NAME=VALUE",
                   help="kind-specific parameter, e.g. R=1 or c=0.01 (repeatable)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="estimate the intrinsic dimension of a CSV point cloud")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--header", action="store_true", help="skip the first line of the input")
    p.add_argument("--method", required=True, choices=["qe", "tls", "local-pca", "local_pca", "twonn"])
    p.add_argument("--k", type=int, help="neighborhood size")
    p.add_argument("--k-grid", help="start:stop:step (inclusive) or comma list; enables stability aggregation")
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--stability-cutoff", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=None, help="threads for per-point work")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="run a replicated benchmark from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None, help="process count (capped by GRAPHDIM_THREADS)")
    return parser


def _cmd_synth(args) -> int:
    try:
        spec = ManifoldSpec(kind=args.kind, d=args.d, p=args.p, params=dict(args.param))
        cfg = SampleConfig(n=args.n, seed=args.seed, noise_sigma=args.noise, embed_rotation=args.rotate)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    cloud = sample(spec, cfg)
    save_cloud(cloud, args.out)
    log.info("wrote %d x %d cloud to %s", cloud.n, cloud.p, args.out)
    return EXIT_OK


def _estimate_doc(est) -> dict:
    return {"d_hat": est.d_hat, "d_rounded": est.d_rounded, "n_local": est.n_local, "n_weighted": est.n_weighted}


def _cmd_estimate(args) -> int:
    if args.k is None and args.k_grid is None:
        raise UsageError("one of --k or --k-grid is required")
    method = args.method.replace("-", "_")
    try:
        grid = parse_k_grid(args.k_grid) if args.k_grid else [args.k]
        cfgs = [EstimatorConfig(K=k, alpha=args.alpha) for k in grid]
        if args.k_grid and not 1 <= args.window <= len(grid):
            raise InvalidInputError(f"--window must lie in [1, {len(grid)}]")
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None

    cloud = load_cloud(args.inp, header=args.header)
    doc = {"input": str(args.inp), "method": method, "n": cloud.n, "p": cloud.p}
    if not args.k_grid:
        doc["K"] = args.k
        doc.update(_estimate_doc(estimate(cloud, method, cfgs[0], args.workers)))
    else:
        rows = []
        per_k = {}
        for cfg in cfgs:
            try:
                est = estimate(cloud, method, cfg, args.workers)
            except EstimationFailedError as exc:
                rows.append({"K": cfg.K, "error": str(exc)})
                log.warning("K=%d: %s", cfg.K, exc)
                continue
            rows.append({"K": cfg.K, **_estimate_doc(est)})
            per_k[cfg.K] = [est.d_hat]
        if not per_k:
            raise EstimationFailedError("estimation failed at every K in the grid")
        stab = stability_search(per_k, min(args.window, len(per_k)), args.stability_cutoff)
        doc.update({"k_grid": grid, "window": args.window, "per_k": rows, "stability": stab.to_dict(),
                    "d_hat": stab.mean})
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    log.info("d_hat = %.4f", doc["d_hat"])
    return EXIT_OK


def _cmd_bench(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataParseError(f"cannot read config: {exc.strerror or exc}", path=args.config) from None
    except json.JSONDecodeError as exc:
        raise DataParseError(f"invalid JSON: {exc.msg}", path=args.config, row=exc.lineno, column=exc.colno) from None
    try:
        cfg = BenchConfig.from_dict(raw)
    except InvalidInputError as exc:
        raise DataParseError(f"invalid bench config: {exc}", path=args.config) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_bench(cfg, args.workers)
    write_results(results, out / "results.csv", "csv")
    write_results(results, out / "results.json", "json")
    timing = {f"{r.manifold}/{r.method}": r.wall_time for r in results}
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n", encoding="utf-8")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    for r in results:
        if r.stability is not None:
            log.info("%s %s: %.2f +- %.2f (K %d-%d, %s)", r.manifold, r.method, r.stability.mean,
                     r.stability.std, *r.stability.k_window, "stable" if r.stability.stable else "unstable")
    if any(r.stability is None for r in results):
        return EXIT_ESTIMATION
    return EXIT_OK


_COMMANDS = {"synth": _cmd_synth, "estimate": _cmd_estimate, "bench": _cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"graphdim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataParseError, InvalidInputError, OSError) as exc:
        print(f"graphdim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimationFailedError as exc:
        print(f"graphdim: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except GraphDimError as exc:
        print(f"graphdim: error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())

"""
Command-line surface: run pipelines, baseline spectral clustering, metrics,
embedding dumps and pattern mosaics.

Exit codes: 0 success, 1 validation or usage error, 2 runtime error.
"""
import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional, Tuple

from core import __version__
from core.clustering import spectral_cluster
from core.exceptions import ConfigError, FormatError, SANetError
from core.metrics import evaluate
from core.pipeline import layer_features, run_ablation, run_pipeline, with_procedure_prefix
from data.config import PipelineConfig, load_config
from data.dataset_io import load_dataset, stratified_subset
from data.models import SOLVERS, LabeledDataset, ProcedureSpec
from data.storage import StorageManager

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
METRIC_ORDER = ('acc', 'nmi', 'ari', 'f1', 'ch')


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='warnings only')
    common.add_argument('--jobs', type=int, default=1,
                        help='worker threads; never changes results')

    parser = _Parser(prog='sa-net', description='Spectral analysis deep clustering')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)
    sub.required = True

    run = sub.add_parser('run', parents=[common], help='run a pipeline config')
    run.add_argument('--config', required=True)
    run.add_argument('--out', required=True, help='report path')
    run.add_argument('--seed', type=int)
    run.add_argument('--subset', type=int, metavar='PER_CLASS')
    run.add_argument('--ablation', action='store_true',
                     help='run every truncation after the last spectral layer')
    run.add_argument('--procedures-prefix', type=int, metavar='M')
    run.add_argument('--prefix-layer', type=int, default=0, metavar='I',
                     help='spectral layer (0-based) the prefix applies to')

    baseline = sub.add_parser('baseline', parents=[common],
                              help='one-shot spectral clustering of raw pixels')
    baseline.add_argument('method', choices=['spectral'])
    baseline.add_argument('--config', required=True, help='config naming the dataset')
    baseline.add_argument('--affinity', required=True, metavar='KIND:PARAM')
    baseline.add_argument('--laplacian', choices=['sym', 'rw'], default='sym')
    baseline.add_argument('--solver', choices=SOLVERS, default='lanczos')
    baseline.add_argument('--k', type=int, required=True)
    baseline.add_argument('--restarts', type=int, default=10)
    baseline.add_argument('--seed', type=int)
    baseline.add_argument('--subset', type=int, metavar='PER_CLASS')
    baseline.add_argument('--out', help='write predicted labels here')

    metrics = sub.add_parser('metrics', parents=[common], help='score a labeling')
    metrics.add_argument('--true', required=True, dest='true_path')
    metrics.add_argument('--pred', required=True, dest='pred_path')

    dump = sub.add_parser('dump-embedding', parents=[common],
                          help='write per-image outputs of one layer')
    dump.add_argument('--config', required=True)
    dump.add_argument('--layer', type=int, required=True, help='1-based layer index')
    dump.add_argument('--out', required=True)
    dump.add_argument('--plot', metavar='PNG')
    dump.add_argument('--seed', type=int)
    dump.add_argument('--subset', type=int, metavar='PER_CLASS')

    patterns = sub.add_parser('patterns', parents=[common],
                              help='mosaic of typical first-layer patches')
    patterns.add_argument('--config', required=True)
    patterns.add_argument('--centers', type=int, default=40)
    patterns.add_argument('--out', required=True)
    patterns.add_argument('--seed', type=int)
    patterns.add_argument('--subset', type=int, metavar='PER_CLASS')
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _prepare(args) -> Tuple[PipelineConfig, LabeledDataset]:
    """Load the config, apply seed/subset overrides and load its dataset."""
    cfg = load_config(args.config)
    if getattr(args, 'seed', None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, 'subset', None) is not None:
        if args.subset < 1:
            raise ConfigError(f"must be >= 1, got {args.subset}", "subset.per_class")
        cfg = replace(cfg, subset={'per_class': args.subset})
    if not cfg.dataset:
        raise ConfigError("config names no dataset", "dataset")

    data = load_dataset(cfg.dataset, cfg.base_dir, n_jobs=args.jobs)
    if cfg.subset:
        data = stratified_subset(data, cfg.subset['per_class'], cfg.seed)
    logger.info("dataset %s: %d images of shape %s", data.name, len(data),
                data.image_shape if len(data) else None)
    return cfg, data


def _format_metrics(metrics: dict) -> List[str]:
    return [f"{name}={metrics[name]:.6g}" for name in METRIC_ORDER
            if metrics.get(name) is not None]


def _variant_path(path: str, variant: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}_{variant}{ext or '.json'}"


def _cmd_run(args) -> int:
    cfg, data = _prepare(args)
    if args.procedures_prefix is not None:
        cfg = with_procedure_prefix(cfg, args.procedures_prefix, args.prefix_layer)

    storage = StorageManager()
    if args.ablation:
        results = run_ablation(cfg, data, n_jobs=args.jobs)
    else:
        results = [("", run_pipeline(cfg, data, n_jobs=args.jobs))]

    for variant, report in results:
        path = _variant_path(args.out, variant) if variant else args.out
        if not storage.save_report(report, path):
            logger.error("could not write report %s", path)
            return EXIT_RUNTIME
        prefix = f"{variant} " if variant else ""
        if report.metrics is not None:
            print(prefix + " ".join(_format_metrics(report.metrics)))
        for warning in report.warnings:
            logger.warning("%s", warning)
    return EXIT_OK


def _cmd_baseline(args) -> int:
    cfg, data = _prepare(args)
    if not 1 <= args.k < len(data):
        raise ConfigError(f"k must be in [1, {len(data) - 1}], got {args.k}", "k")
    try:
        kind, param = ProcedureSpec.parse_affinity(args.affinity)
        proc = ProcedureSpec(affinity=kind, param=param, laplacian=args.laplacian,
                             solver=args.solver, n_eig=args.k)
    except SANetError as e:
        raise ConfigError(str(e), "affinity")

    points = data.as_array().reshape(len(data), -1)
    result = spectral_cluster(points, args.k, proc, seed=cfg.seed, restarts=args.restarts,
                              n_iter=cfg.n_iter, tol=cfg.tol, n_jobs=args.jobs)
    if args.out and not StorageManager().save_labels(result.labels, args.out):
        return EXIT_RUNTIME
    if data.labels is not None:
        print(" ".join(_format_metrics(evaluate(data.label_array(), result.labels))))
    return EXIT_OK


def _cmd_metrics(args) -> int:
    storage = StorageManager()
    true_labels = storage.load_labels(args.true_path)
    pred_labels = storage.load_labels(args.pred_path)
    for path, labels in ((args.true_path, true_labels), (args.pred_path, pred_labels)):
        if labels is None:
            raise FormatError(f"cannot read labels from {path}")
    for line in _format_metrics(evaluate(true_labels, pred_labels)):
        print(line)
    return EXIT_OK


def _cmd_dump(args) -> int:
    cfg, data = _prepare(args)
    features = layer_features(cfg, data, args.layer, n_jobs=args.jobs)
    storage = StorageManager()
    if not storage.save_embedding_dump(features, data.labels, args.out):
        return EXIT_RUNTIME
    logger.info("dumped %d x %d rows to %s", features.shape[0], features.shape[1], args.out)
    if args.plot:
        from visualization.renderer import render_embedding
        if not render_embedding(features, data.labels, args.plot):
            return EXIT_RUNTIME
    return EXIT_OK


def _cmd_patterns(args) -> int:
    from visualization.renderer import DiagnosticRenderer

    if args.centers < 1:
        raise ConfigError(f"must be >= 1, got {args.centers}", "centers")
    cfg, data = _prepare(args)
    if not DiagnosticRenderer().render_pattern_centers(data, cfg, args.centers, args.out,
                                                       n_jobs=args.jobs):
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {
    'run': _cmd_run,
    'baseline': _cmd_baseline,
    'metrics': _cmd_metrics,
    'dump-embedding': _cmd_dump,
    'patterns': _cmd_patterns,
}


def cli_main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and run one subcommand.

    Returns:
        0 on success, 1 on usage or validation errors, 2 on runtime errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_VALIDATION
    except SystemExit as e:
        # --help and --version
        return EXIT_OK if not e.code else EXIT_VALIDATION

    configure_logging(args.verbose, args.quiet)
    if args.jobs < 1:
        logger.error("--jobs must be >= 1, got %d", args.jobs)
        return EXIT_VALIDATION

    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error("invalid configuration: %s", e)
        return EXIT_VALIDATION
    except SANetError as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_RUNTIME
    except OSError as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_RUNTIME


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

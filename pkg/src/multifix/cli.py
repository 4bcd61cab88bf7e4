# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Command-line front end: ``multifix {gen,train,sweep,distill,explain,report}``.

Exit status is 0 on success, otherwise the ``exit_code`` of the error: 2 for
configuration errors, 3 for data errors, 4 for numeric aborts and 1 otherwise.
"""
import argparse
import logging
import sys

from multifix import __version__
from multifix.errors import MultiFIXError
from multifix.experiment import Experiment, load_config, report

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override one config value, repeatable")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="multifix",
                                     description="Multimodal feature-inducing fusion models "
                                                 "with symbolic distillation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    gen.add_argument("--problem", choices=["multiclass", "multifeature", "xor", "xor3"])
    gen.add_argument("--img-size", type=int)
    gen.add_argument("--tab-sigma", type=float)
    gen.add_argument("--n-samples", type=int)

    train = commands.add_parser("train", parents=[common],
                                help="cross-validate and keep fold checkpoints")
    train.add_argument("--data", help="dataset directory written by gen")
    train.add_argument("--variant", help="training variant, e.g. hpo_ae_fusion")

    sweep = commands.add_parser("sweep", parents=[common],
                                help="resolution by tabular-noise degradation sweep")
    sweep.add_argument("--problem", default="multiclass", choices=["multiclass"])
    sweep.add_argument("--resolutions", type=int, nargs="+")
    sweep.add_argument("--sigmas", type=float, nargs="+")
    sweep.add_argument("--nas-sample", type=int,
                       help="search this many fusion architectures on the clean cell first")

    distill = commands.add_parser("distill", parents=[common],
                                  help="replace blocks of a training run by expressions")
    distill.add_argument("--run", required=True, help="directory written by train")

    explain = commands.add_parser("explain", parents=[common],
                                  help="heatmaps, expressions and truth tables of a run")
    explain.add_argument("--run", required=True, help="directory written by train and distill")
    explain.add_argument("--samples", type=int, nargs="*", help="sample indices to explain")

    summary = commands.add_parser("report", parents=[common], help="summarise results")
    summary.add_argument("results_dir", help="directory searched for results.csv files")
    return parser


def _overrides(args):
    """Subcommand flags as dotted overrides, applied after ``--set``."""
    pairs = []
    match args.command:
        case "gen":
            pairs = [("data.problem", args.problem), ("data.img_size", args.img_size),
                     ("data.tab_sigma", args.tab_sigma), ("data.n_samples", args.n_samples)]
        case "train":
            pairs = [("data.data_dir", args.data), ("run.variant", args.variant)]
        case "sweep":
            pairs = [("data.problem", args.problem), ("run.resolutions", args.resolutions),
                     ("run.sigmas", args.sigmas), ("nas.sample", args.nas_sample)]
            if args.nas_sample is not None:
                pairs.append(("run.search", "nas"))
    return pairs


def run(args):
    """Execute a parsed command line; errors propagate."""
    config = load_config(args.config, args.overrides)
    for key, value in _overrides(args):
        if value is not None:
            section, name = key.split(".")
            config[section][name] = value
    command = sys.argv[:] if args.argv is None else ["multifix"] + list(args.argv)
    experiment = Experiment(config, args.seed, args.out, args.jobs, command)
    match args.command:
        case "gen":
            experiment.generate()
        case "train":
            experiment.train()
        case "sweep":
            experiment.sweep()
        case "distill":
            experiment.distill(args.run)
        case "explain":
            experiment.explain(args.run, args.samples)
        case "report":
            print(report(args.results_dir))


def main(argv=None):
    """
    Console entry point.

    Returns
    -------
    int
        Exit status.
    """
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)
    try:
        run(args)
    except MultiFIXError as e:
        code = e.exit_code
        logger.error("%s: %s", type(e).__name__, e)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())

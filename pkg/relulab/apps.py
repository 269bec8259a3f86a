"""
relulab.apps
^^^^^^^^^^^^

The ``relulab`` command line tool.

``relulab run <config.json>`` runs the experiment described in a config
file. The subcommands ``profile``, ``gd``, ``sgd``, ``init``,
``interpolate`` and ``verify`` run one experiment directly; their flags
mirror the fields of the corresponding config section, and every field that
is not given takes the default documented in
``relulab/schemas/experiment.json``. ``relulab inspect <file>`` prints a
summary of a trajectory, profile or moment file written by an earlier run.
"""
import argparse
import json
import logging
from typing import Any, Dict, List, Optional

from . import DEFAULT_SEED
from .config import ConfigError, buildConfig
from .experiments import cmdInspect, cmdRun, runExperiment
from .helpers import parseVector
from .log import setupLogging
from .serialize import toJsonable

logger = logging.getLogger('relulab')


def _vector(value: str) -> List[float]:
    try:
        return parseVector(value).tolist()
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _flag(parser: argparse.ArgumentParser, name: str, field: str, **kwargs) -> None:
    """Add a flag that sets config field ``field`` (dotted) only when given."""
    parser.add_argument(name, dest=f'cfg:{field}', default=argparse.SUPPRESS, **kwargs)


def _sectionBody(args: argparse.Namespace) -> Dict[str, Any]:
    body: Dict[str, Any] = {}
    for dest, value in vars(args).items():
        if not dest.startswith('cfg:'):
            continue
        node = body
        *parents, leaf = dest[4:].split('.')
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return body


def _logFlags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--log-file', type=str, default=None,
                        help='also write a DEBUG-level log to this file')
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='log DEBUG messages to the terminal')


def _commonFlags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int, default=None,
                        help=f'top-level seed (default: {DEFAULT_SEED})')
    parser.add_argument('--out', type=str, default=None,
                        help='output folder (default: relulab-out)')
    _logFlags(parser)


def _distributionFlags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group('distribution')
    _flag(g, '--kind', 'distribution.kind',
          choices=['gaussian', 'unit_sphere', 'clustered', 'from_file'],
          help='patch distribution (default: gaussian)')
    _flag(g, '--p', 'distribution.p', type=int, help='patch dimension (default: 10)')
    _flag(g, '--k', 'distribution.k', type=int, help='patches per sample (default: 1)')
    _flag(g, '--rho', 'distribution.rho', type=float, help='cluster angular radius')
    _flag(g, '--mu', 'distribution.mu', type=float, help='margin band mass')
    _flag(g, '--gap', 'distribution.gap', type=float,
          help='margin band half-width (default: min(1.5 rho, (rho + pi/2)/2))')
    _flag(g, '--data', 'distribution.path', type=str, help='dataset file for --kind from_file')
    _flag(g, '--w-star', 'w_star', type=_vector,
          help='teacher filter, comma separated (default: random unit vector)')


def _profileFlags(parser: argparse.ArgumentParser, prefix: str = '') -> None:
    g = parser.add_argument_group('smoothness profile')
    _flag(g, '--n-samples', f'{prefix}n_samples', type=int, help='Monte Carlo sample size')
    _flag(g, '--n-w', f'{prefix}n_w', type=int, help='directions per grid angle')
    _flag(g, '--grid-size', f'{prefix}grid_size', type=int, help='number of grid angles')
    _flag(g, '--n-batches', f'{prefix}n_batches', type=int,
          help='batches for standard errors')


def _runFlags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group('optimization')
    _flag(g, '--init-distance', 'init.distance', type=float,
          help='start at distance r ||w*|| from the teacher (default: 0.5)')
    _flag(g, '--schedule', 'schedule.kind', choices=['constant', 'two_stage', 'adaptive_theory'],
          help='step size schedule (default: adaptive_theory)')
    _flag(g, '--eta', 'schedule.eta', type=float, help='constant step size')
    _flag(g, '--eta-small', 'schedule.eta_small', type=float, help='first two-stage step size')
    _flag(g, '--eta-large', 'schedule.eta_large', type=float, help='second two-stage step size')
    _flag(g, '--switch-angle', 'schedule.switch_angle', type=float,
          help='angle at which the two-stage schedule switches')
    _flag(g, '--safety', 'schedule.safety', type=float,
          help='fraction of the theoretical step size bound')
    _flag(g, '--max-iters', 'max_iters', type=int, help='maximal number of steps')
    _flag(g, '--stop-tol', 'stop_tol', type=float,
          help='stop once ||w - w*|| <= stop_tol ||w*||')
    _flag(g, '--seeds', 'seeds', type=int, help='number of runs with derived seeds')
    _flag(g, '--profile-samples', 'profile.n_samples', type=int,
          help='sample size of the smoothness profile')
    _flag(g, '--profile-n-w', 'profile.n_w', type=int,
          help='directions per angle of the smoothness profile')
    _flag(g, '--profile-file', 'profile.file', type=str,
          help='reuse the smoothness profile saved in this JSON file')


def buildParser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='relulab',
        description='Recovery of a ReLU convolutional filter by gradient descent: '
                    'smoothness profiles, GD/SGD runs and verification checks.')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('run', help='run the experiment of a config file')
    p.add_argument('config', type=str, help='path to the JSON (or YAML) config')
    _commonFlags(p)

    p = sub.add_parser('profile', help='estimate the smoothness profile of a distribution')
    _commonFlags(p)
    _distributionFlags(p)
    _profileFlags(p)

    p = sub.add_parser('gd', help='population gradient descent runs')
    _commonFlags(p)
    _distributionFlags(p)
    _runFlags(p)
    _flag(p, '--n-mc', 'n_mc', type=int, help='Monte Carlo batch size')
    _flag(p, '--fresh-batches', 'pinned', action='store_false',
          help='draw a fresh batch every step instead of pinning one')
    _flag(p, '--no-contraction-check', 'check_contraction', action='store_false',
          help='skip comparing realized with predicted contraction')

    p = sub.add_parser('sgd', help='stochastic gradient descent runs')
    _commonFlags(p)
    _distributionFlags(p)
    _runFlags(p)
    _flag(p, '--batch-size', 'batch_size', type=int, help='minibatch size')
    _flag(p, '--gradient-bound', 'gradient_bound', type=float,
          help='project stochastic gradients onto this ball')
    _flag(p, '--n-eval', 'n_eval', type=int, help='evaluation set size for the loss column')
    _flag(p, '--eps', 'theory.eps', type=float,
          help='derive step size and budget from measured constants for target accuracy eps')
    _flag(p, '--delta', 'theory.delta', type=float, help='failure probability for --eps')

    p = sub.add_parser('init', help='initialization success frequencies')
    _commonFlags(p)
    _flag(p, '--ps', 'ps', type=int, nargs='+', help='dimensions (default: 2 4 8 16)')
    _flag(p, '--alphas', 'alphas', type=float, nargs='+',
          help='ball radius ratios (default: 0.05 0.1)')
    _flag(p, '--trials', 'trials', type=int, help='draws per (p, alpha)')
    _flag(p, '--all-pairs', 'admissible_only', action='store_false',
          help='include pairs outside the admissible radius range')
    _flag(p, '--corollary-p', 'corollary.distribution.p', type=int,
          help='dimension of the convolutional initialization case')
    _flag(p, '--phi-star', 'corollary.phi_star', type=float,
          help='phi* for the convolutional initialization case (default: from a smoothness profile)')

    p = sub.add_parser('interpolate', help='loss along the segment from a learned filter to w*')
    _commonFlags(p)
    _distributionFlags(p)
    _flag(p, '--w', 'w', type=_vector, help='learned filter (default: train with GD first)')
    _flag(p, '--n-samples', 'n_samples', type=int, help='Monte Carlo sample size')
    _flag(p, '--grid-size', 'grid_size', type=int, help='interpolation grid points')

    p = sub.add_parser('verify', help='run the verification checks')
    _commonFlags(p)
    _distributionFlags(p)
    _profileFlags(p)
    _flag(p, '--checks', 'checks', nargs='+',
          choices=['lemma', 'critical_point', 'contraction', 'clustered', 'beta',
                   'duplicate', 'margin'],
          help='checks to run (default: all)')
    _flag(p, '--phi0', 'phi0', type=float, help='angle of the clustered-patch check')
    _flag(p, '--lemma-configs', 'lemma_configs', type=int,
          help='random students for the decomposition checks')

    p = sub.add_parser('inspect', help='summarize a saved trajectory, profile or moment file')
    p.add_argument('path', type=str, help='trajectory CSV, profile JSON or moments JSON')
    _logFlags(p)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = buildParser().parse_args(argv)
    setupLogging(addStreamHandler=True, logFile=args.log_file,
                 streamHandlerLevel=logging.DEBUG if args.verbose else logging.INFO)

    if args.command == 'run':
        return cmdRun(args.config, seed=args.seed, out=args.out)
    if args.command == 'inspect':
        try:
            report = cmdInspect(args.path)
        except Exception as e:
            logger.error(f"{type(e).__name__}: {e}")
            return 1
        print(json.dumps(toJsonable(report), indent=2, sort_keys=True))
        return 0

    seed = DEFAULT_SEED if args.seed is None else args.seed
    out = 'relulab-out' if args.out is None else args.out
    try:
        config = buildConfig(args.command, _sectionBody(args), seed, out)
    except ConfigError as e:
        logger.error(str(e))
        return 1
    try:
        runExperiment(config)
    except Exception as e:
        logger.error(f"{type(e).__name__}: {e}")
        logger.debug('', exc_info=True)
        return 1
    return 0


def script() -> None:
    raise SystemExit(main())

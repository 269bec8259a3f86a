"""
relulab.experiments
^^^^^^^^^^^^^^^^^^^

The experiment suite behind the command line: smoothness profiles, GD and
SGD recovery runs, initialization sweeps, the interpolation curve and the
verification checks. Each runner takes the body of its config section, the
top-level seed and an output folder, writes its CSV/JSON files there and
returns a summary dictionary.

Seeds: the teacher is drawn from stream ``(seed, 'teacher')``; datasets,
profiles and runs use their own named streams below the top-level seed, so
changing one experiment setting never shifts the random numbers of another.
"""
import logging
import os
import traceback
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from . import helpers
from .base import DomainError, TheoremPreconditionError
from .config import ConfigError, configToJson, experimentSection, loadConfig
from .distributions import (Dataset, DistributionKind, DistributionSpec, duplicatePatches,
                            fromArray, loadDataset, marginMass, sample)
from .initialization import (INIT_COLUMNS, InitSpec, bestOfRestarts, corollaryAlpha,
                             corollaryRadius, initSweep, successExperiment)
from .linalg import rotateToward, randomPerpendicular
from .log import LogLevels, log, runLogger
from .model import gradientsAll, meanLoss
from .optimize import (TRAJECTORY_COLUMNS, RunConfig, RunMode, Schedule, ScheduleKind,
                       checkContraction, runGd, runSgd, sgdDefaults)
from .regions import (Region, estimateMoments, lemmaDecomposition, lemmaTermSamples,
                      populationGradient, regionCounts)
from .serialize import (loadJson, loadMoments, loadProfile, loadTrajectoryFrame, saveFrame,
                        saveJson, saveMoments, saveProfile, saveTrajectory)
from .smoothness import (SmoothnessProfile, compareClosedForm2d, defaultGrid, phiStar,
                         profile, verifyBetaBounds)

logger = logging.getLogger(__name__)

#: columns of the interpolation CSV.
INTERPOLATION_COLUMNS = ['alpha', 'loss']

#: minimal fraction of steps that must pass the contraction check.
CONTRACTION_PASS_FRACTION = {False: 0.9, True: 0.85}


# Building blocks

def teacherVector(body: Dict[str, Any], p: int, seed: int) -> np.ndarray:
    """The configured teacher, or a random unit vector from stream ``(seed, 'teacher')``."""
    if body.get('w_star') is not None:
        wStar = np.asarray(body['w_star'], dtype=float)
        if wStar.shape[0] != p:
            raise DomainError(f"w_star has {wStar.shape[0]} entries, the distribution has p={p}")
        return wStar
    g = helpers.childRng(seed, 'teacher').standard_normal(p)
    return g / np.linalg.norm(g)


def setup(body: Dict[str, Any], seed: int):
    """Distribution spec and teacher of a config section.

    Clustered patches measure their margin against the teacher unless
    ``margin_dir`` is given; file datasets take ``p`` and ``k`` from the file.
    """
    dist = dict(body['distribution'])
    kind = DistributionKind.fromName(dist['kind'])
    if kind is DistributionKind.FromFile:
        if not dist.get('path'):
            raise DomainError("a from_file distribution needs a path")
        fileData = loadDataset(dist['path'])
        dist['p'], dist['k'] = fileData.p, fileData.k
    wStar = teacherVector(body, dist['p'], seed)
    if kind is DistributionKind.ClusteredPatches and dist.get('margin_dir') is None:
        dist['margin_dir'] = wStar
    return DistributionSpec.fromDict(dist), wStar


def drawData(spec: DistributionSpec, n: int, seed: int, stream: str) -> Dataset:
    """``n`` samples from stream ``(seed, stream)``; file data is used whole when shorter."""
    if spec.kind is DistributionKind.FromFile:
        data = loadDataset(spec.path, spec)
        return data if data.n <= n else data.subset(0, n)
    return sample(spec, n, helpers.childSeed(seed, stream))


def profileFor(data: Dataset, wStar: np.ndarray, settings: Dict[str, Any],
               seed: int) -> SmoothnessProfile:
    phis = settings.get('phis')
    if phis is None:
        phis = defaultGrid(settings['grid_size'], settings['grid_margin'])
    return profile(data, wStar, phis, nW=settings['n_w'], seed=seed,
                   nBatches=settings['n_batches'])


def profileOrFile(spec: DistributionSpec, wStar: np.ndarray, settings: Dict[str, Any],
                  seed: int, dataStream: str, profileStream: str) -> SmoothnessProfile:
    """The profile saved in ``settings['file']``, or one estimated from fresh samples.

    :raises DomainError: if a saved profile was measured in another dimension.
    """
    if settings.get('file'):
        prof = loadProfile(settings['file'])
        if prof.p != spec.p:
            raise DomainError(f"profile {settings['file']} has p={prof.p}, the distribution has p={spec.p}")
        logger.info(f"Using the smoothness profile in {settings['file']}.")
        return prof
    data = drawData(spec, settings['n_samples'], seed, dataStream)
    return profileFor(data, wStar, settings, helpers.childSeed(seed, profileStream))


def scheduleFrom(settings: Dict[str, Any], prof: Optional[SmoothnessProfile],
                 multiPatch: bool) -> Schedule:
    kind = ScheduleKind.fromName(settings['kind'])
    return Schedule(kind=kind, eta=settings['eta'], eta_small=settings['eta_small'],
                    eta_large=settings['eta_large'], switch_angle=settings['switch_angle'],
                    profile=prof, safety=settings['safety'], multi_patch=multiPatch)


def initFrom(init: Dict[str, Any], wStar: np.ndarray, seed: int):
    """Translate an ``init`` config block into a :class:`RunConfig` starting point."""
    if 'vector' in init:
        return np.asarray(init['vector'], dtype=float)
    if 'ball' in init:
        return InitSpec(p=wStar.shape[0], alpha=init['ball']['alpha'])
    if 'restarts' in init:
        r = init['restarts']
        res = bestOfRestarts(wStar, r['alpha'], r.get('max_draws', 100),
                             helpers.childSeed(seed, 'restarts'))
        logger.info(f"Initialization after {res.draws} draw(s), success={res.success}.")
        return res.w0
    return float(init['distance'])


def _runSeeds(count: int, seed: int) -> List[int]:
    return [helpers.childSeed(seed, 'run', i) for i in range(count)]


def _trajectoryName(i: int, count: int) -> str:
    return 'trajectory' if count == 1 else f'trajectory_{i:03d}'


# Experiments

def runProfileExperiment(body: Dict[str, Any], seed: int, out: str) -> Dict[str, Any]:
    """Profile the configured distribution and compare ``beta`` with its bound.

    Two-dimensional unit-sphere input is also compared with the planar closed forms.
    """
    spec, wStar = setup(body, seed)
    data = drawData(spec, body['n_samples'], seed, 'profile-data')
    prof = profileFor(data, wStar, body, helpers.childSeed(seed, 'profile'))
    saveProfile(prof, out)
    summary: Dict[str, Any] = {
        'experiment': 'profile', 'seed': seed, 'w_star': wStar,
        'beta_hat': prof.beta_hat, 'l_cross_hat': prof.l_cross_hat,
        'beta_check': verifyBetaBounds(prof, spec.kind),
        'dataset': data.metadata,
    }
    if spec.kind is DistributionKind.UnitSphere and spec.p == 2:
        summary['closed_form'] = compareClosedForm2d(prof)
    try:
        summary['phi_star'] = phiStar(prof)
    except DomainError as e:
        logger.warning(f"No phi*: {e}")
        summary['phi_star'] = None
    saveJson(summary, os.path.join(out, 'profile_summary.json'))
    return summary


def _optimizationRuns(body: Dict[str, Any], seed: int, out: str, mode: RunMode) -> Dict[str, Any]:
    spec, wStar = setup(body, seed)
    multiPatch = spec.k > 1
    sched = body['schedule']
    theory = body.get('theory') if mode is RunMode.SGD else None
    needProfile = (sched['kind'] == ScheduleKind.AdaptiveTheory.value
                   or theory is not None
                   or (mode is RunMode.PopulationGD and body.get('check_contraction', False)))

    prof = None
    if needProfile:
        prof = profileOrFile(spec, wStar, body['profile'], seed, 'profile-data', 'profile')
        saveProfile(prof, out)

    count = body['seeds']

    def oneRun(item):
        i, runSeed = item
        schedule = scheduleFrom(sched, prof, multiPatch)
        common = dict(dist_spec=spec, w_star=wStar, init=initFrom(body['init'], wStar, runSeed),
                      schedule=schedule, mode=mode, max_iters=body['max_iters'],
                      stop_tol=body['stop_tol'], seed=runSeed)
        extra: Dict[str, Any] = {}
        if mode is RunMode.PopulationGD:
            cfg = RunConfig(n_mc=body['n_mc'], pinned=body['pinned'], **common)
            if spec.kind is DistributionKind.FromFile:
                cfg.dataset = drawData(spec, body['n_mc'], runSeed, 'gd-batch')
            traj = runGd(cfg)
        else:
            cfg = RunConfig(batch_size=body['batch_size'], gradient_bound=body['gradient_bound'],
                            n_eval=body['n_eval'], **common)
            if spec.kind is DistributionKind.FromFile:
                cfg.dataset = drawData(spec, np.iinfo(np.int64).max, runSeed, 'pool')
            if theory is not None:
                extra['theory'] = _applySgdTheory(cfg, prof, theory)
            traj = runSgd(cfg)
        if prof is not None and mode is RunMode.PopulationGD and body.get('check_contraction'):
            extra['contraction'] = checkContraction(traj, prof, multiPatch)
        traj.metadata.update(extra)
        files = saveTrajectory(traj, out, _trajectoryName(i, count))
        runLogger(logger, i, runSeed).info(
            f"relative error {traj.relativeError:.3e} after {traj.metadata['iterations']} steps.")
        return {'seed': runSeed, 'iterations': traj.metadata['iterations'],
                'relative_error': traj.relativeError, 'converged': traj.metadata['converged'],
                'max_grad_norm': traj.metadata['max_grad_norm'],
                'trajectory': os.path.basename(files['csv']), **extra}

    runs = helpers.mapOrdered(oneRun, list(enumerate(_runSeeds(count, seed))))
    summary: Dict[str, Any] = {
        'experiment': mode.value, 'seed': seed, 'w_star': wStar, 'runs': runs,
        'converged': sum(1 for r in runs if r['converged']), 'total': len(runs),
    }
    if prof is not None:
        summary.update(beta_hat=prof.beta_hat, l_cross_hat=prof.l_cross_hat)
    saveJson(summary, os.path.join(out, f'{mode.value}_summary.json'))
    logger.info(f"{mode.value}: {summary['converged']}/{summary['total']} runs converged.")
    return summary


def _applySgdTheory(cfg: RunConfig, prof: SmoothnessProfile, theory: Dict[str, Any]) -> Dict[str, Any]:
    """Replace the schedule and iteration budget of ``cfg`` by the theory defaults.

    Without a configured ``gradient_bound``, B is the largest minibatch gradient
    norm at ``w0`` over the pilot set split into minibatches of the run's size.
    """
    w0 = cfg.initialPoint()
    r0 = float(np.linalg.norm(w0 - cfg.w_star))
    bound = theory.get('gradient_bound')
    if bound is None:
        pilot = drawData(cfg.dist_spec, theory['n_pilot'], cfg.seed, 'pilot')
        size = min(cfg.batch_size, pilot.n)
        grads = gradientsAll(w0, cfg.w_star, pilot.samples)
        batches = grads[:(pilot.n // size) * size].reshape(pilot.n // size, size, -1).mean(axis=1)
        bound = max(float(np.max(np.linalg.norm(batches, axis=1))), 1e-12)
    defaults = sgdDefaults(prof, cfg.w_star, r0, bound, theory['eps'], theory['delta'],
                           theory['safety'])
    cfg.schedule = Schedule(ScheduleKind.Constant, eta=defaults['eta'])
    cfg.max_iters = defaults['iterations']
    cfg.stop_tol = 2 * theory['eps']
    cfg.init = w0
    return defaults


def runGdExperiment(body: Dict[str, Any], seed: int, out: str) -> Dict[str, Any]:
    """Population GD from the configured initialization, once per run seed."""
    return _optimizationRuns(body, seed, out, RunMode.PopulationGD)


def runSgdExperiment(body: Dict[str, Any], seed: int, out: str) -> Dict[str, Any]:
    """SGD on fresh minibatches, once per run seed."""
    return _optimizationRuns(body, seed, out, RunMode.SGD)


def runInitExperiment(body: Dict[str, Any], seed: int, out: str) -> Dict[str, Any]:
    """Initialization success sweep and the corollary radius case."""
    trials = body['trials']
    results = initSweep(body['ps'], body['alphas'], trials,
                        helpers.childSeed(seed, 'init'), body['admissible_only'])
    rows = []
    for r in results:
        sigma = np.sqrt(max(r.bound * (1 - r.bound), 0.) / r.trials)
        rows.append({**r.toRow(), 'frequency_norm_aware': r.frequency_norm_aware,
                     'passed': bool(r.frequency >= r.bound - 3 * sigma)})
    saveFrame(pd.DataFrame([r.toRow() for r in results], columns=INIT_COLUMNS),
              os.path.join(out, 'init.csv'))

    summary: Dict[str, Any] = {'experiment': 'init', 'seed': seed, 'rows': rows}
    if body.get('corollary') is not None:
        summary['corollary'] = _corollaryCase(body['corollary'], trials, seed, out)
    saveJson(summary, os.path.join(out, 'init.json'))
    return summary


def _corollaryCase(cor: Dict[str, Any], trials: int, seed: int, out: str) -> Dict[str, Any]:
    """Ball initialization with radius ``cos(phi*) ||w*||``.

    ``phi*`` is the configured value, or read off a smoothness profile of the
    configured distribution (written to ``corollary_profile.csv/json``).
    """
    spec, wStar = setup(cor, helpers.childSeed(seed, 'corollary'))
    report: Dict[str, Any] = {'p': spec.p, 'threshold': 0.25}
    phi = cor.get('phi_star')
    if phi is None:
        prof = profileOrFile(spec, wStar, cor['profile'], seed, 'corollary-data', 'corollary-profile')
        saveProfile(prof, out, 'corollary_profile')
        try:
            phi = phiStar(prof)
        except TheoremPreconditionError as e:
            logger.warning(f"Corollary case skipped: {e}")
            report.update(skipped=str(e), passed=None)
            return report
        report['phi_star_source'] = 'profile'
    else:
        report['phi_star_source'] = 'config'

    alpha = corollaryAlpha(phi)
    res = successExperiment(InitSpec(p=spec.p, alpha=alpha, trials=trials,
                                     seed=helpers.childSeed(seed, 'corollary-trials')), wStar)
    report.update(phi_star=phi, alpha=alpha, radius=corollaryRadius(wStar, phi),
                  frequency=res.frequency, frequency_norm_aware=res.frequency_norm_aware,
                  stderr=res.stderr,
                  alpha_below_corollary_limit=bool(alpha < 1 / np.sqrt(8 * np.pi * spec.p)),
                  passed=bool(res.frequency > 0.25))
    return report


def cmdInterpolate(w, wStar, dataset: Dataset, gridSize: int) -> pd.DataFrame:
    """Mean loss along ``alpha w + (1 - alpha) w*`` for ``alpha`` on a uniform grid in ``[0, 1]``.

    :raises DomainError: if ``gridSize < 2``.
    """
    if gridSize < 2:
        raise DomainError(f"the interpolation grid needs at least 2 points, got {gridSize}")
    w = np.asarray(w, dtype=float)
    wStar = np.asarray(wStar, dtype=float)
    alphas = np.linspace(0., 1., gridSize)
    losses = [meanLoss(a * w + (1 - a) * wStar, wStar, dataset) for a in alphas]
    return pd.DataFrame({'alpha': alphas, 'loss': losses}, columns=INTERPOLATION_COLUMNS)


def runInterpolateExperiment(body: Dict[str, Any], seed: int, out: str) -> Dict[str, Any]:
    """Loss along the segment between a learned filter and the teacher.

    Without a configured ``w`` the filter is learned first with constant-step
    population GD. The curve is compared with the loss at a random unit
    direction.
    """
    spec, wStar = setup(body, seed)
    data = drawData(spec, body['n_samples'], seed, 'interpolate-data')
    training = None
    if body.get('w') is not None:
        w = np.asarray(body['w'], dtype=float)
    else:
        t = body['train']
        cfg = RunConfig(dist_spec=spec, w_star=wStar, init=t['init_distance'],
                        schedule=Schedule(ScheduleKind.Constant, eta=t['eta']),
                        n_mc=t['n_mc'], max_iters=t['max_iters'], stop_tol=t['stop_tol'],
                        seed=helpers.childSeed(seed, 'train'))
        if spec.kind is DistributionKind.FromFile:
            cfg.dataset = data
        traj = runGd(cfg)
        w = traj.final_w
        training = {'iterations': traj.metadata['iterations'],
                    'relative_error': traj.relativeError}

    curve = cmdInterpolate(w, wStar, data, body['grid_size'])
    saveFrame(curve, os.path.join(out, 'interpolation.csv'))

    g = helpers.childRng(seed, 'baseline').standard_normal(wStar.shape[0])
    baseline = meanLoss(g / np.linalg.norm(g), wStar, data)
    maxLoss = float(curve['loss'].max())
    summary = {'experiment': 'interpolate', 'seed': seed, 'w': w, 'w_star': wStar,
               'max_loss': maxLoss, 'baseline_loss': baseline,
               'ratio': maxLoss / baseline if baseline > 0 else None,
               'passed': bool(maxLoss <= 0.01 * baseline), 'training': training}
    saveJson(summary, os.path.join(out, 'interpolation.json'))
    return summary


# Verification

class _VerifyContext:
    """Data shared by the verification checks, built lazily."""

    def __init__(self, body: Dict[str, Any], seed: int, out: Optional[str] = None):
        self.body = body
        self.seed = seed
        self.out = out
        self.spec, self.wStar = setup(body, seed)
        self.data = drawData(self.spec, body['n_samples'], seed, 'verify-data')
        self._profile: Optional[SmoothnessProfile] = None

    @property
    def multiPatch(self) -> bool:
        return self.data.k > 1

    def profileOf(self, data: Dataset, stream: str) -> SmoothnessProfile:
        settings = dict(self.body, phis=None)
        return profileFor(data, self.wStar, settings, helpers.childSeed(self.seed, stream))

    @property
    def profile(self) -> SmoothnessProfile:
        if self._profile is None:
            self._profile = self.profileOf(self.data, 'verify-profile')
        return self._profile

    def randomStudents(self):
        """Students at uniformly random angles and norms in ``[0.2, 2] ||w*||``."""
        wNorm = np.linalg.norm(self.wStar)
        for i in range(self.body['lemma_configs']):
            rng = helpers.childRng(self.seed, 'lemma', i)
            phi = rng.uniform(0.05, np.pi - 0.05)
            w = rotateToward(self.wStar, randomPerpendicular(self.wStar, rng), phi)
            yield w * wNorm * rng.uniform(0.2, 2.)


def _singlePatchView(data: Dataset) -> Dataset:
    if data.k == 1:
        return data
    return fromArray(data.patches()[:, :, None])


def _checkLemma(ctx: _VerifyContext) -> Dict[str, Any]:
    data = _singlePatchView(ctx.data)
    worstZ = np.inf
    worstIdentity = 0.
    fewest = {r.value: data.n for r in Region}
    files = []
    for i, w in enumerate(ctx.randomStudents()):
        for r, count in regionCounts(w, ctx.wStar, data).items():
            fewest[r.value] = min(fewest[r.value], count)
        terms = lemmaTermSamples(data, w, ctx.wStar)
        means = terms.mean(axis=0)
        se = terms.std(axis=0, ddof=1) / np.sqrt(terms.shape[0])
        z = np.where(se > 0, means / np.where(se > 0, se, 1.), np.inf)
        worstZ = min(worstZ, float(np.min(z)))
        m = estimateMoments(data, w, ctx.wStar)
        t1, t2 = lemmaDecomposition(m, w, ctx.wStar)
        inner = float(populationGradient(m, w, ctx.wStar) @ (w - ctx.wStar))
        worstIdentity = max(worstIdentity, abs(t1 + t2 - inner) / (1. + abs(inner)))
        if ctx.out is not None:
            path = saveMoments(m, os.path.join(ctx.out, 'moments', f'lemma_{i:03d}.json'))
            files.append(os.path.relpath(path, os.path.abspath(ctx.out)))
    return {'check': 'lemma', 'configs': ctx.body['lemma_configs'], 'n_samples': data.n,
            'min_z_score': worstZ, 'z_tolerance': -3.,
            'max_identity_error': worstIdentity, 'identity_tolerance': 1e-10,
            'min_region_patches': fewest, 'moments_files': files,
            'passed': bool(worstZ >= -3. and worstIdentity <= 1e-10)}


def _checkCriticalPoint(ctx: _VerifyContext) -> Dict[str, Any]:
    data = _singlePatchView(ctx.data)
    smallest = np.inf
    for w in ctx.randomStudents():
        t1, t2 = lemmaDecomposition(estimateMoments(data, w, ctx.wStar), w, ctx.wStar)
        smallest = min(smallest, t1 + t2)
    return {'check': 'critical_point', 'configs': ctx.body['lemma_configs'],
            'n_samples': data.n, 'min_inner_product': smallest,
            'passed': bool(smallest > 0)}


def _checkContraction(ctx: _VerifyContext) -> Dict[str, Any]:
    prof = ctx.profile
    cfg = RunConfig(dist_spec=ctx.spec, w_star=ctx.wStar, init=ctx.body['gd_init_distance'],
                    schedule=Schedule(ScheduleKind.AdaptiveTheory, profile=prof,
                                      multi_patch=ctx.multiPatch),
                    max_iters=ctx.body['gd_max_iters'], stop_tol=1e-3,
                    seed=helpers.childSeed(ctx.seed, 'verify-gd'), dataset=ctx.data)
    report = checkContraction(runGd(cfg), prof, ctx.multiPatch)
    need = CONTRACTION_PASS_FRACTION[ctx.multiPatch]
    report.update(required_fraction=need, n_samples=ctx.data.n,
                  passed=bool(report['pass_fraction'] >= need and report['angle_bound_ok']))
    return report


def _checkClustered(ctx: _VerifyContext) -> Dict[str, Any]:
    if ctx.spec.kind is not DistributionKind.ClusteredPatches:
        return {'check': 'clustered', 'skipped': 'needs clustered patches', 'passed': None}
    prof = ctx.profile
    rho, mu = ctx.spec.rho, ctx.spec.mu
    i = prof.indexAtOrAbove(ctx.body['phi0'])
    sigmaGamma = float(np.hypot(prof.gamma_se[i], prof.gamma_avg_se[i]))
    lower = prof.gamma_avg[i] - 4 * (1 - np.cos(rho)) - 3 * sigmaGamma
    sigmaCross = float(np.max(prof.l_cross_se))
    upper = 3 * mu + 3 * sigmaCross
    return {'check': 'clustered', 'phi0': prof.phis[i], 'rho': rho, 'mu': mu,
            'gamma': prof.gamma[i], 'gamma_avg': prof.gamma_avg[i], 'gamma_lower_bound': lower,
            'gamma_tolerance': 3 * sigmaGamma,
            'l_cross_hat': prof.l_cross_hat, 'l_cross_upper_bound': upper,
            'l_cross_tolerance': 3 * sigmaCross, 'n_samples': ctx.data.n, 'n_w': prof.n_w,
            'passed': bool(prof.gamma[i] >= lower and prof.l_cross_hat <= upper)}


def _checkBeta(ctx: _VerifyContext) -> Dict[str, Any]:
    return verifyBetaBounds(ctx.profile, ctx.spec.kind)


def _checkDuplicate(ctx: _VerifyContext) -> Dict[str, Any]:
    dup = duplicatePatches(ctx.data)
    prof = ctx.profileOf(dup, 'verify-duplicate')
    tol = 3 * float(np.max(prof.l_cross_se)) + 1e-12
    return {'check': 'duplicate', 'k': dup.k, 'l_cross_hat': prof.l_cross_hat,
            'tolerance': tol, 'n_samples': dup.n, 'passed': bool(prof.l_cross_hat <= tol)}


def _checkMargin(ctx: _VerifyContext) -> Dict[str, Any]:
    spec = ctx.spec
    if spec.kind is not DistributionKind.ClusteredPatches or spec.rho <= 0:
        return {'check': 'margin', 'skipped': 'needs clustered patches with rho > 0', 'passed': None}
    phis = np.arange(0.05, spec.rho + 1e-12, 0.05)
    if phis.size == 0:
        phis = np.array([spec.rho])
    nPatches = ctx.data.n * ctx.data.k
    rows = []
    for phi in phis:
        mass = marginMass(ctx.data, spec.margin_dir, float(phi))
        bound = spec.mu * phi + 3 * np.sqrt(spec.mu * phi / nPatches)
        rows.append({'phi': float(phi), 'mass': mass, 'bound': float(bound),
                     'passed': bool(mass <= bound)})
    return {'check': 'margin', 'mu': spec.mu, 'gap': spec.bandGap,
            'band_empty_up_to': max(0., spec.bandGap - spec.rho / 2), 'rows': rows,
            'n_patches': nPatches, 'passed': all(r['passed'] for r in rows)}


CHECKS: Dict[str, Callable[[_VerifyContext], Dict[str, Any]]] = {
    'lemma': _checkLemma,
    'critical_point': _checkCriticalPoint,
    'contraction': _checkContraction,
    'clustered': _checkClustered,
    'beta': _checkBeta,
    'duplicate': _checkDuplicate,
    'margin': _checkMargin,
}


def cmdVerify(config: Dict[str, Any], out: Optional[str] = None) -> Dict[str, Any]:
    """Run the configured verification checks.

    A check that raises is logged and recorded with an ``error`` entry; the
    remaining checks still run. ``passed`` is ``None`` for checks that do not
    apply to the configured distribution.

    :param config: a loaded config with a ``verify`` section.
    :param out: if given, the lemma check writes the moment sets of its
        students to ``<out>/moments/``.
    """
    body = config['verify']
    seed = config.get('seed', 0)
    ctx = _VerifyContext(body, seed, out)
    results = []
    for name in body['checks']:
        try:
            result = CHECKS[name](ctx)
        except Exception as e:
            logger.error(f"Check '{name}' crashed: {type(e).__name__}: {e}")
            logger.debug(traceback.format_exc())
            result = {'check': name, 'error': f"{type(e).__name__}: {e}", 'passed': False}
        level = LogLevels.info if result.get('passed') is not False else LogLevels.warn
        log(logger, f"check {name}: passed={result.get('passed')}", level)
        results.append(result)
    applicable = [r['passed'] for r in results if r.get('passed') is not None]
    return {'experiment': 'verify', 'seed': seed, 'distribution': ctx.spec.toDict(),
            'n_samples': ctx.data.n, 'checks': results,
            'passed': bool(all(applicable)) if applicable else None}


def runVerifyExperiment(body: Dict[str, Any], seed: int, out: str) -> Dict[str, Any]:
    report = cmdVerify({'seed': seed, 'verify': body}, out)
    saveJson(report, os.path.join(out, 'verify.json'))
    return report


# Saved results

def _inspectTrajectory(path: str) -> Dict[str, Any]:
    frame = loadTrajectoryFrame(path)
    missing = sorted(set(TRAJECTORY_COLUMNS) - set(frame.columns))
    if missing or frame.empty:
        raise DomainError(f"{path} is not a trajectory file (missing columns: {missing})")
    dist = frame['dist'].to_numpy()
    steps = np.diff(dist)
    return {'type': 'trajectory', 'iterations': len(frame) - 1,
            'initial_dist': float(dist[0]), 'final_dist': float(dist[-1]),
            'decreasing_fraction': float(np.mean(steps < 0)) if steps.size else 1.,
            'max_grad_norm': float(frame['grad_norm'].max())}


def _inspectMoments(path: str) -> Dict[str, Any]:
    m = loadMoments(path)
    report: Dict[str, Any] = {'type': 'moments', 'p': m.p, 'k': m.k, 'n_used': m.n_used,
                              'psd_violations': m.psdViolations()}
    if m.w is not None and m.w_star is not None:
        g = populationGradient(m, m.w, m.w_star)
        report.update(gradient=g, inner_product=float(g @ (m.w - m.w_star)))
        if m.k == 1:
            report['term1'], report['term2'] = lemmaDecomposition(m, m.w, m.w_star)
    return report


def _inspectProfile(path: str) -> Dict[str, Any]:
    prof = loadProfile(path)
    report: Dict[str, Any] = {'type': 'profile', 'kind': prof.kind, 'p': prof.p, 'k': prof.k,
                              'beta_hat': prof.beta_hat, 'l_cross_hat': prof.l_cross_hat,
                              'beta_check': verifyBetaBounds(prof)}
    try:
        report['phi_star'] = phiStar(prof)
    except TheoremPreconditionError as e:
        logger.warning(f"No phi*: {e}")
        report['phi_star'] = None
    return report


def cmdInspect(path: str) -> Dict[str, Any]:
    """Summarize a saved trajectory CSV, smoothness profile or moment set.

    Moment sets that carry their ``w`` and ``w_star`` also get the population
    gradient and, for single-patch moments, the two decomposition terms.

    :raises DomainError: if the file is none of these.
    """
    if str(path).endswith('.csv'):
        report = _inspectTrajectory(path)
    else:
        data = loadJson(path)
        if 'a_pp' in data:
            report = _inspectMoments(path)
        elif 'phis' in data and 'gamma' in data:
            report = _inspectProfile(path)
        else:
            raise DomainError(f"{path} is not a trajectory, profile or moment file")
    report['file'] = str(path)
    return report


RUNNERS: Dict[str, Callable[[Dict[str, Any], int, str], Dict[str, Any]]] = {
    'profile': runProfileExperiment,
    'gd': runGdExperiment,
    'sgd': runSgdExperiment,
    'init': runInitExperiment,
    'interpolate': runInterpolateExperiment,
    'verify': runVerifyExperiment,
}


def runExperiment(config: Dict[str, Any]) -> Dict[str, Any]:
    """Run the experiment of a loaded config and write its outputs."""
    name, body = experimentSection(config)
    out = config['out']
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, 'config.json'), 'w') as f:
        f.write(configToJson(config) + '\n')
    logger.info(f"Running '{name}' with seed {config['seed']}, writing to {out}.")
    return RUNNERS[name](body, config['seed'], out)


def cmdRun(configPath: str, seed: Optional[int] = None, out: Optional[str] = None) -> int:
    """Load a config file, run its experiment and report an exit status.

    :param seed: overrides the config's seed.
    :param out: overrides the config's output folder.
    :returns: 0 on success, 1 on any failure (config errors included).
    """
    try:
        config = loadConfig(configPath)
    except ConfigError as e:
        logger.error(str(e))
        return 1
    if seed is not None:
        config['seed'] = seed
    if out is not None:
        config['out'] = out
    try:
        runExperiment(config)
    except Exception as e:
        logger.error(f"{type(e).__name__}: {e}")
        logger.debug(traceback.format_exc())
        return 1
    return 0

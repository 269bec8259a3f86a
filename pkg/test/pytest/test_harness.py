import json

import numpy as np
import pandas as pd
import pytest  # type: ignore[import-not-found]

from relulab import experiments
from relulab.apps import main
from relulab.base import DomainError
from relulab.config import configToJson, parseConfig
from relulab.distributions import DistributionKind, DistributionSpec, sample, saveDataset
from relulab.experiments import (INTERPOLATION_COLUMNS, cmdInspect, cmdInterpolate, cmdRun,
                                 cmdVerify)
from relulab.initialization import INIT_COLUMNS
from relulab.optimize import TRAJECTORY_COLUMNS
from relulab.serialize import loadJson, loadProfile
from relulab.smoothness import PROFILE_COLUMNS

GD_CONFIG = {
    'seed': 3,
    'gd': {
        'distribution': {'kind': 'gaussian', 'p': 4},
        'schedule': {'kind': 'constant', 'eta': 1.0},
        'n_mc': 2000,
        'max_iters': 50,
        'check_contraction': False,
    },
}


def writeConfig(folder, config):
    path = folder / 'config.json'
    path.write_text(json.dumps(config, indent=2))
    return str(path)


def test_cmdInterpolate(gaussian_data, e1):
    w = np.array([0.9, 0.2, 0., 0.])
    curve = cmdInterpolate(w, e1(4), gaussian_data, 6)
    assert list(curve.columns) == INTERPOLATION_COLUMNS
    assert np.allclose(curve['alpha'], np.linspace(0, 1, 6))
    assert curve['loss'].iloc[0] == 0.
    assert np.all(np.diff(curve['loss']) >= 0)
    assert (cmdInterpolate(e1(4), e1(4), gaussian_data, 3)['loss'] == 0.).all()
    with pytest.raises(DomainError):
        cmdInterpolate(w, e1(4), gaussian_data, 1)


def test_cmdRun_gd(tmp_path):
    out = tmp_path / 'out'
    config = dict(GD_CONFIG, out=str(out))
    assert cmdRun(writeConfig(tmp_path, config)) == 0

    frame = pd.read_csv(out / 'trajectory.csv')
    assert list(frame.columns) == TRAJECTORY_COLUMNS
    meta = loadJson(str(out / 'trajectory.json'))
    assert meta['iterations'] == len(frame) - 1
    summary = loadJson(str(out / 'gd_summary.json'))
    assert summary['total'] == 1
    assert summary['runs'][0]['trajectory'] == 'trajectory.csv'

    # the resolved config is written next to the results and parses back to itself
    resolved = parseConfig((out / 'config.json').read_text())
    assert parseConfig(configToJson(resolved)) == resolved
    assert resolved['gd']['n_mc'] == 2000


def test_cmdRun_deterministic(tmp_path):
    outputs = []
    for name in ['a', 'b']:
        folder = tmp_path / name
        folder.mkdir()
        config = dict(GD_CONFIG, out=str(folder / 'out'))
        config['gd'] = dict(GD_CONFIG['gd'], seeds=2)
        assert cmdRun(writeConfig(folder, config)) == 0
        outputs.append(folder / 'out')
    for name in ['trajectory_000.csv', 'trajectory_001.csv']:
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()
    assert (outputs[0] / 'trajectory_000.csv').read_bytes() != \
        (outputs[0] / 'trajectory_001.csv').read_bytes()


def test_cmdRun_failures(tmp_path, caplog):
    assert cmdRun(writeConfig(tmp_path, {'seed': 1})) == 1
    assert 'missing experiment section' in caplog.text

    bad = tmp_path / 'broken.json'
    bad.write_text('{"gd": {')
    assert cmdRun(str(bad)) == 1

    # a run that fails after the config was accepted
    config = dict(GD_CONFIG, out=str(tmp_path / 'zero'))
    config['gd'] = dict(GD_CONFIG['gd'], init={'vector': [0., 0., 0., 0.]})
    assert cmdRun(writeConfig(tmp_path, config)) == 1
    assert 'UndefinedGradientError' in caplog.text


def test_main_gd(tmp_path):
    out = tmp_path / 'cli'
    status = main(['gd', '--p', '3', '--schedule', 'constant', '--eta', '1', '--n-mc', '1000',
                   '--max-iters', '20', '--no-contraction-check', '--seed', '2',
                   '--out', str(out)])
    assert status == 0
    resolved = loadJson(str(out / 'config.json'))
    assert resolved['seed'] == 2
    assert resolved['gd']['distribution']['p'] == 3
    assert resolved['gd']['check_contraction'] is False
    assert (out / 'trajectory.csv').exists()


def test_main_run(tmp_path):
    path = writeConfig(tmp_path, GD_CONFIG)
    out = tmp_path / 'override'
    assert main(['run', path, '--out', str(out), '--seed', '5']) == 0
    assert loadJson(str(out / 'config.json'))['seed'] == 5


def test_main_invalidOption(tmp_path):
    assert main(['interpolate', '--grid-size', '1', '--out', str(tmp_path)]) == 1
    with pytest.raises(SystemExit):
        main(['gd', '--schedule', 'cosine'])


def test_main_init(tmp_path):
    assert main(['init', '--ps', '2', '4', '--alphas', '0.05', '--trials', '300',
                 '--phi-star', '1.51', '--out', str(tmp_path)]) == 0
    frame = pd.read_csv(tmp_path / 'init.csv')
    assert list(frame.columns) == INIT_COLUMNS
    assert list(frame['p']) == [2, 4]
    summary = loadJson(str(tmp_path / 'init.json'))
    assert summary['corollary']['p'] == 8
    assert summary['corollary']['alpha_below_corollary_limit'] is True
    assert summary['corollary']['phi_star_source'] == 'config'
    assert summary['corollary']['alpha'] == pytest.approx(np.cos(1.51))
    for row in summary['rows']:
        assert row['frequency'] <= row['frequency_norm_aware']


def test_main_profile(tmp_path):
    assert main(['profile', '--kind', 'unit_sphere', '--p', '2', '--n-samples', '20000',
                 '--n-w', '2', '--grid-size', '5', '--out', str(tmp_path)]) == 0
    frame = pd.read_csv(tmp_path / 'profile.csv')
    assert list(frame.columns) == PROFILE_COLUMNS
    assert len(frame) == 5
    summary = loadJson(str(tmp_path / 'profile_summary.json'))
    assert summary['beta_check']['kind'] == 'unit_sphere'
    assert summary['phi_star'] is not None
    assert summary['closed_form']['passed'] is True
    assert len(summary['closed_form']['rows']) == 5


def test_interpolate_givenFilter(tmp_path):
    assert main(['interpolate', '--p', '3', '--w-star', '1,0,0', '--w', '1,0.1,0',
                 '--n-samples', '2000', '--grid-size', '5', '--out', str(tmp_path)]) == 0
    frame = pd.read_csv(tmp_path / 'interpolation.csv')
    assert list(frame.columns) == INTERPOLATION_COLUMNS
    assert len(frame) == 5
    assert frame['loss'].iloc[0] == 0.


def test_interpolate_trainedFilter(tmp_path):
    config = parseConfig(json.dumps({
        'seed': 1, 'out': str(tmp_path),
        'interpolate': {'distribution': {'p': 10}, 'n_samples': 5000,
                        'train': {'n_mc': 5000, 'max_iters': 300}},
    }))
    summary = experiments.runExperiment(config)
    assert summary['training']['relative_error'] <= 1e-4
    assert summary['passed']
    assert summary['max_loss'] <= 0.01 * summary['baseline_loss']


def verifyConfig(**body):
    base = {'distribution': {'kind': 'gaussian', 'p': 3}, 'n_samples': 20000, 'n_w': 4,
            'grid_size': 7, 'grid_margin': 0.3, 'lemma_configs': 5, 'gd_max_iters': 60}
    base.update(body)
    return parseConfig(json.dumps({'seed': 2, 'verify': base}))


def test_cmdVerify_gaussian():
    report = cmdVerify(verifyConfig())
    results = {r['check']: r for r in report['checks']}
    assert results['lemma']['passed']
    assert results['lemma']['max_identity_error'] <= 1e-10
    assert results['critical_point']['passed']
    assert results['contraction']['passed']
    assert results['beta_bound']['passed']
    assert results['duplicate']['passed']
    assert results['duplicate']['l_cross_hat'] == 0.
    assert results['clustered']['passed'] is None
    assert results['margin']['passed'] is None
    assert report['passed'] is True


def test_cmdVerify_clustered():
    config = verifyConfig(distribution={'kind': 'clustered', 'p': 3, 'k': 5, 'rho': 0.15,
                                        'mu': 0.05},
                          n_samples=5000, checks=['clustered', 'margin', 'beta'])
    report = cmdVerify(config)
    results = {r['check']: r for r in report['checks']}
    clustered = results['clustered']
    # gamma(phi0) >= gamma_avg(phi0) - 4 (1 - cos rho) and l_cross <= 3 mu, up to 3 sigma
    assert clustered['gamma'] >= \
        clustered['gamma_avg'] - 4 * (1 - np.cos(0.15)) - clustered['gamma_tolerance']
    assert clustered['l_cross_hat'] <= 3 * 0.05 + clustered['l_cross_tolerance']
    assert clustered['gamma_lower_bound'] == pytest.approx(
        clustered['gamma_avg'] - 4 * (1 - np.cos(0.15)) - clustered['gamma_tolerance'])
    assert clustered['passed'] is True
    assert results['margin']['band_empty_up_to'] == pytest.approx(1.5 * 0.15 - 0.075)
    assert results['margin']['passed'] is True
    assert results['beta_bound']['passed'] is None


def test_cmdVerify_crashingCheck(monkeypatch, caplog):
    def boom(ctx):
        raise RuntimeError('no luck')

    monkeypatch.setitem(experiments.CHECKS, 'lemma', boom)
    report = cmdVerify(verifyConfig(checks=['lemma', 'critical_point']))
    first, second = report['checks']
    assert first == {'check': 'lemma', 'error': 'RuntimeError: no luck', 'passed': False}
    assert second['check'] == 'critical_point' and second['passed']
    assert report['passed'] is False
    assert "Check 'lemma' crashed" in caplog.text


def test_verifyRun_writesReport(tmp_path):
    config = verifyConfig(checks=['critical_point'], n_samples=2000)
    config['out'] = str(tmp_path)
    experiments.runExperiment(config)
    report = loadJson(str(tmp_path / 'verify.json'))
    assert report['checks'][0]['check'] == 'critical_point'


def test_verifyRun_writesMoments(tmp_path):
    config = verifyConfig(checks=['lemma'], lemma_configs=2, n_samples=5000)
    config['out'] = str(tmp_path)
    experiments.runExperiment(config)
    lemma = loadJson(str(tmp_path / 'verify.json'))['checks'][0]
    assert lemma['moments_files'] == ['moments/lemma_000.json', 'moments/lemma_001.json']
    assert set(lemma['min_region_patches']) == {'PP', 'PN', 'NN', 'NP'}
    assert all(0 <= c <= 5000 for c in lemma['min_region_patches'].values())

    report = cmdInspect(str(tmp_path / 'moments' / 'lemma_000.json'))
    assert report['type'] == 'moments'
    assert report['k'] == 1 and report['p'] == 3
    assert report['psd_violations'] == {}
    assert report['term1'] >= 0. and report['term2'] >= 0.
    assert report['term1'] + report['term2'] == pytest.approx(report['inner_product'], rel=1e-10)


def sgdConfig(out, **body):
    base = {'distribution': {'kind': 'gaussian', 'p': 3}, 'batch_size': 32, 'n_eval': 256,
            'profile': {'n_samples': 5000, 'n_w': 4, 'grid_size': 12}}
    base.update(body)
    return parseConfig(json.dumps({'seed': 4, 'out': str(out), 'sgd': base}))


def test_sgd_theoryDefaults(tmp_path):
    config = sgdConfig(tmp_path, theory={'eps': 0.2, 'gradient_bound': 1.0})
    summary = experiments.runExperiment(config)
    run = summary['runs'][0]
    theory = run['theory']
    assert theory['gradient_bound'] == 1.0
    assert 0. < theory['eta'] <= 0.5 * theory['gamma_1'] / theory['K'] ** 2
    assert theory['phi_0'] <= theory['phi_1'] <= theory['phi_star']
    assert run['iterations'] <= theory['iterations']
    assert run['converged']
    assert run['relative_error'] <= 2 * 0.2
    assert (tmp_path / 'profile.json').exists()


def test_sgd_theoryMeasuredBound(tmp_path):
    """Without a configured bound, B is measured on minibatches of the run's size."""
    config = sgdConfig(tmp_path, theory={'eps': 0.2, 'n_pilot': 512})
    theory = experiments.runExperiment(config)['runs'][0]['theory']
    assert 0. < theory['gradient_bound'] < 2.


@pytest.mark.slow
def test_sgd_theoryConvergesMostSeeds(tmp_path):
    """Step size and budget from measured constants: at least 18 of 20 runs reach eps."""
    config = sgdConfig(tmp_path, distribution={'kind': 'gaussian', 'p': 10}, seeds=20,
                       theory={'eps': 0.05, 'delta': 0.1, 'safety': 0.5},
                       profile={'n_samples': 20000, 'n_w': 8, 'grid_size': 16})
    summary = experiments.runExperiment(config)
    assert summary['total'] == 20
    assert summary['converged'] >= 18
    for run in summary['runs']:
        assert run['iterations'] <= run['theory']['iterations']


def test_sgd_twoStage(tmp_path):
    out = tmp_path / 'out'
    config = {'seed': 6, 'out': str(out), 'sgd': {
        'distribution': {'kind': 'gaussian', 'p': 3},
        'schedule': {'kind': 'two_stage', 'eta_small': 0.1, 'eta_large': 0.3,
                     'switch_angle': 0.3},
        'batch_size': 64, 'max_iters': 3000, 'stop_tol': 0.02, 'n_eval': 500}}
    assert cmdRun(writeConfig(tmp_path, config)) == 0
    summary = loadJson(str(out / 'sgd_summary.json'))
    assert summary['converged'] == 1

    frame = pd.read_csv(out / 'trajectory.csv')
    etas = frame['eta'].to_numpy()[:-1]
    phis = frame['phi'].to_numpy()[:-1]
    switch = int(np.argmax(phis < 0.3))
    assert switch > 0
    assert np.all(etas[:switch] == 0.1)
    # latched: the large step size stays even if the angle bound grows again
    assert np.all(etas[switch:] == 0.3)


def test_gd_fromFile(tmp_path):
    path = str(tmp_path / 'patches.txt')
    saveDataset(sample(DistributionSpec(DistributionKind.StandardGaussian, 3), 2000, seed=8), path)
    out = tmp_path / 'out'
    config = {'seed': 1, 'out': str(out), 'gd': {
        'distribution': {'kind': 'from_file', 'path': path},
        'schedule': {'kind': 'constant', 'eta': 1.0},
        'check_contraction': False, 'max_iters': 200}}
    assert cmdRun(writeConfig(tmp_path, config)) == 0
    summary = loadJson(str(out / 'gd_summary.json'))
    assert summary['runs'][0]['converged']
    assert summary['runs'][0]['relative_error'] <= 1e-3
    resolved = loadJson(str(out / 'config.json'))
    assert resolved['gd']['distribution']['path'] == path


def test_gd_reusesSavedProfile(tmp_path):
    first = tmp_path / 'first'
    config = dict(GD_CONFIG, out=str(first))
    config['gd'] = dict(GD_CONFIG['gd'], check_contraction=True,
                        distribution={'kind': 'gaussian', 'p': 3},
                        profile={'n_samples': 5000, 'n_w': 4, 'grid_size': 7})
    assert cmdRun(writeConfig(tmp_path, config)) == 0
    saved = str(first / 'profile.json')

    second = tmp_path / 'second'
    config = dict(config, out=str(second))
    config['gd'] = dict(config['gd'], profile={'file': saved})
    assert cmdRun(writeConfig(tmp_path, config)) == 0
    assert loadProfile(str(second / 'profile.json')).toDict() == loadProfile(saved).toDict()
    a = loadJson(str(first / 'gd_summary.json'))
    b = loadJson(str(second / 'gd_summary.json'))
    assert a['beta_hat'] == b['beta_hat']
    assert 'contraction' in b['runs'][0]

    report = cmdInspect(saved)
    assert report['type'] == 'profile'
    assert report['p'] == 3
    assert report['beta_hat'] == a['beta_hat']

    config = dict(config, out=str(tmp_path / 'third'))
    config['gd'] = dict(config['gd'], distribution={'kind': 'gaussian', 'p': 5})
    assert cmdRun(writeConfig(tmp_path, config)) == 1


def test_main_inspect(tmp_path, capsys):
    out = tmp_path / 'run'
    config = dict(GD_CONFIG, out=str(out))
    assert cmdRun(writeConfig(tmp_path, config)) == 0
    capsys.readouterr()

    assert main(['inspect', str(out / 'trajectory.csv')]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report['type'] == 'trajectory'
    frame = pd.read_csv(out / 'trajectory.csv')
    assert report['iterations'] == len(frame) - 1
    assert report['final_dist'] == pytest.approx(frame['dist'].iloc[-1])

    assert main(['inspect', str(out / 'gd_summary.json')]) == 1
    assert main(['inspect', str(out / 'missing.csv')]) == 1


def test_init_corollaryFromProfile(tmp_path):
    config = parseConfig(json.dumps({'seed': 2, 'out': str(tmp_path), 'init': {
        'ps': [2], 'alphas': [0.1], 'trials': 200,
        'corollary': {'profile': {'n_samples': 5000, 'n_w': 4,
                                  'phis': [0.5, 1.0, 1.5, 1.55]}}}}))
    cor = experiments.runExperiment(config)['corollary']
    assert cor['phi_star_source'] == 'profile'
    assert cor['phi_star'] == pytest.approx(1.55)
    assert cor['alpha'] == pytest.approx(np.cos(1.55))
    assert cor['alpha_below_corollary_limit'] is True
    assert cor['passed'] is True
    prof = loadProfile(str(tmp_path / 'corollary_profile.json'))
    assert prof.p == 8

import copy

import numpy as np
import pytest

from dhtsmc.core.data_logging import TRACE_VARIABLES, TraceLogger
from dhtsmc.core.exception import InvalidParamsError
from dhtsmc.core.scenario import Scenario, load_scenario
from dhtsmc.core.simulation import (NoiseConfig, band_limited_noise,
                                    cartesian_errors, compute_metrics,
                                    final_dwell_window, integer_ratio,
                                    run_simulation)

pytestmark = [pytest.mark.test_env("simulation")]


def synthetic_trace(n_ticks=200, dwell_start=150, T=1e-3):
    logger = TraceLogger(2, n_ticks, T, attrs={'final_dwell_start':
                                               dwell_start})
    t = np.arange(n_ticks) * T
    for k in range(n_ticks):
        r = np.array([np.sin(t[k]), 0.5])
        e = np.array([0.01 * np.cos(20 * t[k]), -0.002])
        logger.record(k, r=r, dr=np.zeros(2), q=r + e, dq=np.zeros(2),
                      ddq=np.zeros(2), tau=np.array([1., 2.]), s=e,
                      s_target=e, hhat=np.zeros(2), h=np.zeros(2),
                      d=np.zeros(2))
    return logger.to_dataset()


class TestNoise:
    def test_sample_and_hold(self):
        cfg = NoiseConfig(hold_interval=0.1, amplitude=0.5, seed=3)
        d = band_limited_noise(cfg, 0.35, 2.5e-4, n=6)
        assert d.shape == (1400, 6)
        assert np.all(np.abs(d) <= 0.5)
        for block in range(4):
            rows = d[block * 400:(block + 1) * 400]
            assert np.all(rows == rows[0])
        assert np.any(d[0] != d[400])
        assert np.array_equal(d, band_limited_noise(cfg, 0.35, 2.5e-4, n=6))
        other = NoiseConfig(hold_interval=0.1, amplitude=0.5, seed=4)
        assert not np.array_equal(d, band_limited_noise(other, 0.35, 2.5e-4))

    def test_zero_and_invalid(self):
        cfg = NoiseConfig(hold_interval=0.1, amplitude=0., seed=0)
        assert np.array_equal(band_limited_noise(cfg, 0.1, 2.5e-4),
                              np.zeros((400, 6)))
        with pytest.raises(InvalidParamsError, match='hold_interval'):
            NoiseConfig(hold_interval=0., amplitude=1.)
        with pytest.raises(InvalidParamsError, match='integer multiple'):
            band_limited_noise(NoiseConfig(hold_interval=1e-4), 0.1, 2.5e-4)

    def test_integer_ratio(self):
        assert integer_ratio(1e-3, 2.5e-4, 'T') == 4
        assert integer_ratio(0.1, 1e-3, 'T') == 100
        with pytest.raises(InvalidParamsError, match='integer multiple'):
            integer_ratio(1e-3, 3e-4, 'T')


class TestMetrics:
    def test_joint_metrics(self):
        trace = synthetic_trace()
        m = compute_metrics(trace)
        e = trace['q'].values - trace['r'].values
        assert np.allclose(m.max_error, np.abs(e).max(axis=0))
        assert m.max_error[1] == pytest.approx(0.002)
        assert np.allclose(m.rms_error, np.sqrt((e**2).mean(axis=0)))
        assert np.allclose(m.steady_state_offset,
                           np.abs(e[150:]).mean(axis=0))
        # constant torque does not chatter
        assert np.allclose(m.chattering, 0., atol=1e-9)
        assert np.array_equal(m.max_euler_error, np.zeros(3))
        values = m.to_dict()
        assert values['max_error_2'] == pytest.approx(0.002)
        assert 'max_euler_error_roll' in values

    def test_dwell_window(self):
        trace = synthetic_trace()
        assert final_dwell_window(trace) == slice(150, 200)
        del trace.attrs['final_dwell_start']
        # the reference never rests, fall back to the last 10 %
        assert final_dwell_window(trace) == slice(180, 200)

    def test_empty(self):
        trace = TraceLogger(2, 0, 1e-3).to_dataset()
        with pytest.raises(InvalidParamsError, match='non-empty trace'):
            compute_metrics(trace)

    def test_cartesian(self, lrmate):
        logger = TraceLogger(6, 3, 1e-3)
        q = np.array([0.1, -0.2, 0.3, 0.2, -0.1, 0.4])
        for k in range(3):
            logger.record(k, r=q, q=q + k * 1e-3)
        trace = logger.to_dataset()
        pos_err, eul_err = cartesian_errors(trace, lrmate)
        assert np.allclose(pos_err[0], 0.) and np.allclose(eul_err[0], 0.)
        assert np.linalg.norm(pos_err[2]) > np.linalg.norm(pos_err[1]) > 0
        m = compute_metrics(trace, lrmate)
        assert m.max_position_error == pytest.approx(
            np.linalg.norm(pos_err[2]))


# one geared point mass turning about the gravity axis: no bias and no
# friction, so a held torque gives a constant acceleration within a tick
SPINNER = {
    'length_unit': 'm', 'gravity': [0., 0., -9.81],
    'dh': [[0., 0., 0., 0.]],
    'joints': [{'gear_ratio': 10., 'link_mass': 2., 'motor_inertia': 1e-3,
                'link_coulomb': 0., 'link_viscous': 0., 'motor_coulomb': 0.,
                'motor_viscous': 0., 'com_offset': [0.5, 0., 0.],
                'link_inertia': [[0.] * 3] * 3}]}


def algebra_scenario(model, plant_step, integrator, prediction):
    """Nominal plant without disturbance, integrated as the prediction
    assumes."""
    n = 1 if model is SPINNER else 6
    config = {
        'model': copy.deepcopy(model),
        'uncertainty': {'plant': 'nominal'},
        'trajectory': {'type': 'joint',
                       'joint_points': [[0.] * n, [20.] * n, [0.] * n],
                       'joint_accel_limit': 20., 'joint_dwell': 0.5},
        'controller': {'a1': 10., 'b_base': [300., 100.],
                       'b_slope': [0., 0.],
                       'mode': 'reaching-law-faithful',
                       'prediction': prediction, 'T': 1e-3},
        'noise': {'amplitude': 0.},
        'run': {'plant_step': plant_step, 'integrator': integrator,
                'initial_error': 0.02},
    }
    return Scenario(config, name='algebra')


ALGEBRA_CASES = pytest.mark.parametrize(
    'model, plant_step, integrator, prediction',
    [({'file': 'lrmate200id.yml'}, 1e-3, 'explicit', 'euler'),
     (SPINNER, 2.5e-4, 'semi-implicit', 'hold')],
    ids=['single-rate', 'two-rate'])


class TestClosedLoop:
    @ALGEBRA_CASES
    def test_reaching_law_realised(self, model, plant_step, integrator,
                                   prediction):
        # each s_(k+1) is the target demanded at tick k
        scenario = algebra_scenario(model, plant_step, integrator, prediction)
        assert scenario.controller.hold_substeps == round(1e-3 / plant_step)
        trace = run_simulation(scenario, 'dhtsmc')
        assert trace.sizes['t'] >= 2000
        s = trace['s'].values
        target = trace['s_target'].values
        atol = 1e-10 * np.abs(target).max()
        assert np.allclose(s[1:], target[:-1], rtol=1e-10, atol=atol)
        assert np.abs(target).max() > 1e-3

    @ALGEBRA_CASES
    def test_acceleration_estimate(self, model, plant_step, integrator,
                                   prediction):
        scenario = algebra_scenario(model, plant_step, integrator, prediction)
        trace = run_simulation(scenario, 'dhtsmc')
        T = scenario.controller.T
        q, dq = trace['q'].values, trace['dq'].values
        from_velocity = np.diff(dq, axis=0) / T
        assert np.allclose(trace['ddq'].values[:-1], from_velocity,
                           rtol=1e-12, atol=1e-9)
        # the second difference of q lags by one tick and blends the next
        # velocity difference by the hold factor
        kappa = scenario.controller.hold_factor \
            if integrator == 'semi-implicit' else 0.
        from_position = np.diff(q, 2, axis=0) / T**2
        blend = (1 - kappa) * from_velocity[:-1] + kappa * from_velocity[1:]
        scale = np.abs(from_velocity).max()
        assert scale > 1.
        assert np.allclose(from_position, blend, rtol=1e-6,
                           atol=1e-6 * scale)

    @pytest.mark.parametrize('controller', ['dhtsmc', 'ff-tsmc'])
    def test_tde_lag(self, small_scenario, controller):
        trace = run_simulation(small_scenario, controller)
        hhat, h = trace['hhat'].values, trace['h'].values
        assert np.array_equal(hhat[0], np.zeros(6))
        assert np.array_equal(hhat[1:], h[:-1])
        assert np.all(np.isfinite(trace['tau'].values))

    def test_trace_layout(self, small_scenario):
        trace = run_simulation(small_scenario, 'dhtsmc')
        traj = small_scenario.trajectory
        assert trace.sizes['t'] == len(traj)
        assert list(trace['joint'].values) == [1, 2, 3, 4, 5, 6]
        assert set(TRACE_VARIABLES) <= set(trace.data_vars)
        assert np.array_equal(trace['r'].values, traj.q_ref)
        assert trace.attrs['final_dwell_start'] == \
            traj.final_dwell_slice().start
        assert trace.attrs['controller'] == 'dhtsmc'
        assert trace.attrs['seed'] == 7
        # noise held for 0.1 s
        d = trace['d'].values
        assert np.all(d[:100] == d[0])

    def test_determinism(self, small_config):
        a = run_simulation(Scenario(small_config), 'dhtsmc')
        b = run_simulation(Scenario(small_config), 'dhtsmc')
        for var in TRACE_VARIABLES:
            assert np.array_equal(a[var].values, b[var].values)
        c = run_simulation(Scenario(small_config), 'dhtsmc', seed=8)
        assert not np.array_equal(a['d'].values, c['d'].values)

    def test_rate_contract(self, small_config):
        small_config['run']['plant_step'] = 3e-4
        with pytest.raises(InvalidParamsError, match='integer multiple'):
            run_simulation(Scenario(small_config), 'dhtsmc')

    def test_tracking(self, small_scenario):
        trace = run_simulation(small_scenario, 'dhtsmc')
        m = compute_metrics(trace, small_scenario.nominal)
        assert np.all(m.max_error < np.deg2rad(1.))
        assert np.all(m.steady_state_offset < m.max_error)


class TestReproduction:
    def test_tour_peak_errors(self):
        scenario = load_scenario('sim-paper')
        metrics = {}
        for controller in ('dhtsmc', 'ff-tsmc'):
            trace = run_simulation(scenario, controller)
            metrics[controller] = compute_metrics(trace)
        assert np.all(metrics['dhtsmc'].max_error
                      <= 0.75 * metrics['ff-tsmc'].max_error)
        assert np.all(metrics['dhtsmc'].steady_state_offset
                      < metrics['dhtsmc'].max_error)

    def test_joint_experiment_offsets(self):
        scenario = load_scenario('exp-paper')
        offsets = {}
        for controller in ('dhtsmc', 'ff-tsmc'):
            trace = run_simulation(scenario, controller)
            m = compute_metrics(trace, scenario.nominal)
            offsets[controller] = m.steady_state_offset
            assert np.isfinite(m.max_position_error)
            assert np.all(np.isfinite(m.max_euler_error))
        assert np.all(offsets['dhtsmc'] <= offsets['ff-tsmc'])

import dataclasses

import numpy as np
import pytest

from dhtsmc.core.control import (Controller, SlidingHistory, TdeState,
                                 admissible_alpha, beta_exponent,
                                 commanded_acceleration,
                                 controller_config_from_settings,
                                 convergence_region, dhtsmc_step,
                                 dhtsmc_torque, ff_tsmc_step, gain_bounds,
                                 get_default_controller_settings,
                                 literal_target, lyapunov_candidate,
                                 reaching_step, reaching_target, sig_pow,
                                 sliding_surface, stability_margin)
from dhtsmc.core.dynamics import JointState, dynamics_terms, forward_dynamics
from dhtsmc.core.exception import InvalidParamsError
from dhtsmc.core.planning import TrajectorySample
from dhtsmc.core.scenario import load_scenario

pytestmark = [pytest.mark.test_env("control")]

T = 1e-3


def make_cfg(n=6, **kwargs):
    settings = get_default_controller_settings()
    settings.update({'b_base': [300., 100.], 'b_slope': [0., 0.]})
    settings.update(kwargs)
    return controller_config_from_settings(settings, n)


def sample(q, dq, ddq=None):
    return TrajectorySample(t=0., pose=None, q_ref=np.asarray(q),
                            dq_ref=np.asarray(dq), ddq_ref=ddq)


def hold_integrate(state, x, T, m):
    """m semi-implicit steps of T / m with constant acceleration x."""
    q, dq = state.q.copy(), state.dq.copy()
    h = T / m
    for _ in range(m):
        dq = dq + h * x
        q = q + h * dq
    return q, dq


class TestConfig:
    def test_defaults(self):
        cfg = controller_config_from_settings(
            get_default_controller_settings(), 6, plant_step=2.5e-4)
        assert cfg.n == 6
        assert cfg.order_r == 1
        assert cfg.b_base.shape == (2, 6)
        assert np.allclose(cfg.b_base[0], 4.5e5)
        assert np.allclose(cfg.a2, 0.01)
        assert cfg.hold_substeps == 4
        assert np.array_equal(cfg.alpha_full, [1., 0.5, 0.])
        assert cfg.hold_factor == 0.
        cfg = dataclasses.replace(cfg, prediction='hold')
        assert cfg.hold_factor == pytest.approx(5 / 8)

    def test_yaml_strings(self):
        cfg = make_cfg(b_base=['4.5e5', '2.25e5'], T='1e-3')
        assert cfg.T == 1e-3
        assert np.allclose(cfg.b_base[1], 2.25e5)

    @pytest.mark.parametrize('key, value, match', [
        ('eta', 1., 'invariant violation: eta'),
        ('eta', 0., 'invariant violation: eta'),
        ('a1', -1., 'invariant violation: a1'),
        ('alpha', [1.2], 'strictly descending'),
        ('alpha', [], 'alpha needs order_r entries'),
        ('b_base', [300.], 'expected 2 taps'),
        ('mode', 'fast', 'invariant violation: mode'),
        ('prediction', 'rk4', 'invariant violation: prediction'),
        ('a2', [0.1, 0.2], 'expected a scalar or 6 values'),
    ])
    def test_invalid(self, key, value, match):
        with pytest.raises(InvalidParamsError, match=match):
            make_cfg(**{key: value})

    def test_unknown_key(self):
        settings = get_default_controller_settings()
        settings['gain'] = 1.
        with pytest.raises(InvalidParamsError, match='unknown keys'):
            controller_config_from_settings(settings, 6)

    def test_controller(self, lrmate, pendulum):
        with pytest.raises(NotImplementedError):
            Controller('pid', lrmate, make_cfg())
        with pytest.raises(InvalidParamsError, match='joint counts'):
            Controller('dhtsmc', pendulum, make_cfg())


class TestLawPieces:
    def test_sig_pow(self):
        x = np.array([-4., -1., 0., 0.25, 9.])
        assert np.allclose(sig_pow(x, 0.5), [-2., -1., 0., 0.5, 3.])
        assert np.array_equal(sig_pow(x, 1.), x)

    def test_beta_exponent(self):
        assert beta_exponent(0.) == 0.5
        assert beta_exponent(-1.) == 0.75
        assert beta_exponent(1e9) == pytest.approx(1.)
        b = beta_exponent(np.linspace(-3, 3, 61))
        assert np.all((b >= 0.5) & (b < 1.))

    def test_sliding_surface(self):
        cfg = make_cfg(n=2, a1=[2., 3.], a2=0.5)
        e, de = np.array([0.25, -1.]), np.array([0.1, 0.2])
        s = sliding_surface(cfg, e, de)
        b = (np.abs(e) + 0.5) / (np.abs(e) + 1.)
        expected = cfg.a1 * e + 0.5 * np.sign(e) * np.abs(e)**b + de
        assert np.allclose(s, expected, rtol=1e-15)
        s = sliding_surface(cfg, e, de, beta=np.full(2, 0.75))
        assert s[0] == pytest.approx(0.5 + 0.5 * 0.25**0.75 + 0.1)

    def test_history(self):
        hist = SlidingHistory(2, 1)
        assert len(hist) == 3
        for s in (1., 2., 3.):
            hist.push([s])
        assert np.array_equal(hist.values[:, 0], [3., 2., 1.])
        hist.push([4.])
        assert hist[0][0] == 4. and hist[2][0] == 2.

    def test_targets(self):
        cfg = make_cfg(n=1, a1=[5.], b_base=[100., 50.], eta=0.6)
        hist = SlidingHistory(1, 1)
        hist.push([0.2])
        hist.push([0.5])
        ddq = np.zeros(1)
        # b_0 T = 0.1, b_1 T = 0.05
        assert literal_target(cfg, hist, ddq)[0] == pytest.approx(
            1e-3 * (0.9 * 0.5 - 0.05 * 0.2), rel=1e-12)
        assert reaching_target(cfg, hist, ddq)[0] == pytest.approx(
            -(0.1 * 0.5**0.6 + 0.05 * 0.2**0.6), rel=1e-12)

    def test_variable_gain(self):
        cfg = make_cfg(n=1, a1=[5.], b_base=[100., 50.],
                       b_slope=[2., 0.])
        hist = SlidingHistory(1, 1)
        hist.push([1.])
        # b_0 = 100 + 2 * 20
        assert reaching_target(cfg, hist, np.array([20.]))[0] == \
            pytest.approx(-0.14)
        # floored at zero for large decelerations
        assert reaching_target(cfg, hist, np.array([-100.]))[0] == 0.


class TestOneStep:
    def test_faithful_euler(self, lrmate):
        # nominal plant, one forward difference step of T
        cfg = make_cfg()
        rng = np.random.default_rng(0)
        for _ in range(50):
            q = rng.uniform(-np.pi, np.pi, 6)
            dq = rng.uniform(-1., 1., 6)
            state = JointState(q, dq)
            ref = sample(q + rng.normal(0., 0.02, 6),
                         dq + rng.normal(0., 0.05, 6))
            ref_next = sample(ref.q_ref + T * ref.dq_ref, ref.dq_ref)
            out = dhtsmc_step(lrmate, cfg, state, ref, ref_next,
                              SlidingHistory(1, 6), TdeState())
            assert np.array_equal(out.hhat, np.zeros(6))
            ddq = forward_dynamics(lrmate, state, out.tau)
            s_next = sliding_surface(cfg, q + T * dq - ref_next.q_ref,
                                     dq + T * ddq - ref_next.dq_ref)
            assert np.allclose(s_next, out.s_target, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize('mode', ['reaching-law-faithful',
                                      'paper-literal'])
    def test_hold_prediction(self, mode):
        cfg = make_cfg(prediction='hold', hold_substeps=4, mode=mode)
        rng = np.random.default_rng(1)
        for _ in range(50):
            state = JointState(rng.uniform(-1., 1., 6), rng.uniform(-1., 1., 6))
            ref_next = sample(state.q + rng.normal(0., 0.05, 6),
                              state.dq + rng.normal(0., 0.1, 6))
            target = rng.uniform(-1., 1., 6)
            x = commanded_acceleration(cfg, state, ref_next, target,
                                       e_k=rng.normal(0., 0.05, 6))
            q1, dq1 = hold_integrate(state, x, T, 4)
            s1 = sliding_surface(cfg, q1 - ref_next.q_ref,
                                 dq1 - ref_next.dq_ref)
            assert np.allclose(s1, target, rtol=1e-10, atol=1e-12)

    def test_literal_torque_one_joint(self, pendulum):
        cfg = make_cfg(n=1, a1=[5.], a2=0.01, eta=0.6, b_base=[100., 50.],
                       mode='paper-literal')
        hist, tde = SlidingHistory(1, 1), TdeState()
        refs = [sample([0.1], [0.2]), sample([0.1002], [0.21]),
                sample([0.1004], [0.22])]
        s0 = dhtsmc_step(pendulum, cfg, JointState([0.12], [0.1]), refs[0],
                         refs[1], hist, tde).s
        tau0 = tde.prev_tau.copy()

        state = JointState([0.1201], [0.15])
        tau = dhtsmc_torque(pendulum, cfg, state, (refs[1], refs[2]), hist,
                            tde)

        acc = (0.15 - 0.1) / T
        prev = dynamics_terms(pendulum, [0.12], [0.1])
        hhat = tau0 - prev.M @ [acc] - prev.bias - prev.friction
        assert np.allclose(tde.prev_estimate, hhat, rtol=1e-12)

        e = state.q - refs[1].q_ref
        s1 = sliding_surface(cfg, e, state.dq - refs[1].dq_ref)
        c = state.q + T * state.dq - refs[2].q_ref
        w = state.dq - refs[2].dq_ref
        target = T * (0.9 * s1 - 0.05 * s0)
        x = (target - 5. * c - 0.01 * sig_pow(c, beta_exponent(e)) - w) / T
        terms = dynamics_terms(pendulum, state.q, state.dq)
        expected = terms.M @ x + terms.bias + terms.friction + hhat
        assert np.allclose(tau, expected, rtol=1e-12)

    def test_ff_tsmc_first_tick(self, lrmate):
        cfg = make_cfg(eta=0.6)
        rng = np.random.default_rng(2)
        q, dq = rng.uniform(-1., 1., 6), rng.uniform(-1., 1., 6)
        ref = sample(q + 0.01, dq - 0.02, ddq=rng.uniform(-2., 2., 6))
        out = ff_tsmc_step(lrmate, cfg, JointState(q, dq), ref, TdeState())

        e = q - ref.q_ref
        s = cfg.a1 * e + cfg.a2 * sig_pow(e, 0.75) + dq - ref.dq_ref
        assert np.allclose(out.s, s, rtol=1e-14)
        ff = dynamics_terms(lrmate, ref.q_ref, ref.dq_ref)
        fb = dynamics_terms(lrmate, q, dq)
        expected = ff.M @ ref.ddq_ref + ff.bias + ff.friction - \
            fb.M @ (0.3 * sig_pow(s, 0.6))
        assert np.allclose(out.tau, expected, rtol=1e-12)


class TestStability:
    def test_gain_bound(self):
        bounds = gain_bounds(make_cfg(alpha=[0.5]))
        assert bounds[0] == pytest.approx(408.248, abs=1e-3)
        assert bounds[1] == pytest.approx(408.248, abs=1e-3)
        bounds = gain_bounds(make_cfg(), alpha=[0.8])
        assert bounds[0] == pytest.approx(np.sqrt(0.2 / 3) / T)

    def test_sim_preset_not_compliant(self):
        scenario = load_scenario('sim-paper')
        report = stability_margin(scenario.controller, scenario.ddq_range,
                                  E_bound=0.01)
        assert not report.compliant
        assert (0, 0) in report.violations
        assert report.admissible_alpha is None
        assert not np.any(report.guaranteed)
        assert np.all(np.isinf(report.gamma))

    def test_compliant(self):
        cfg = make_cfg(b_base=[100., 50.])
        report = stability_margin(cfg, (-500., 500.), E_bound=0.1)
        assert report.compliant
        assert report.violations == []
        assert np.all(report.guaranteed)
        assert np.allclose(report.gamma, 0.0425 / 0.47, rtol=1e-12)

    def test_variable_gain_range(self):
        # the slope makes the gain exceed the bound at large accelerations
        cfg = make_cfg(b_base=[100., 50.], b_slope=[1., 0.])
        assert not stability_margin(cfg, (-500., 500.)).compliant
        assert stability_margin(cfg, (-50., 50.)).compliant

    def test_admissible_alpha(self):
        cfg = make_cfg(b_base=[100., 50.])
        alpha = admissible_alpha(cfg, (-500., 500.))
        assert np.allclose(alpha, [0.48875])
        cfg = make_cfg(b_base=[350., 300.], alpha=[0.9])
        assert not stability_margin(cfg, (0., 0.)).compliant
        alpha = admissible_alpha(cfg, (0., 0.))
        cfg = dataclasses.replace(cfg, alpha=alpha)
        assert stability_margin(cfg, (0., 0.)).compliant

    def test_convergence_region_not_guaranteed(self):
        cfg = make_cfg(b_base=[500., 50.])
        gamma, guaranteed = convergence_region(cfg, 0.01, (0., 0.))
        assert not np.any(guaranteed)
        assert np.all(np.isinf(gamma))

    def test_lyapunov_decrease(self):
        rng = np.random.default_rng(0)
        violations = 0
        for _ in range(10000):
            r = int(rng.integers(0, 4))
            alpha = np.sort(rng.uniform(0.05, 0.95, r))[::-1]
            alpha_full = np.concatenate([[1.], alpha, [0.]])
            gaps = alpha_full[:-1] - alpha_full[1:]
            # compliant gains: b_j T below sqrt(gap_j / (r + 2))
            bT = rng.uniform(0.05, 0.95, r + 1) * np.sqrt(gaps / (r + 2))
            eta = rng.uniform(0.05, 0.95)
            E_bound = rng.uniform(0., 0.1)
            E = rng.uniform(-E_bound, E_bound)
            # every s_(k-m)^2 above (r + 2)(E^2 + sum (b_j T)^2) / D_m,
            # which is not below the convergence region ratio
            D = gaps - (r + 2) * bT**2
            ratio = (r + 2) * (E_bound**2 + np.sum(bT**2)) / D
            s2 = ratio * (1. + rng.uniform(0.05, 3., r + 1))
            history = rng.choice([-1., 1.], r + 1) * np.sqrt(s2)

            s_next = reaching_step(bT, eta, history, E)
            new_history = np.concatenate([[s_next], history[:-1]])
            delta = lyapunov_candidate(alpha, new_history) - \
                lyapunov_candidate(alpha, history)
            if not delta < 0:
                violations += 1
        assert violations == 0

    def test_lyapunov_helpers(self):
        assert lyapunov_candidate([0.5], [2., -4.]) == 4. + 0.5 * 16.
        assert reaching_step([0.3, 0.1], 0.5, [4., -1.], E=0.2) == \
            pytest.approx(-0.3 * 2. + 0.1 + 0.2)

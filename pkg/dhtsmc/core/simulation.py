"""Two-rate closed-loop simulation, disturbances and performance metrics."""
# Built ins
import logging
import time
from dataclasses import dataclass

# External libs
import numpy as np

# Locals
from dhtsmc.core.arithmetics import RMSE, high_pass_peak_to_peak
from dhtsmc.core.control import Controller
from dhtsmc.core.data_logging import TraceLogger
from dhtsmc.core.dynamics import JointState, forward_dynamics
from dhtsmc.core.exception import InvalidParamsError, SingularInertia
from dhtsmc.core.kinematics import forward_kinematics, euler_error

# Module logger
log = logging.getLogger(__name__)

INTEGRATORS = ('semi-implicit', 'explicit')


def get_default_noise_settings(get_doc=False):
    noise_settings = dict()
    noise_settings_doc = dict()

    def add_setting():
        noise_settings[_key] = _default
        noise_settings_doc[_key] = _doc

    _key = "amplitude"
    _doc = "Half-width of the uniform disturbance torque per joint in N m. " \
           "Default: 0.5"
    _default = 0.5
    add_setting()

    _key = "hold_interval"
    _doc = "Time a disturbance draw is held in s, an integer multiple of " \
           "the plant step. Default: 0.1"
    _default = 0.1
    add_setting()

    _key = "seed"
    _doc = "Seed of the disturbance draws, None uses the run seed. " \
           "Default: None"
    _default = None
    add_setting()

    if get_doc:
        return noise_settings, noise_settings_doc

    return noise_settings


def get_default_run_settings(get_doc=False):
    run_settings = dict()
    run_settings_doc = dict()

    def add_setting():
        run_settings[_key] = _default
        run_settings_doc[_key] = _doc

    _key = "plant_step"
    _doc = "Integration step of the plant in s; the controller interval " \
           "must be an integer multiple of it. Default: 2.5e-4"
    _default = 2.5e-4
    add_setting()

    _key = "integrator"
    _doc = "Plant integrator. 'semi-implicit': velocity first, then " \
           "position. 'explicit': the forward difference model " \
           "q+ = q + dt dq, dq+ = dq + dt ddq. Default: 'semi-implicit'"
    _default = 'semi-implicit'
    add_setting()

    _key = "seed"
    _doc = "Seed of all random draws of a run. Default: 0"
    _default = 0
    add_setting()

    _key = "controllers"
    _doc = "Controllers run by 'compare'. Default: ['dhtsmc', 'ff-tsmc']"
    _default = ['dhtsmc', 'ff-tsmc']
    add_setting()

    _key = "initial_error"
    _doc = "Offset of the initial joint angles from the reference in rad, " \
           "scalar or per joint. Default: 0."
    _default = 0.
    add_setting()

    _key = "ddq_range"
    _doc = "Joint acceleration interval (rad/s2) over which the variable " \
           "gains are checked against the stability bound. " \
           "Default: [-500., 500.]"
    _default = [-500., 500.]
    add_setting()

    _key = "E_bound"
    _doc = "Assumed bound of the scaled TDE error per joint, used for the " \
           "convergence region. Default: 0.01"
    _default = 0.01
    add_setting()

    _key = "eta_values"
    _doc = "Reaching law exponents of the 'sweep-eta' command. " \
           "Default: [0.3, 0.45, 0.6, 0.75, 0.9]"
    _default = [0.3, 0.45, 0.6, 0.75, 0.9]
    add_setting()

    if get_doc:
        return run_settings, run_settings_doc

    return run_settings


@dataclass
class NoiseConfig:
    hold_interval: float = 0.1
    amplitude: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.hold_interval > 0:
            raise InvalidParamsError('invariant violation: hold_interval')
        if not self.amplitude >= 0:
            raise InvalidParamsError('invariant violation: amplitude')


@dataclass
class Metrics:
    max_error: np.ndarray
    rms_error: np.ndarray
    steady_state_offset: np.ndarray
    chattering: np.ndarray
    max_position_error: float = 0.
    max_euler_error: np.ndarray = None

    def to_dict(self):
        out = {}
        for name in ('max_error', 'rms_error', 'steady_state_offset',
                     'chattering'):
            for j, val in enumerate(getattr(self, name)):
                out[f'{name}_{j + 1}'] = float(val)
        out['max_position_error'] = float(self.max_position_error)
        for axis, val in zip(('yaw', 'pitch', 'roll'), self.max_euler_error):
            out[f'max_euler_error_{axis}'] = float(val)
        return out


def integer_ratio(a, b, name):
    """a / b as an integer, InvalidParamsError if it is not one."""
    ratio = a / b
    steps = int(round(ratio))
    if steps < 1 or abs(ratio - steps) > 1e-9 * max(1., ratio):
        raise InvalidParamsError(f'{name} must be an integer multiple of the '
                                 f'plant step')
    return steps


def band_limited_noise(cfg, duration, plant_step, n=6):
    """Sample-and-hold uniform disturbance, shape (plant steps, n).

    A fresh U(-amplitude, amplitude) draw per joint starts every
    hold_interval; the draws come from ``default_rng(cfg.seed)``.
    """
    hold = integer_ratio(cfg.hold_interval, plant_step, 'hold_interval')
    n_steps = int(round(duration / plant_step))
    if cfg.amplitude == 0:
        return np.zeros((n_steps, n))
    rng = np.random.default_rng(cfg.seed)
    n_blocks = -(-n_steps // hold)
    draws = rng.uniform(-cfg.amplitude, cfg.amplitude, size=(n_blocks, n))
    return np.repeat(draws, hold, axis=0)[:n_steps]


def integrate_plant(model, state, tau, d, dt, integrator='semi-implicit'):
    ddq = forward_dynamics(model, state, tau, d)
    if integrator == 'semi-implicit':
        dq = state.dq + dt * ddq
        return JointState(q=state.q + dt * dq, dq=dq, ddq=ddq)
    elif integrator == 'explicit':
        return JointState(q=state.q + dt * state.dq, dq=state.dq + dt * ddq,
                          ddq=ddq)
    raise NotImplementedError(f'{integrator}')


def run_simulation(scenario, controller, seed=None):
    """Closed loop of ``scenario.plant`` under one controller.

    The controller runs every T on the sampled state and its torque is held
    over T / plant_step plant steps. Returns the trace as xarray Dataset.
    """
    cfg = scenario.controller
    run = scenario.run
    plant, nominal = scenario.plant, scenario.nominal
    traj = scenario.trajectory
    seed = run['seed'] if seed is None else seed

    plant_step = float(run['plant_step'])
    substeps = integer_ratio(cfg.T, plant_step, 'controller T')
    if abs(traj.T - cfg.T) > 1e-12:
        raise InvalidParamsError('trajectory and controller sampling differ')
    if cfg.prediction == 'hold' and cfg.hold_substeps != substeps:
        log.warning('hold prediction assumes %d plant steps per tick, the '
                    'run uses %d', cfg.hold_substeps, substeps)
    integrator = run['integrator']
    if integrator not in INTEGRATORS:
        raise NotImplementedError(f'{integrator}')

    n, n_ticks = plant.n, len(traj)
    noise_cfg = scenario.noise
    if noise_cfg.seed is None:
        noise_cfg = NoiseConfig(noise_cfg.hold_interval, noise_cfg.amplitude,
                                seed)
    disturbance = band_limited_noise(noise_cfg, n_ticks * cfg.T, plant_step,
                                     n)

    initial_error = np.broadcast_to(np.asarray(run['initial_error'],
                                               dtype=float), (n,))
    state = JointState(q=traj.q_ref[0] + initial_error,
                       dq=traj.dq_ref[0].copy())
    ctrl = Controller(controller, nominal, cfg)
    dwell = traj.final_dwell_slice()
    logger = TraceLogger(n, n_ticks, cfg.T,
                         attrs={'controller': controller, 'seed': seed,
                                'scenario': scenario.name,
                                'plant_step': plant_step,
                                'integrator': integrator, 'mode': cfg.mode,
                                'prediction': cfg.prediction,
                                'eta': cfg.eta,
                                'final_dwell_start': dwell.start})

    log.info('simulating %s on %s: %d ticks of %d plant steps', controller,
             scenario.name, n_ticks, substeps)
    start_time = time.time()
    for k in range(n_ticks):
        ref, ref_next = traj[k], traj[min(k + 1, n_ticks - 1)]
        start = state
        try:
            out = ctrl.step(start, ref, ref_next)
            for i in range(substeps):
                state = integrate_plant(plant, state, out.tau,
                                        disturbance[k * substeps + i],
                                        plant_step, integrator)
        except SingularInertia as e:
            err = SingularInertia(f'tick {k}: {e}')
            err.tick = k
            raise err from e
        if not np.all(np.isfinite(state.q)):
            raise FloatingPointError(f'tick {k}: plant state diverged')

        acc = (state.dq - start.dq) / cfg.T
        terms = ctrl.tde.prev_terms
        h_true = out.tau - terms.M @ acc - terms.bias - terms.friction
        logger.record(k, r=ref.q_ref, dr=ref.dq_ref, q=start.q, dq=start.dq,
                      ddq=acc, tau=out.tau, s=out.s, s_target=out.s_target,
                      hhat=out.hhat, h=h_true,
                      d=disturbance[k * substeps])
    log.info('%s finished in %.1f s', controller, time.time() - start_time)
    return logger.to_dataset()


def final_dwell_window(trace):
    """Ticks of the final dwell; the last 10 % when there is none."""
    n_ticks = trace.sizes['t']
    start = trace.attrs.get('final_dwell_start', None)
    if start is None:
        r = trace['r'].values
        moving = np.nonzero(np.any(r != r[-1], axis=1))[0]
        start = moving[-1] + 1 if len(moving) else 0
    if start >= n_ticks - 1:
        start = int(0.9 * n_ticks)
    return slice(int(start), n_ticks)


def cartesian_errors(trace, model):
    """Position error (m) and ZYX Euler error (rad) of the tool per tick."""
    q, r = trace['q'].values, trace['r'].values
    pos_err = np.empty((len(q), 3))
    eul_err = np.empty((len(q), 3))
    for k in range(len(q)):
        pose, ref = forward_kinematics(model, q[k]), \
            forward_kinematics(model, r[k])
        pos_err[k] = pose.position - ref.position
        eul_err[k] = euler_error(ref.rotation, pose.rotation)
    return pos_err, eul_err


def compute_metrics(trace, model=None):
    """Joint error metrics, and Cartesian ones when ``model`` is given."""
    if trace.sizes.get('t', 0) == 0:
        raise InvalidParamsError('non-empty trace required')
    q, r = trace['q'].values, trace['r'].values
    e = q - r
    dwell = final_dwell_window(trace)
    tau = trace['tau'].values[dwell]
    metrics = Metrics(max_error=np.abs(e).max(axis=0),
                      rms_error=RMSE(q, r),
                      steady_state_offset=np.abs(e[dwell]).mean(axis=0),
                      chattering=high_pass_peak_to_peak(
                          tau, fs=1. / trace.attrs['T']),
                      max_euler_error=np.zeros(3))
    if model is not None:
        pos_err, eul_err = cartesian_errors(trace, model)
        metrics.max_position_error = np.linalg.norm(pos_err, axis=1).max()
        metrics.max_euler_error = np.abs(eul_err).max(axis=0)
    return metrics

"""Discrete-time terminal sliding-mode control with time-delay estimation.

Two laws share the sliding surface and the TDE: the r-order variable-gain
controller (DHTSMC) and the first-order feed-forward baseline (FF-TSMC).
Stability helpers check the gain bound, the convergence region and the
Lyapunov decrease of the reaching recursion.
"""
# Built ins
import logging
from dataclasses import dataclass, field

# External libs
import numpy as np
from scipy.optimize import brentq

# Locals
from dhtsmc.core.dynamics import JointState, dynamics_terms
from dhtsmc.core.exception import InvalidParamsError

# Module logger
log = logging.getLogger(__name__)

CONTROL_MODES = ('reaching-law-faithful', 'paper-literal')
PREDICTIONS = ('euler', 'hold')
CONTROLLERS = ('dhtsmc', 'ff-tsmc')


def get_default_controller_settings(get_doc=False):
    controller_settings = dict()
    controller_settings_doc = dict()

    def add_setting():
        controller_settings[_key] = _default
        controller_settings_doc[_key] = _doc

    _key = "a1"
    _doc = "Linear gain of the sliding surface, scalar or one value per " \
           "joint (1/s). Default: [10, 100, 100, 15, 100, 10]"
    _default = [10., 100., 100., 15., 100., 10.]
    add_setting()

    _key = "a2"
    _doc = "Gain of the terminal (sig power) term of the sliding surface, " \
           "scalar or one value per joint. Default: 0.01"
    _default = 0.01
    add_setting()

    _key = "eta"
    _doc = "Exponent of the reaching law, in (0, 1). Default: 0.6"
    _default = 0.6
    add_setting()

    _key = "order_r"
    _doc = "Order r of the reaching law, it uses s_k ... s_(k-r). Default: 1"
    _default = 1
    add_setting()

    _key = "b_base"
    _doc = "Constant part of the reaching gains b_j (1/s), one entry per " \
           "tap j = 0..r, each a scalar or one value per joint. " \
           "Default: [4.5e5, 2.25e5]"
    _default = [4.5e5, 2.25e5]
    add_setting()

    _key = "b_slope"
    _doc = "Slope of the reaching gains in the joint acceleration, " \
           "b_j = b_base_j + b_slope_j * ddq, floored at 0. " \
           "Default: [0.005, 0.]"
    _default = [0.005, 0.]
    add_setting()

    _key = "T"
    _doc = "Controller sampling interval in s. Default: 1e-3"
    _default = 1e-3
    add_setting()

    _key = "alpha"
    _doc = "Strictly descending Lyapunov weights alpha_1..alpha_r in (0, 1) " \
           "used by the stability checks. Default: [0.5]"
    _default = [0.5]
    add_setting()

    _key = "mode"
    _doc = "Target of the one-step prediction of s_(k+1). " \
           "'reaching-law-faithful': the sig power reaching law. " \
           "'paper-literal': the linear arrangement " \
           "T ((1 - b_0 T) s_k - sum_j b_j T s_(k-j)). " \
           "Default: 'reaching-law-faithful'"
    _default = 'reaching-law-faithful'
    add_setting()

    _key = "prediction"
    _doc = "How q_(k+1) is predicted from the commanded acceleration. " \
           "'euler': q_k + T dq_k (forward difference model). " \
           "'hold': acceleration held over 'hold_substeps' semi-implicit " \
           "plant steps. Default: 'euler'"
    _default = 'euler'
    add_setting()

    _key = "hold_substeps"
    _doc = "Number of plant steps per controller tick assumed by the 'hold' " \
           "prediction. None uses T / run.plant_step. Default: None"
    _default = None
    add_setting()

    _key = "ff_beta"
    _doc = "Fixed exponent of the FF-TSMC sliding surface. Default: 0.75"
    _default = 0.75
    add_setting()

    if get_doc:
        return controller_settings, controller_settings_doc

    return controller_settings


def _per_joint(value, n, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise InvalidParamsError(f'{name}: expected a scalar or {n} values')
    return arr


def _per_tap(value, taps, n, name):
    if np.ndim(value) == 0:
        raise InvalidParamsError(f'{name}: expected one entry per tap')
    if len(value) != taps:
        raise InvalidParamsError(f'{name}: expected {taps} taps (order_r + 1), '
                                 f'got {len(value)}')
    return np.array([_per_joint(v, n, name) for v in value])


@dataclass
class ControllerConfig:
    a1: np.ndarray
    a2: np.ndarray
    eta: float
    order_r: int
    b_base: np.ndarray
    b_slope: np.ndarray
    T: float
    alpha: np.ndarray = field(default_factory=lambda: np.array([]))
    mode: str = 'reaching-law-faithful'
    prediction: str = 'euler'
    hold_substeps: int = 1
    ff_beta: float = 0.75

    def __post_init__(self):
        self.a1 = np.atleast_1d(np.asarray(self.a1, dtype=float))
        n = len(self.a1)
        self.a2 = _per_joint(self.a2, n, 'a2')
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if not (isinstance(self.order_r, (int, np.integer))
                and self.order_r >= 0):
            raise InvalidParamsError('invariant violation: order_r')
        self.b_base = _per_tap(self.b_base, self.order_r + 1, n, 'b_base')
        self.b_slope = _per_tap(self.b_slope, self.order_r + 1, n, 'b_slope')
        self.validate()

    @property
    def n(self):
        return len(self.a1)

    @property
    def alpha_full(self):
        """alpha_0 = 1, alpha_1 .. alpha_r, alpha_(r+1) = 0."""
        return np.concatenate([[1.], self.alpha, [0.]])

    def validate(self):
        if np.any(self.a1 <= 0):
            raise InvalidParamsError('invariant violation: a1')
        if np.any(self.a2 <= 0):
            raise InvalidParamsError('invariant violation: a2')
        if not 0 < self.eta < 1:
            raise InvalidParamsError('invariant violation: eta')
        if not self.T > 0:
            raise InvalidParamsError('invariant violation: T')
        if len(self.alpha) != self.order_r:
            raise InvalidParamsError('invariant violation: alpha needs '
                                     'order_r entries')
        if len(self.alpha) and not (np.all(np.diff(self.alpha_full) < 0)):
            raise InvalidParamsError('invariant violation: alpha must be '
                                     'strictly descending in (0, 1)')
        if not np.all(np.isfinite(self.b_base)) or \
                not np.all(np.isfinite(self.b_slope)):
            raise InvalidParamsError('invariant violation: b_base/b_slope')
        if self.mode not in CONTROL_MODES:
            raise InvalidParamsError(f'invariant violation: mode {self.mode}')
        if self.prediction not in PREDICTIONS:
            raise InvalidParamsError(f'invariant violation: prediction '
                                     f'{self.prediction}')
        if not (int(self.hold_substeps) == self.hold_substeps
                and self.hold_substeps >= 1):
            raise InvalidParamsError('invariant violation: hold_substeps')
        if not 0 < self.ff_beta <= 1:
            raise InvalidParamsError('invariant violation: ff_beta')

    @property
    def hold_factor(self):
        """kappa in q_(k+1) = q_k + T dq_k + kappa T^2 ddq."""
        if self.prediction == 'euler':
            return 0.
        m = int(self.hold_substeps)
        return (m + 1) / (2 * m)


def controller_config_from_settings(settings, n, plant_step=None):
    """ControllerConfig for ``n`` joints from a settings dictionary."""
    settings = {**get_default_controller_settings(), **settings}
    unknown = set(settings) - set(get_default_controller_settings())
    if unknown:
        raise InvalidParamsError(f'controller: unknown keys {sorted(unknown)}')
    hold = settings['hold_substeps']
    if hold is None:
        hold = 1 if plant_step is None else \
            int(round(float(settings['T']) / plant_step))
    try:
        return ControllerConfig(
            a1=_per_joint(settings['a1'], n, 'a1'), a2=settings['a2'],
            eta=float(settings['eta']), order_r=int(settings['order_r']),
            b_base=settings['b_base'], b_slope=settings['b_slope'],
            T=float(settings['T']), alpha=settings['alpha'],
            mode=settings['mode'], prediction=settings['prediction'],
            hold_substeps=int(hold), ff_beta=float(settings['ff_beta']))
    except (TypeError, ValueError) as e:
        raise InvalidParamsError(f'controller: {e}')


class SlidingHistory:
    """s_k, s_(k-1), ... s_(k-r); entries before the first push are zero."""

    def __init__(self, order_r, n):
        self._buffer = np.zeros((order_r + 1, n))

    def push(self, s):
        self._buffer[1:] = self._buffer[:-1]
        self._buffer[0] = s

    def __getitem__(self, j):
        return self._buffer[j]

    def __len__(self):
        return len(self._buffer)

    @property
    def values(self):
        return self._buffer.copy()


@dataclass
class TdeState:
    prev_tau: np.ndarray = None
    # state at k-1, its ddq is the backward difference estimate
    prev_state: JointState = None
    prev_estimate: np.ndarray = None
    # nominal terms at k-1, reused by the next estimate
    prev_terms: object = None
    # the last two acceleration estimates, newest first
    acc_taps: list = field(default_factory=list)

    def smoothed_acceleration(self, n):
        if not self.acc_taps:
            return np.zeros(n)
        return np.mean(self.acc_taps, axis=0)


@dataclass
class ControlOutput:
    tau: np.ndarray
    s: np.ndarray
    s_target: np.ndarray
    hhat: np.ndarray
    ddq_estimate: np.ndarray


@dataclass
class StabilityReport:
    bounds: np.ndarray
    worst_gain: np.ndarray
    compliant: bool
    alpha: np.ndarray
    ddq_range: tuple
    gamma: np.ndarray = None
    E_bound: np.ndarray = None
    guaranteed: np.ndarray = None
    # (tap, joint) pairs exceeding the bound
    violations: list = field(default_factory=list)
    admissible_alpha: np.ndarray = None


def sig_pow(x, p):
    """|x|^p sign(x), element-wise."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** p


def beta_exponent(e):
    e = np.abs(np.asarray(e, dtype=float))
    return (e + 0.5) / (e + 1.)


def sliding_surface(cfg, e, de, beta=None):
    """a1 e + a2 sig^beta(e) + de; beta from the error unless fixed."""
    e = np.asarray(e, dtype=float)
    if beta is None:
        beta = beta_exponent(e)
    return cfg.a1 * e + cfg.a2 * sig_pow(e, beta) + np.asarray(de)


def variable_gain(cfg, tap_j, ddq):
    return np.maximum(cfg.b_base[tap_j] + cfg.b_slope[tap_j] * ddq, 0.)


def reaching_target(cfg, hist, ddq):
    """-sum_j b_j(ddq) T sig_pow(s_(k-j), eta)."""
    out = np.zeros(cfg.n)
    for j in range(cfg.order_r + 1):
        out -= variable_gain(cfg, j, ddq) * cfg.T * sig_pow(hist[j], cfg.eta)
    return out


def literal_target(cfg, hist, ddq):
    """T ((1 - b_0 T) s_k - sum_(j>0) b_j T s_(k-j))."""
    out = np.array(hist[0], dtype=float)
    for j in range(cfg.order_r + 1):
        out -= variable_gain(cfg, j, ddq) * cfg.T * hist[j]
    return cfg.T * out


def estimate_acceleration(tde, dq, T):
    """Backward difference of the measured velocity, stored at k-1."""
    if tde.prev_state is None:
        return None
    acc = (np.asarray(dq) - tde.prev_state.dq) / T
    tde.prev_state.ddq = acc
    tde.acc_taps = [acc] + tde.acc_taps[:1]
    return acc


def tde_estimate(nominal, tde):
    """H at k-1 from the applied torque and the nominal model, 0 at start."""
    if tde.prev_tau is None or tde.prev_state is None:
        return np.zeros(nominal.n)
    prev = tde.prev_state
    terms = tde.prev_terms
    if terms is None:
        terms = dynamics_terms(nominal, prev.q, prev.dq)
    return tde.prev_tau - terms.M @ prev.ddq - terms.bias - terms.friction


def _solve_hold(cfg, c, w, target, beta):
    """Commanded acceleration with q_(k+1) = q_k + T dq_k + kappa T^2 x."""
    T = cfg.T
    kappa = cfg.hold_factor
    x = np.empty(cfg.n)
    for i in range(cfg.n):
        a1, a2 = cfg.a1[i], cfg.a2[i]

        def residual(xi):
            e = c[i] + kappa * T**2 * xi
            b = beta_exponent(e) if beta is None else beta[i]
            return a1 * e + a2 * sig_pow(e, b) + w[i] + T * xi - target[i]

        b0 = beta_exponent(c[i]) if beta is None else beta[i]
        guess = (target[i] - w[i] - a1 * c[i] - a2 * sig_pow(c[i], b0)) / \
            (T + kappa * T**2 * a1)
        step = 1. + 1e-3 * abs(guess)
        lo, hi = guess - step, guess + step
        while residual(lo) > 0:
            lo -= 2 * (hi - lo)
        while residual(hi) < 0:
            hi += 2 * (hi - lo)
        x[i] = brentq(residual, lo, hi, xtol=1e-12, rtol=1e-15)
    return x


def commanded_acceleration(cfg, state, ref_next, target, e_k=None):
    """Joint acceleration whose one-step prediction gives s_(k+1) = target."""
    T = cfg.T
    c = state.q + T * state.dq - ref_next.q_ref
    w = state.dq - ref_next.dq_ref
    if cfg.prediction == 'euler':
        # the literal law raises the predicted error to beta of e_k
        if cfg.mode == 'paper-literal' and e_k is not None:
            beta = beta_exponent(e_k)
        else:
            beta = beta_exponent(c)
        return (target - cfg.a1 * c - cfg.a2 * sig_pow(c, beta) - w) / T
    return _solve_hold(cfg, c, w, target, None)


def _update_tde(tde, state, tau, hhat, terms):
    tde.prev_tau = np.array(tau, dtype=float)
    tde.prev_state = state.copy()
    tde.prev_estimate = hhat
    tde.prev_terms = terms


def dhtsmc_step(nominal, cfg, state_k, ref, ref_next, hist, tde):
    """One DHTSMC tick; updates ``hist`` and ``tde``."""
    estimate_acceleration(tde, state_k.dq, cfg.T)
    hhat = tde_estimate(nominal, tde)
    ddq = tde.smoothed_acceleration(cfg.n)

    e = state_k.q - ref.q_ref
    s = sliding_surface(cfg, e, state_k.dq - ref.dq_ref)
    hist.push(s)
    if cfg.mode == 'reaching-law-faithful':
        target = reaching_target(cfg, hist, ddq)
    else:
        target = literal_target(cfg, hist, ddq)

    terms = dynamics_terms(nominal, state_k.q, state_k.dq)
    x = commanded_acceleration(cfg, state_k, ref_next, target, e_k=e)
    tau = terms.M @ x + terms.bias + terms.friction + hhat
    _update_tde(tde, state_k, tau, hhat, terms)
    return ControlOutput(tau=tau, s=s, s_target=target, hhat=hhat,
                         ddq_estimate=ddq)


def dhtsmc_torque(nominal, cfg, state_k, ref_pair, hist, tde):
    """Torque of the r-order variable-gain controller at tick k."""
    ref, ref_next = ref_pair
    return dhtsmc_step(nominal, cfg, state_k, ref, ref_next, hist, tde).tau


def ff_tsmc_step(nominal, cfg, state_k, ref, tde):
    """One FF-TSMC tick: reference inverse dynamics plus sig power feedback."""
    estimate_acceleration(tde, state_k.dq, cfg.T)
    hhat = tde_estimate(nominal, tde)
    ddq = tde.smoothed_acceleration(cfg.n)

    e = state_k.q - ref.q_ref
    beta = np.full(cfg.n, cfg.ff_beta)
    s = sliding_surface(cfg, e, state_k.dq - ref.dq_ref, beta=beta)
    ddq_ref = ref.ddq_ref if ref.ddq_ref is not None else np.zeros(cfg.n)

    ff = dynamics_terms(nominal, ref.q_ref, ref.dq_ref)
    terms = dynamics_terms(nominal, state_k.q, state_k.dq)
    feedback = variable_gain(cfg, 0, ddq) * cfg.T * sig_pow(s, cfg.eta)
    tau = (ff.M @ ddq_ref + ff.bias + ff.friction - terms.M @ feedback
           + hhat)
    _update_tde(tde, state_k, tau, hhat, terms)
    return ControlOutput(tau=tau, s=s, s_target=-feedback, hhat=hhat,
                         ddq_estimate=ddq)


def ff_tsmc_torque(nominal, cfg, state_k, ref, tde):
    return ff_tsmc_step(nominal, cfg, state_k, ref, tde).tau


class Controller:
    """Owns the sliding history and TDE state of one control law."""

    def __init__(self, name, nominal, cfg):
        if name not in CONTROLLERS:
            raise NotImplementedError(f'{name}')
        if cfg.n != nominal.n:
            raise InvalidParamsError('controller and model joint counts '
                                     'differ')
        self.name = name
        self.nominal = nominal
        self.cfg = cfg
        self.hist = SlidingHistory(cfg.order_r, cfg.n)
        self.tde = TdeState()

    def step(self, state_k, ref, ref_next):
        if self.name == 'dhtsmc':
            return dhtsmc_step(self.nominal, self.cfg, state_k, ref, ref_next,
                               self.hist, self.tde)
        return ff_tsmc_step(self.nominal, self.cfg, state_k, ref, self.tde)


def worst_case_gains(cfg, ddq_range):
    """Largest b_j over the acceleration range, shape (r + 1, n)."""
    lo, hi = ddq_range
    return np.array([np.maximum(variable_gain(cfg, j, np.full(cfg.n, lo)),
                                variable_gain(cfg, j, np.full(cfg.n, hi)))
                     for j in range(cfg.order_r + 1)])


def gain_bounds(cfg, alpha=None):
    """(1/T) sqrt((alpha_j - alpha_(j+1)) / (r + 2)) for j = 0..r."""
    if alpha is None:
        alpha_full = cfg.alpha_full
    else:
        alpha_full = np.concatenate([[1.], alpha, [0.]])
    gaps = alpha_full[:-1] - alpha_full[1:]
    return np.sqrt(gaps / (cfg.order_r + 2)) / cfg.T


def admissible_alpha(cfg, ddq_range):
    """Lyapunov weights under which the worst-case gains comply, or None.

    Such weights exist iff sum_j (r + 2) (b_j T)^2 < 1; the remaining slack
    is spread evenly over the gaps.
    """
    need = (cfg.order_r + 2) * (worst_case_gains(cfg, ddq_range).max(axis=1)
                                * cfg.T) ** 2
    slack = 1. - need.sum()
    if slack <= 0:
        return None
    gaps = need + slack / (cfg.order_r + 1)
    return 1. - np.cumsum(gaps)[:-1]


def convergence_region(cfg, E_bound, ddq_range):
    """Per joint bound gamma on max_m s_(k-m)^2 of the attracting region.

    Joints with a non-positive denominator get gamma = inf and are marked
    not guaranteed. Returns (gamma, guaranteed).
    """
    E = np.broadcast_to(np.asarray(E_bound, dtype=float), (cfg.n,))
    r = cfg.order_r
    bt = worst_case_gains(cfg, ddq_range) * cfg.T
    numerator = (r + 2) * E**2 + (bt**2).sum(axis=0)
    alpha_full = cfg.alpha_full
    gaps = (alpha_full[:-1] - alpha_full[1:])[:, None]
    denominator = gaps - (r + 2) * bt**2
    ok = denominator > 1e-12 * gaps
    guaranteed = np.all(ok, axis=0)
    with np.errstate(divide='ignore'):
        ratios = np.where(ok, numerator / np.where(ok, denominator, 1.),
                          np.inf)
    gamma = ratios.max(axis=0)
    return gamma, guaranteed


def stability_margin(cfg, ddq_range, E_bound=None):
    bounds = gain_bounds(cfg)
    worst = worst_case_gains(cfg, ddq_range)
    exceed = worst > bounds[:, None]
    report = StabilityReport(bounds=bounds, worst_gain=worst,
                             compliant=not np.any(exceed),
                             alpha=cfg.alpha.copy(),
                             ddq_range=tuple(ddq_range),
                             violations=[tuple(v) for v in
                                         np.argwhere(exceed).tolist()],
                             admissible_alpha=admissible_alpha(cfg,
                                                               ddq_range))
    if E_bound is not None:
        report.E_bound = np.broadcast_to(np.asarray(E_bound, dtype=float),
                                         (cfg.n,)).copy()
        report.gamma, report.guaranteed = convergence_region(cfg, E_bound,
                                                             ddq_range)
    if report.compliant:
        log.info('gains comply with the bound for alpha %s', cfg.alpha)
    else:
        log.warning('%d (tap, joint) gains exceed the bound for alpha %s',
                    len(report.violations), cfg.alpha)
    return report


def reaching_step(bT, eta, history, E=0.):
    """Scalar reaching recursion s_(k+1) = -sum_j b_j T sig(s_(k-j)) + E."""
    return -np.sum(np.asarray(bT) * sig_pow(history, eta)) + E


def lyapunov_candidate(alpha, history):
    """U = s_k^2 + sum_j alpha_j s_(k-j)^2 for history s_k .. s_(k-r)."""
    weights = np.concatenate([[1.], np.asarray(alpha, dtype=float)])
    return float(np.sum(weights * np.asarray(history)**2))

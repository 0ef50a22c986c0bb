"""Manipulator parameterisation: D-H table, joint physics and gravity.

Lengths are metres and angles radians internally. Model files are YAML with
lengths in millimetres unless ``length_unit: m`` is given.
"""
# Built ins
import logging
import math
import re
import os
from dataclasses import dataclass, field, replace

# External libs
import numpy as np
import yaml

# Locals
from dhtsmc.core.exception import InvalidParamsError

# Module logger
log = logging.getLogger(__name__)

FORMAT_VERSION = 1

DEFAULT_MODEL_FILE = os.path.join(os.path.dirname(os.path.dirname(__file__)),
                                  'data', 'lrmate200id.yml')

# fixed draw order of perturb_model, per joint
PERTURBABLE_PARAMETERS = ('gear_ratio', 'link_mass', 'motor_inertia',
                          'link_coulomb', 'link_viscous', 'motor_coulomb',
                          'motor_viscous', 'com_offset', 'link_inertia')

_SCALAR_JOINT_FIELDS = ('gear_ratio', 'link_mass', 'motor_inertia',
                        'link_coulomb', 'link_viscous', 'motor_coulomb',
                        'motor_viscous')

_MODEL_KEYS = {'format_version', 'name', 'length_unit', 'gravity', 'dh',
               'joints', 'joint_limits'}

_PI_EXPRESSION = re.compile(r'^([+-]?)(\d+(?:\.\d*)?)?\s*\*?\s*pi'
                            r'(?:\s*/\s*(\d+(?:\.\d*)?))?$')


def _read_only(x, shape=None):
    x = np.array(x, dtype=float)
    if shape is not None and x.shape != shape:
        raise ValueError(f'expected shape {shape}, got {x.shape}')
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class DHRow:
    """Modified (Craig) Denavit-Hartenberg row of one joint."""
    alpha_prev: float
    a_prev: float
    d: float
    theta_offset: float = 0.


@dataclass(frozen=True, eq=False)
class JointPhysicalParams:
    gear_ratio: float
    link_mass: float
    motor_inertia: float
    link_coulomb: float
    link_viscous: float
    motor_coulomb: float
    motor_viscous: float
    # centre of mass in the link frame (m)
    com_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # inertia tensor about the centre of mass in link frame axes (kg m^2)
    link_inertia: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        object.__setattr__(self, 'com_offset',
                           _read_only(self.com_offset, (3,)))
        object.__setattr__(self, 'link_inertia',
                           _read_only(self.link_inertia, (3, 3)))


@dataclass(frozen=True, eq=False)
class ManipulatorModel:
    dh: tuple
    joints: tuple
    gravity: np.ndarray = field(
        default_factory=lambda: np.array([0., 0., -9.81]))
    # optional (n, 2) array of lower and upper joint limits in rad
    joint_limits: np.ndarray = None
    name: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'dh', tuple(self.dh))
        object.__setattr__(self, 'joints', tuple(self.joints))
        object.__setattr__(self, 'gravity', _read_only(self.gravity, (3,)))
        if self.joint_limits is not None:
            object.__setattr__(self, 'joint_limits',
                               _read_only(self.joint_limits,
                                          (len(self.dh), 2)))

    @property
    def n(self):
        return len(self.dh)

    @property
    def gear_ratios(self):
        return np.array([j.gear_ratio for j in self.joints])

    @property
    def reflected_motor_inertia(self):
        """R^2 J_motor per joint, added to the diagonal of M."""
        return np.array([j.gear_ratio**2 * j.motor_inertia
                         for j in self.joints])


@dataclass(frozen=True)
class UncertaintySpec:
    """Relative perturbation bounds per parameter name, in [0, 1)."""
    bounds: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for key, val in self.bounds.items():
            if key not in PERTURBABLE_PARAMETERS:
                raise InvalidParamsError(f'unknown uncertainty parameter: '
                                         f'{key}')
            if not 0. <= float(val) < 1.:
                raise InvalidParamsError(f'invariant violation: uncertainty '
                                         f'bound {key} must be in [0, 1)')


def parse_float(value, name):
    """Float from a YAML scalar, also accepting strings like '1e-3'."""
    if isinstance(value, bool):
        raise InvalidParamsError(f'{name}: expected a number, got {value!r}')
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise InvalidParamsError(f'{name}: expected a number, got {value!r}')
    if not np.isfinite(out):
        raise InvalidParamsError(f'invariant violation: {name} not finite')
    return out


def parse_angle(value, name):
    """Angle in rad; strings like '-pi/2' or '3*pi/4' are understood."""
    if isinstance(value, str):
        match = _PI_EXPRESSION.match(value.strip().lower())
        if match:
            sign, factor, divisor = match.groups()
            out = math.pi * float(factor or 1.) / float(divisor or 1.)
            return -out if sign == '-' else out
    return parse_float(value, name)


def default_com_and_inertia(dh, i, mass):
    """Uniform rod from the link origin towards the next frame origin."""
    if i + 1 < len(dh):
        nxt = dh[i + 1]
        vec = np.array([nxt.a_prev,
                        -np.sin(nxt.alpha_prev) * nxt.d,
                        np.cos(nxt.alpha_prev) * nxt.d])
    else:
        vec = np.zeros(3)
    length = np.linalg.norm(vec)
    if length == 0:
        return np.zeros(3), np.zeros((3, 3))
    u = vec / length
    inertia = mass * length**2 / 12 * (np.eye(3) - np.outer(u, u))
    return 0.5 * vec, inertia


def check_model(model):
    """Raise InvalidParamsError on the first violated model invariant."""
    if model.n == 0 or model.n != len(model.joints):
        raise InvalidParamsError('invariant violation: dh and joints must '
                                 'have the same non-zero length')
    for row in model.dh:
        for name in ('alpha_prev', 'a_prev', 'd', 'theta_offset'):
            if not np.isfinite(getattr(row, name)):
                raise InvalidParamsError(f'invariant violation: {name}')
        for name in ('alpha_prev', 'theta_offset'):
            val = getattr(row, name)
            if not -np.pi < val <= np.pi:
                raise InvalidParamsError(f'invariant violation: {name}')
    for jnt in model.joints:
        if not jnt.gear_ratio > 0:
            raise InvalidParamsError('invariant violation: gear_ratio')
        for name in _SCALAR_JOINT_FIELDS[1:]:
            val = getattr(jnt, name)
            if not (np.isfinite(val) and val >= 0):
                raise InvalidParamsError(f'invariant violation: {name}')
        if not np.all(np.isfinite(jnt.com_offset)):
            raise InvalidParamsError('invariant violation: com_offset')
        inertia = jnt.link_inertia
        scale = max(1., np.abs(inertia).max())
        if not np.allclose(inertia, inertia.T, rtol=0, atol=1e-12 * scale):
            raise InvalidParamsError('invariant violation: link_inertia '
                                     'not symmetric')
        if np.linalg.eigvalsh(inertia).min() < -1e-12 * scale:
            raise InvalidParamsError('invariant violation: link_inertia '
                                     'not positive semi-definite')
    if model.joint_limits is not None:
        if np.any(model.joint_limits[:, 0] >= model.joint_limits[:, 1]):
            raise InvalidParamsError('invariant violation: joint_limits')
    return model


def _require_dict(value, name):
    if not isinstance(value, dict):
        raise InvalidParamsError(f'{name}: expected a mapping')
    return value


def model_from_dict(config):
    """Build a checked ManipulatorModel from an already parsed mapping."""
    config = _require_dict(config, 'model')
    unknown = set(config) - _MODEL_KEYS
    if unknown:
        raise InvalidParamsError(f'model: unknown keys {sorted(unknown)}')
    version = config.get('format_version', FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise InvalidParamsError(f'format_version: unsupported {version}')

    unit = config.get('length_unit', 'mm')
    if unit == 'mm':
        to_m = 1e-3
    elif unit == 'm':
        to_m = 1.
    else:
        raise InvalidParamsError(f'length_unit: {unit}')

    dh_rows = config.get('dh')
    joint_items = config.get('joints')
    if not isinstance(dh_rows, list) or not isinstance(joint_items, list):
        raise InvalidParamsError('dh/joints: expected lists')

    dh = []
    for i, row in enumerate(dh_rows):
        if not isinstance(row, (list, tuple)) or len(row) not in (3, 4):
            raise InvalidParamsError(f'dh[{i}]: expected [alpha_prev, '
                                     f'a_prev, d(, theta_offset)]')
        alpha = parse_angle(row[0], 'alpha_prev')
        offset = parse_angle(row[3], 'theta_offset') if len(row) == 4 else 0.
        dh.append(DHRow(alpha_prev=alpha if alpha != -np.pi else np.pi,
                        a_prev=parse_float(row[1], 'a_prev') * to_m,
                        d=parse_float(row[2], 'd') * to_m,
                        theta_offset=offset if offset != -np.pi else np.pi))

    joints = []
    for i, item in enumerate(joint_items):
        item = _require_dict(item, f'joints[{i}]')
        unknown = set(item) - set(_SCALAR_JOINT_FIELDS) - \
            {'com_offset', 'link_inertia'}
        if unknown:
            raise InvalidParamsError(f'joints[{i}]: unknown keys '
                                     f'{sorted(unknown)}')
        kwargs = {}
        for name in _SCALAR_JOINT_FIELDS:
            if name not in item:
                raise InvalidParamsError(f'joints[{i}]: missing {name}')
            kwargs[name] = parse_float(item[name], name)
        if kwargs['link_mass'] < 0:
            raise InvalidParamsError('invariant violation: link_mass')
        com, inertia = default_com_and_inertia(dh, i, kwargs['link_mass'])
        if 'com_offset' in item:
            if not isinstance(item['com_offset'], (list, tuple)):
                raise InvalidParamsError('com_offset: expected [x, y, z]')
            com = np.array([parse_float(c, 'com_offset')
                            for c in item['com_offset']]) * to_m
        if 'link_inertia' in item:
            try:
                inertia = np.array([[parse_float(c, 'link_inertia')
                                     for c in r] for r in item['link_inertia']])
            except (TypeError, ValueError):
                raise InvalidParamsError('link_inertia: expected 3x3 rows')
        try:
            joints.append(JointPhysicalParams(com_offset=com,
                                              link_inertia=inertia,
                                              **kwargs))
        except ValueError as e:
            raise InvalidParamsError(f'joints[{i}]: {e}')

    gravity = config.get('gravity', [0., 0., -9.81])
    if not isinstance(gravity, list) or len(gravity) != 3:
        raise InvalidParamsError('gravity: expected [gx, gy, gz]')
    gravity = [parse_float(g, 'gravity') for g in gravity]

    limits = config.get('joint_limits', None)
    if limits is not None:
        if not isinstance(limits, list) or \
                not all(isinstance(lim, list) and len(lim) == 2
                        for lim in limits):
            raise InvalidParamsError('joint_limits: expected [lower, upper] '
                                     'per joint')
        limits = [[parse_angle(v, 'joint_limits') for v in lim]
                  for lim in limits]

    try:
        model = ManipulatorModel(dh=dh, joints=joints, gravity=gravity,
                                 joint_limits=limits,
                                 name=str(config.get('name', '')))
    except ValueError as e:
        raise InvalidParamsError(f'invariant violation: {e}')
    return check_model(model)


def load_model(config_text):
    """Parse a YAML model description into a ManipulatorModel."""
    try:
        config = yaml.safe_load(config_text)
    except yaml.YAMLError as e:
        raise InvalidParamsError(f'model file could not be parsed: {e}')
    model = model_from_dict(config)
    log.debug('loaded model %s with %d joints', model.name, model.n)
    return model


def default_model_text():
    with open(DEFAULT_MODEL_FILE, encoding='utf-8') as f:
        return f.read()


def default_model():
    """The FANUC LR Mate 200iD model shipped with the package."""
    return load_model(default_model_text())


def serialize_model(model):
    """YAML text which load_model turns back into an identical model."""
    config = {'format_version': FORMAT_VERSION,
              'name': model.name,
              'length_unit': 'm',
              'gravity': [float(g) for g in model.gravity],
              'dh': [[float(r.alpha_prev), float(r.a_prev), float(r.d),
                      float(r.theta_offset)] for r in model.dh],
              'joints': []}
    for jnt in model.joints:
        item = {name: float(getattr(jnt, name))
                for name in _SCALAR_JOINT_FIELDS}
        item['com_offset'] = [float(c) for c in jnt.com_offset]
        item['link_inertia'] = [[float(c) for c in r]
                                for r in jnt.link_inertia]
        config['joints'].append(item)
    if model.joint_limits is not None:
        config['joint_limits'] = model.joint_limits.tolist()
    return yaml.safe_dump(config, sort_keys=False)


def perturb_model(model, spec):
    """Copy of ``model`` with each bounded parameter scaled by (1 + delta).

    delta ~ U(-bound, bound) is drawn per joint in the order of
    PERTURBABLE_PARAMETERS from ``numpy.random.default_rng(spec.seed)``,
    also for unbounded parameters, so the draws of one parameter do not
    depend on which others are perturbed.
    """
    rng = np.random.default_rng(spec.seed)
    joints = []
    for jnt in model.joints:
        changes = {}
        for name in PERTURBABLE_PARAMETERS:
            bound = float(spec.bounds.get(name, 0.))
            delta = rng.uniform(-1., 1.) * bound
            if bound == 0:
                continue
            factor = max(1. + np.clip(delta, -bound, bound), 1e-12)
            changes[name] = getattr(jnt, name) * factor
        if 'link_inertia' in changes:
            inertia = changes['link_inertia']
            changes['link_inertia'] = 0.5 * (inertia + inertia.T)
        joints.append(replace(jnt, **changes))
    return check_model(replace(model, joints=tuple(joints)))


def get_default_uncertainty_settings(get_doc=False):
    uncertainty_settings = dict()
    uncertainty_settings_doc = dict()

    def add_setting():
        uncertainty_settings[_key] = _default
        uncertainty_settings_doc[_key] = _doc

    _key = "plant"
    _doc = "Which model the plant integrates. 'perturbed': the nominal " \
           "model perturbed by 'bounds'. 'nominal': the controller's model " \
           "itself. Default: 'perturbed'"
    _default = 'perturbed'
    add_setting()

    _key = "bounds"
    _doc = "Relative perturbation bound per parameter name (see " \
           "PERTURBABLE_PARAMETERS), each in [0, 1). " \
           "Default: 20 % on masses and link inertias, 30 % on friction."
    _default = {'link_mass': 0.2, 'link_inertia': 0.2, 'motor_inertia': 0.1,
                'link_coulomb': 0.3, 'link_viscous': 0.3,
                'motor_coulomb': 0.3, 'motor_viscous': 0.3}
    add_setting()

    _key = "seed"
    _doc = "Seed of the perturbation draws. Default: 42"
    _default = 42
    add_setting()

    if get_doc:
        return uncertainty_settings, uncertainty_settings_doc

    return uncertainty_settings

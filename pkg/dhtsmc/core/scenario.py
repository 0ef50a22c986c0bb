"""Scenario files: model, uncertainty, trajectory, controller, noise, run.

A scenario is a YAML mapping with those sections on top of a
``format_version``. Each section is merged over its documented defaults;
unknown keys are an error.
"""
# Built ins
import copy
import logging
import os
from functools import cached_property

# External libs
import numpy as np
import yaml

# Locals
from dhtsmc.core.control import (CONTROLLERS, get_default_controller_settings,
                                 controller_config_from_settings)
from dhtsmc.core.exception import InvalidParamsError
from dhtsmc.core.model import (FORMAT_VERSION, UncertaintySpec,
                               default_model_text, get_default_uncertainty_settings,
                               load_model, model_from_dict, parse_angle,
                               parse_float, perturb_model)
from dhtsmc.core.planning import (Waypoint, get_default_trajectory_settings,
                                  plan_joint_moves, plan_tour)
from dhtsmc.core.simulation import (INTEGRATORS, NoiseConfig,
                                    get_default_noise_settings,
                                    get_default_run_settings)

# Module logger
log = logging.getLogger(__name__)

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)),
                            'scenarios')

SECTIONS = {'controller': get_default_controller_settings,
            'noise': get_default_noise_settings,
            'run': get_default_run_settings,
            'trajectory': get_default_trajectory_settings,
            'uncertainty': get_default_uncertainty_settings}

PLANTS = ('perturbed', 'nominal')
TRAJECTORY_TYPES = ('cartesian', 'joint')


def preset_names():
    return sorted(os.path.splitext(f)[0] for f in os.listdir(SCENARIO_DIR)
                  if f.endswith('.yml'))


def resolve_scenario_path(path_or_preset):
    """File path of a scenario given by path or preset name."""
    if os.path.isfile(path_or_preset):
        return path_or_preset
    name = os.path.basename(path_or_preset)
    name = os.path.splitext(name)[0]
    candidate = os.path.join(SCENARIO_DIR, name + '.yml')
    if os.path.isfile(candidate):
        return candidate
    raise FileNotFoundError(f'scenario not found: {path_or_preset}')


def _merge_section(name, user):
    defaults = SECTIONS[name]()
    if user is None:
        return defaults
    if not isinstance(user, dict):
        raise InvalidParamsError(f'{name}: expected a mapping')
    unknown = set(user) - set(defaults)
    if unknown:
        raise InvalidParamsError(f'{name}: unknown keys {sorted(unknown)}')
    out = copy.deepcopy(defaults)
    out.update(user)
    return out


def _parse_waypoints(items):
    waypoints = []
    for i, item in enumerate(items):
        try:
            waypoints.append(Waypoint(
                position=[parse_float(p, 'position') for p in item['position']],
                euler=[parse_angle(a, 'euler') for a in item['euler']],
                accel_limit_to_here=parse_float(item.get('accel_limit', 10.),
                                                'accel_limit'),
                dwell_after=parse_float(item.get('dwell', 0.), 'dwell')))
        except (KeyError, TypeError) as e:
            raise InvalidParamsError(f'trajectory.waypoints[{i}]: {e}')
    return waypoints


class Scenario(object):
    """Parsed scenario; the plant and the reference are built on demand."""

    def __init__(self, config, name=''):
        if not isinstance(config, dict):
            raise InvalidParamsError('scenario: expected a mapping')
        version = config.get('format_version', FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise InvalidParamsError(f'format_version: unsupported {version}')
        unknown = set(config) - set(SECTIONS) - {'model', 'format_version',
                                                 'name'}
        if unknown:
            raise InvalidParamsError(f'scenario: unknown sections '
                                     f'{sorted(unknown)}')
        self.name = config.get('name', name)
        self.settings = {key: _merge_section(key, config.get(key))
                         for key in SECTIONS}
        self.nominal = self._load_model(config.get('model'))

        run = self.settings['run']
        run['plant_step'] = parse_float(run['plant_step'], 'plant_step')
        self.run = run
        noise = self.settings['noise']
        self.noise = NoiseConfig(
            hold_interval=parse_float(noise['hold_interval'], 'hold_interval'),
            amplitude=parse_float(noise['amplitude'], 'amplitude'),
            seed=noise['seed'])
        self.controller = controller_config_from_settings(
            self.settings['controller'], self.nominal.n,
            plant_step=run['plant_step'])
        self._check_options()

    def _check_options(self):
        """Unknown option strings are configuration errors, raised early."""
        choices = [('uncertainty', 'plant', PLANTS),
                   ('trajectory', 'type', TRAJECTORY_TYPES),
                   ('run', 'integrator', INTEGRATORS)]
        for section, key, allowed in choices:
            value = self.settings[section][key]
            if value not in allowed:
                raise InvalidParamsError(f'{section}.{key}: {value!r} not in '
                                         f'{list(allowed)}')
        controllers = self.run['controllers']
        if not isinstance(controllers, list) or \
                not set(controllers) <= set(CONTROLLERS):
            raise InvalidParamsError(f'run.controllers: {controllers!r} not '
                                     f'a list out of {list(CONTROLLERS)}')

    def _load_model(self, model_cfg):
        if model_cfg is None:
            return load_model(default_model_text())
        if isinstance(model_cfg, dict) and 'file' in model_cfg:
            path = model_cfg['file']
            if not os.path.isabs(path) and not os.path.isfile(path):
                path = os.path.join(os.path.dirname(SCENARIO_DIR), 'data',
                                    path)
            try:
                with open(path, encoding='utf-8') as f:
                    return load_model(f.read())
            except OSError:
                raise InvalidParamsError(f'model file not found: {path}')
        return model_from_dict(model_cfg)

    @cached_property
    def plant(self):
        unc = self.settings['uncertainty']
        if unc['plant'] == 'nominal':
            return self.nominal
        elif unc['plant'] == 'perturbed':
            spec = UncertaintySpec(bounds=dict(unc['bounds'] or {}),
                                   seed=int(unc['seed']))
            return perturb_model(self.nominal, spec)
        raise NotImplementedError(f"{unc['plant']}")

    @cached_property
    def trajectory(self):
        traj = self.settings['trajectory']
        T = self.controller.T
        jerk_factor = parse_float(traj['jerk_factor'], 'jerk_factor')
        if traj['type'] == 'cartesian':
            q_seed = traj['q_seed']
            if q_seed is not None:
                q_seed = [parse_angle(q, 'q_seed') for q in q_seed]
            return plan_tour(self.nominal, _parse_waypoints(traj['waypoints']),
                             T, q_seed=q_seed, jerk_factor=jerk_factor)
        elif traj['type'] == 'joint':
            points = [np.deg2rad([parse_float(v, 'joint_points') for v in p])
                      for p in traj['joint_points']]
            return plan_joint_moves(
                self.nominal, points,
                parse_float(traj['joint_accel_limit'], 'joint_accel_limit'),
                parse_float(traj['joint_dwell'], 'joint_dwell'), T,
                jerk_factor=jerk_factor)
        raise NotImplementedError(f"{traj['type']}")

    @property
    def ddq_range(self):
        lo, hi = [parse_float(v, 'ddq_range') for v in self.run['ddq_range']]
        return lo, hi


def load_scenario(path_or_preset):
    """Scenario from a YAML file or a preset name like 'sim-paper'."""
    path = resolve_scenario_path(path_or_preset)
    with open(path, encoding='utf-8') as f:
        try:
            config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise InvalidParamsError(f'{path} could not be parsed: {e}')
    name = os.path.splitext(os.path.basename(path))[0]
    log.info('loading scenario %s from %s', name, path)
    return Scenario(config, name=name)

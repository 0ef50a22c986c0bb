"""Pytest fixtures to be used in other test modules"""
import copy
import dataclasses

import numpy as np
import pytest
import yaml

from dhtsmc.core.control import (controller_config_from_settings,
                                 get_default_controller_settings)
from dhtsmc.core.model import default_model, model_from_dict
from dhtsmc.core.scenario import Scenario


def pytest_configure(config):
    for marker in ["test_env"]:
        config.addinivalue_line("markers", marker)


def pytest_addoption(parser):
    parser.addoption("--run-test-env", metavar="ENVNAME", default="",
                     help="Run only specified test env")


def pytest_collection_modifyitems(config, items):
    run_test_env = config.getoption("--run-test-env")

    test_env_marker = pytest.mark.skip(reason="only test_env=%s tests are run"
                                              % run_test_env)

    for item in items:
        if run_test_env:
            test_env = item.get_closest_marker("test_env")
            if not test_env or test_env.args[0] != run_test_env:
                item.add_marker(test_env_marker)


def _frictionless_joint(mass, com, inertia):
    return {'gear_ratio': 1., 'link_mass': mass, 'motor_inertia': 0.,
            'link_coulomb': 0., 'link_viscous': 0., 'motor_coulomb': 0.,
            'motor_viscous': 0., 'com_offset': com, 'link_inertia': inertia}


@pytest.fixture(scope='session')
def lrmate():
    return default_model()


@pytest.fixture(scope='session')
def pendulum():
    """Point mass 2 kg at 0.5 m on one revolute joint, gravity along -y."""
    return model_from_dict({
        'length_unit': 'm', 'gravity': [0., -9.81, 0.],
        'dh': [[0., 0., 0., 0.]],
        'joints': [_frictionless_joint(2., [0.5, 0., 0.],
                                       np.zeros((3, 3)).tolist())]})


@pytest.fixture(scope='session')
def two_link():
    """Planar arm in the x-y plane, gravity along -y."""
    inertia_1 = np.diag([0.01, 0.02, 0.05]).tolist()
    inertia_2 = np.diag([0.005, 0.01, 0.02]).tolist()
    return model_from_dict({
        'length_unit': 'm', 'gravity': [0., -9.81, 0.],
        'dh': [[0., 0., 0., 0.], [0., 0.6, 0., 0.]],
        'joints': [_frictionless_joint(3., [0.3, 0., 0.], inertia_1),
                   _frictionless_joint(1.5, [0.2, 0., 0.], inertia_2)]})


@pytest.fixture(scope='session')
def free_lrmate(lrmate):
    """The 6-DOF model without friction and gravity."""
    joints = [dataclasses.replace(j, link_coulomb=0., link_viscous=0.,
                                  motor_coulomb=0., motor_viscous=0.)
              for j in lrmate.joints]
    return dataclasses.replace(lrmate, joints=tuple(joints),
                               gravity=np.zeros(3))


@pytest.fixture
def small_gains_cfg():
    """Compliant gains: b_0 T = 0.3 and b_1 T = 0.1 at T = 1 ms."""
    settings = get_default_controller_settings()
    settings.update({'b_base': [300., 100.], 'b_slope': [0., 0.],
                     'mode': 'reaching-law-faithful', 'prediction': 'euler'})
    return controller_config_from_settings(settings, 6)


# A short joint move of all joints, the base of the closed-loop tests
SMALL_SCENARIO = {
    'format_version': 1,
    'name': 'small',
    'model': {'file': 'lrmate200id.yml'},
    'uncertainty': {'plant': 'perturbed', 'seed': 3},
    'trajectory': {'type': 'joint',
                   'joint_points': [[0.] * 6, [5.] * 6, [0.] * 6],
                   'joint_accel_limit': 20., 'joint_dwell': 0.1},
    'controller': {'a1': [1., 20., 13., 2., 15., 3.], 'a2': 0.015,
                   'eta': 0.6, 'order_r': 1, 'b_base': [1.0e+5, 0.25e+5],
                   'b_slope': [0.002, 0.], 'T': 1.0e-3, 'alpha': [0.5],
                   'mode': 'paper-literal', 'prediction': 'hold',
                   'hold_substeps': 4},
    'noise': {'amplitude': 0.5, 'hold_interval': 0.1},
    'run': {'plant_step': 2.5e-4, 'seed': 7},
}


@pytest.fixture
def small_config():
    return copy.deepcopy(SMALL_SCENARIO)


@pytest.fixture
def small_scenario(small_config):
    return Scenario(small_config, name='small')


@pytest.fixture
def small_scenario_file(tmp_path, small_config):
    path = tmp_path / 'small.yml'
    path.write_text(yaml.safe_dump(small_config), encoding='utf-8')
    return str(path)

"""Rigid-body joint-space dynamics with gear-reflected motor terms.

The main evaluator is a recursive Newton-Euler (RNE) sweep over modified
D-H frames, batched over columns: inertia columns come from unit
acceleration inputs, the bias C(q, dq) dq + G from a zero acceleration
column. ``inertia_matrix_crba`` is an independent composite-rigid-body
evaluator in spatial vector algebra for cross checks.
"""
# Built ins
import logging
from dataclasses import dataclass, field

# External libs
import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

# Locals
from dhtsmc.core.exception import SingularInertia
from dhtsmc.core.kinematics import dh_transform

# Module logger
log = logging.getLogger(__name__)

# smoothing velocity of the Coulomb sign (rad/s)
FRICTION_EPSILON = 1e-3


@dataclass
class JointState:
    q: np.ndarray
    dq: np.ndarray
    ddq: np.ndarray = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.dq = np.asarray(self.dq, dtype=float)
        if self.ddq is None:
            self.ddq = np.zeros_like(self.q)
        else:
            self.ddq = np.asarray(self.ddq, dtype=float)

    def copy(self):
        return JointState(self.q.copy(), self.dq.copy(), self.ddq.copy())


@dataclass
class DynamicsTerms:
    M: np.ndarray
    bias: np.ndarray
    friction: np.ndarray = field(default=None)


def _rne(model, q, dq_cols, ddq_cols, base_acc):
    """Joint torques of the rigid links for K columns at once.

    dq_cols, ddq_cols are (n, K), base_acc is (3, K) (minus gravity for
    columns with gravity). Motor inertia and friction are not included.
    """
    n = model.n
    k = dq_cols.shape[1]
    rots, pos = [], []
    for i, row in enumerate(model.dh):
        t = dh_transform(row, q[i])
        rots.append(t[:3, :3])
        pos.append(t[:3, 3])

    w = np.zeros((3, k))
    dw = np.zeros((3, k))
    dv = np.array(base_acc, dtype=float)
    forces, moments = [], []
    for i in range(n):
        rt = rots[i].T
        p = pos[i][:, None]
        dv = rt @ (np.cross(dw, p, axis=0)
                   + np.cross(w, np.cross(w, p, axis=0), axis=0) + dv)
        w_in = rt @ w
        dw = rt @ dw
        dw[0] += w_in[1] * dq_cols[i]
        dw[1] -= w_in[0] * dq_cols[i]
        dw[2] += ddq_cols[i]
        w = w_in
        w[2] += dq_cols[i]

        jnt = model.joints[i]
        c = jnt.com_offset[:, None]
        dvc = (np.cross(dw, c, axis=0)
               + np.cross(w, np.cross(w, c, axis=0), axis=0) + dv)
        inertia = jnt.link_inertia
        forces.append(jnt.link_mass * dvc)
        moments.append(inertia @ dw + np.cross(w, inertia @ w, axis=0))

    tau = np.empty((n, k))
    f = np.zeros((3, k))
    nm = np.zeros((3, k))
    for i in reversed(range(n)):
        if i + 1 < n:
            f_next = rots[i + 1] @ f
            nm = (moments[i] + rots[i + 1] @ nm
                  + np.cross(model.joints[i].com_offset[:, None], forces[i],
                             axis=0)
                  + np.cross(pos[i + 1][:, None], f_next, axis=0))
            f = f_next + forces[i]
        else:
            nm = moments[i] + np.cross(model.joints[i].com_offset[:, None],
                                       forces[i], axis=0)
            f = forces[i]
        tau[i] = nm[2]
    return tau


def friction_torque(model, dq):
    """Smoothed Coulomb plus viscous friction, link and reflected motor side."""
    dq = np.asarray(dq, dtype=float)
    gear = model.gear_ratios
    fc_l = np.array([j.link_coulomb for j in model.joints])
    cv_l = np.array([j.link_viscous for j in model.joints])
    fc_m = np.array([j.motor_coulomb for j in model.joints])
    cv_m = np.array([j.motor_viscous for j in model.joints])
    dq_m = gear * dq
    return (fc_l * np.tanh(dq / FRICTION_EPSILON) + cv_l * dq
            + gear * (fc_m * np.tanh(dq_m / FRICTION_EPSILON) + cv_m * dq_m))


def dynamics_terms(model, q, dq, with_friction=True):
    """M, C dq + G and friction from one batched RNE sweep."""
    n = model.n
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    dq_cols = np.zeros((n, n + 1))
    dq_cols[:, n] = dq
    ddq_cols = np.zeros((n, n + 1))
    ddq_cols[:, :n] = np.eye(n)
    base_acc = np.zeros((3, n + 1))
    base_acc[:, n] = -model.gravity

    tau = _rne(model, q, dq_cols, ddq_cols, base_acc)
    mass = tau[:, :n]
    mass = 0.5 * (mass + mass.T) + np.diag(model.reflected_motor_inertia)
    friction = friction_torque(model, dq) if with_friction else None
    return DynamicsTerms(M=mass, bias=tau[:, n], friction=friction)


def inertia_matrix(model, q):
    n = model.n
    tau = _rne(model, np.asarray(q, dtype=float), np.zeros((n, n)),
               np.eye(n), np.zeros((3, n)))
    return 0.5 * (tau + tau.T) + np.diag(model.reflected_motor_inertia)


def bias_forces(model, q, dq):
    """C(q, dq) dq + G(q): RNE at zero acceleration, no friction."""
    dq = np.asarray(dq, dtype=float)
    tau = _rne(model, np.asarray(q, dtype=float), dq[:, None],
               np.zeros((model.n, 1)), -model.gravity[:, None])
    return tau[:, 0]


def inverse_dynamics(model, q, dq, ddq):
    """Joint torque producing ``ddq`` without disturbance."""
    ddq = np.asarray(ddq, dtype=float)
    dq = np.asarray(dq, dtype=float)
    tau = _rne(model, np.asarray(q, dtype=float), dq[:, None], ddq[:, None],
               -model.gravity[:, None])[:, 0]
    return (tau + model.reflected_motor_inertia * ddq
            + friction_torque(model, dq))


def kinetic_energy(model, q, dq):
    dq = np.asarray(dq, dtype=float)
    return 0.5 * dq @ inertia_matrix(model, q) @ dq


def solve_inertia(mass, rhs):
    try:
        factor = cho_factor(mass)
    except LinAlgError as e:
        raise SingularInertia(f'Cholesky factorisation of M failed: {e}')
    return cho_solve(factor, rhs)


def forward_dynamics(model, state, tau, d=None):
    """ddq = M^-1 (tau - C dq - G - F - d)."""
    terms = dynamics_terms(model, state.q, state.dq)
    rhs = np.asarray(tau, dtype=float) - terms.bias - terms.friction
    if d is not None:
        rhs = rhs - d
    return solve_inertia(terms.M, rhs)


def step_plant(model, state, tau, d=None, dt=2.5e-4):
    """Semi-implicit Euler step of length ``dt``."""
    if not dt > 0:
        raise ValueError('dt must be positive')
    ddq = forward_dynamics(model, state, tau, d)
    dq = state.dq + dt * ddq
    return JointState(q=state.q + dt * dq, dq=dq, ddq=ddq)


def _skew(v):
    return np.array([[0., -v[2], v[1]],
                     [v[2], 0., -v[0]],
                     [-v[1], v[0], 0.]])


def _spatial_transform(rotation, position):
    """Plucker transform from the parent frame to the child frame."""
    e = rotation.T
    out = np.zeros((6, 6))
    out[:3, :3] = e
    out[3:, 3:] = e
    out[3:, :3] = -e @ _skew(position)
    return out


def _spatial_inertia(mass, com, inertia):
    c = _skew(com)
    out = np.zeros((6, 6))
    out[:3, :3] = inertia + mass * c @ c.T
    out[:3, 3:] = mass * c
    out[3:, :3] = mass * c.T
    out[3:, 3:] = mass * np.eye(3)
    return out


def inertia_matrix_crba(model, q):
    """Joint-space inertia by the composite-rigid-body algorithm."""
    n = model.n
    q = np.asarray(q, dtype=float)
    axis = np.array([0., 0., 1., 0., 0., 0.])
    xup = []
    composite = []
    for i, row in enumerate(model.dh):
        t = dh_transform(row, q[i])
        xup.append(_spatial_transform(t[:3, :3], t[:3, 3]))
        jnt = model.joints[i]
        composite.append(_spatial_inertia(jnt.link_mass, jnt.com_offset,
                                          jnt.link_inertia))

    for i in reversed(range(1, n)):
        composite[i - 1] = composite[i - 1] + xup[i].T @ composite[i] @ xup[i]

    mass = np.zeros((n, n))
    for i in range(n):
        force = composite[i] @ axis
        mass[i, i] = axis @ force
        for j in reversed(range(i)):
            force = xup[j + 1].T @ force
            mass[i, j] = mass[j, i] = axis @ force
    return mass + np.diag(model.reflected_motor_inertia)

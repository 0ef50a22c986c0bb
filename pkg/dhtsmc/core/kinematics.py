"""Forward and inverse kinematics on modified D-H chains."""
# Built ins
import logging
from dataclasses import dataclass

# External libs
import numpy as np
from scipy.spatial.transform import Rotation

# Locals
from dhtsmc.core.exception import NoConvergence, GimbalLock

# Module logger
log = logging.getLogger(__name__)

GIMBAL_LOCK_TOLERANCE = 1e-9

# wrist offsets tried in turn when inverse_kinematics gets restarts > 0
_RESTART_WRIST_OFFSETS = ((np.pi / 2, 0., -np.pi / 2),
                          (-np.pi / 2, 0., np.pi / 2),
                          (np.pi, 0., np.pi),
                          (0., np.pi / 2, 0.),
                          (0., -np.pi / 2, 0.),
                          (np.pi / 2, np.pi / 2, 0.),
                          (-np.pi / 2, -np.pi / 2, 0.))


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'position',
                           np.asarray(self.position, dtype=float))
        object.__setattr__(self, 'rotation',
                           np.asarray(self.rotation, dtype=float))

    @property
    def matrix(self):
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.position
        return out


@dataclass(frozen=True)
class EulerZYX:
    """R = Rz(yaw) Ry(pitch) Rx(roll)."""
    yaw: float
    pitch: float
    roll: float

    def as_array(self):
        return np.array([self.yaw, self.pitch, self.roll])


def dh_transform(row, q):
    """Rot_x(alpha_prev) Trans_x(a_prev) Rot_z(theta) Trans_z(d)."""
    theta = q + row.theta_offset
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(row.alpha_prev), np.sin(row.alpha_prev)
    return np.array([[ct, -st, 0., row.a_prev],
                     [st * ca, ct * ca, -sa, -sa * row.d],
                     [st * sa, ct * sa, ca, ca * row.d],
                     [0., 0., 0., 1.]])


def link_frames(model, q):
    """Base-frame transforms of all n link frames, shape (n, 4, 4)."""
    q = np.asarray(q, dtype=float)
    frames = np.empty((model.n, 4, 4))
    current = np.eye(4)
    for i, row in enumerate(model.dh):
        current = current @ dh_transform(row, q[i])
        frames[i] = current
    return frames


def forward_kinematics(model, q):
    frame = link_frames(model, q)[-1]
    return Pose(position=frame[:3, 3].copy(), rotation=frame[:3, :3].copy())


def geometric_jacobian(model, q):
    """6 x n Jacobian (linear rows first) of the last frame, base axes."""
    frames = link_frames(model, q)
    tip = frames[-1, :3, 3]
    axes = frames[:, :3, 2]
    origins = frames[:, :3, 3]
    jac = np.empty((6, model.n))
    jac[:3] = np.cross(axes, tip - origins).T
    jac[3:] = axes.T
    return jac


def euler_zyx_to_rotation(euler):
    if isinstance(euler, EulerZYX):
        euler = euler.as_array()
    return Rotation.from_euler('ZYX', np.asarray(euler, dtype=float)).as_matrix()


def rotation_to_euler_zyx(rotation, strict=True):
    """Inverse of euler_zyx_to_rotation on yaw, roll in (-pi, pi].

    At |pitch| within GIMBAL_LOCK_TOLERANCE of pi/2 yaw and roll are not
    separable: with ``strict`` GimbalLock is raised, otherwise the roll = 0
    branch is returned.
    """
    r = np.asarray(rotation, dtype=float)
    pitch = np.arctan2(-r[2, 0], np.hypot(r[0, 0], r[1, 0]))
    if abs(np.pi / 2 - abs(pitch)) < GIMBAL_LOCK_TOLERANCE:
        # roll = 0: yaw from the remaining 2x2 block
        yaw = np.arctan2(-r[0, 1], r[1, 1])
        locked = EulerZYX(yaw=float(yaw), pitch=float(np.sign(pitch) * np.pi / 2),
                          roll=0.)
        if strict:
            raise GimbalLock('pitch at +-pi/2, yaw and roll are coupled',
                             euler=locked)
        return locked
    yaw = np.arctan2(r[1, 0], r[0, 0])
    roll = np.arctan2(r[2, 1], r[2, 2])
    return EulerZYX(yaw=float(yaw), pitch=float(pitch), roll=float(roll))


def orientation_error(rotation_target, rotation):
    """Rotation vector (base frame) taking ``rotation`` to the target."""
    return Rotation.from_matrix(rotation_target @ rotation.T).as_rotvec()


def wrap_angle(angle):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2 * np.pi)


def euler_error(rotation_ref, rotation):
    """Per-axis ZYX difference euler(R) - euler(R_ref), wrapped to (-pi, pi].

    Both sides are decomposed with strict=False, so the result stays finite
    at gimbal lock.
    """
    ref = rotation_to_euler_zyx(rotation_ref, strict=False).as_array()
    out = rotation_to_euler_zyx(rotation, strict=False).as_array()
    return wrap_angle(out - ref)


def pose_residual(target, pose):
    return np.concatenate([target.position - pose.position,
                           orientation_error(target.rotation, pose.rotation)])


def _solve_dls(model, target, q_seed, tol, damping, max_iter, max_step):
    q = np.array(q_seed, dtype=float)
    lam2 = damping**2
    best_q, best_res = q.copy(), np.inf
    for it in range(max_iter + 1):
        err = pose_residual(target, forward_kinematics(model, q))
        res = max(np.linalg.norm(err[:3]), np.linalg.norm(err[3:]))
        if res < best_res:
            best_q, best_res = q.copy(), res
        # converge well below the public tolerance
        if res <= 1e-2 * tol or it == max_iter:
            break
        jac = geometric_jacobian(model, q)
        dq = jac.T @ np.linalg.solve(jac @ jac.T + lam2 * np.eye(6), err)
        step = np.linalg.norm(dq)
        if step > max_step:
            dq *= max_step / step
        q = q + dq
        if model.joint_limits is not None:
            q = np.clip(q, model.joint_limits[:, 0], model.joint_limits[:, 1])
    return best_q, best_res, it


def inverse_kinematics(model, target, q_seed, tol=1e-8, damping=1e-3,
                       max_iter=200, max_step=0.2, restarts=0):
    """Damped least-squares IK from ``q_seed``.

    Position and orientation residuals are both driven below ``tol`` (m and
    rad). With ``restarts`` > 0 the solve is repeated from seeds with fixed
    wrist offsets until one converges. Deterministic for a given seed.
    """
    q_seed = np.asarray(q_seed, dtype=float)
    seeds = [q_seed]
    for offset in _RESTART_WRIST_OFFSETS[:restarts]:
        seed = q_seed.copy()
        seed[-3:] += np.asarray(offset)[-min(3, model.n):]
        seeds.append(seed)

    best_q, best_res = q_seed, np.inf
    for i, seed in enumerate(seeds):
        q, res, it = _solve_dls(model, target, seed, tol, damping, max_iter,
                                max_step)
        if res <= tol:
            if i > 0:
                log.info('inverse kinematics converged after %d restarts', i)
            log.debug('inverse kinematics: residual %.3e after %d iterations',
                      res, it)
            return q
        if res < best_res:
            best_q, best_res = q, res
    raise NoConvergence(f'inverse kinematics did not converge, best residual '
                        f'{best_res:.3e}', residual=best_res, q_best=best_q)

"""Reference trajectories: S-curve timed Cartesian tours and joint moves."""
# Built ins
import logging
from dataclasses import dataclass, field

# External libs
import numpy as np
from scipy.spatial.transform import Rotation, Slerp

# Locals
from dhtsmc.core.exception import InvalidParamsError, NoConvergence
from dhtsmc.core.kinematics import (Pose, EulerZYX, euler_zyx_to_rotation,
                                    forward_kinematics, inverse_kinematics,
                                    orientation_error)

# Module logger
log = logging.getLogger(__name__)

# largest joint step between two samples before it counts as a branch jump
BRANCH_JUMP_THRESHOLD = 0.2


@dataclass
class Waypoint:
    position: np.ndarray
    euler: EulerZYX
    accel_limit_to_here: float = 10.
    dwell_after: float = 0.

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if not isinstance(self.euler, EulerZYX):
            self.euler = EulerZYX(*[float(e) for e in self.euler])
        if not self.accel_limit_to_here > 0:
            raise InvalidParamsError('invariant violation: accel_limit_to_here '
                                     'must be positive')
        if not self.dwell_after >= 0:
            raise InvalidParamsError('invariant violation: dwell_after must '
                                     'not be negative')

    @property
    def pose(self):
        return Pose(position=self.position,
                    rotation=euler_zyx_to_rotation(self.euler))


@dataclass
class TrajectorySample:
    t: float
    pose: Pose
    q_ref: np.ndarray
    dq_ref: np.ndarray
    ddq_ref: np.ndarray = None


@dataclass
class Trajectory:
    """Reference sampled every T, stored as arrays over samples."""
    T: float
    t: np.ndarray
    positions: np.ndarray
    rotations: np.ndarray
    q_ref: np.ndarray
    dq_ref: np.ndarray
    ddq_ref: np.ndarray
    # index of the motion segment of each sample, -1 while dwelling
    segment: np.ndarray
    attrs: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k):
        return TrajectorySample(t=self.t[k],
                                pose=Pose(self.positions[k], self.rotations[k]),
                                q_ref=self.q_ref[k], dq_ref=self.dq_ref[k],
                                ddq_ref=self.ddq_ref[k])

    @property
    def duration(self):
        return self.t[-1] if len(self.t) else 0.

    def final_dwell_slice(self):
        """Trailing samples during which the reference is at rest."""
        moving = np.nonzero(self.segment >= 0)[0]
        start = moving[-1] + 1 if len(moving) else 0
        return slice(start, len(self.t))


def _profile_durations(distance, a_max, j_max):
    tj = a_max / j_max
    ta = (-3 * tj + np.sqrt(tj**2 + 4 * distance / a_max)) / 2
    if ta < 0:
        tj = np.cbrt(distance / (2 * j_max))
        ta = 0.
    return tj, ta


def s_curve_duration(distance, a_max, j_max):
    if distance == 0:
        return 0.
    tj, ta = _profile_durations(distance, a_max, j_max)
    return 4 * tj + 2 * ta


def s_curve_profile(distance, a_max, j_max, T):
    """Jerk-limited rest-to-rest profile without cruise phase.

    Returns arrays (t, pos, vel, acc) sampled every T. The acceleration
    phase is jerk up, constant ``a_max`` (when reached), jerk down; the
    deceleration phase mirrors it. The last sample sits at ``distance`` at
    rest even when the duration is not a multiple of T.
    """
    if not distance >= 0:
        raise InvalidParamsError('distance must not be negative')
    if not (a_max > 0 and j_max > 0 and T > 0):
        raise InvalidParamsError('a_max, j_max and T must be positive')
    if distance == 0:
        z = np.zeros(1)
        return z, z.copy(), z.copy(), z.copy()

    tj, ta = _profile_durations(distance, a_max, j_max)
    jerks = np.array([j_max, 0., -j_max, -j_max, 0., j_max])
    durations = np.array([tj, ta, tj, tj, ta, tj])
    starts = np.concatenate([[0.], np.cumsum(durations)])
    duration = starts[-1]

    # exact states at the segment boundaries
    p0, v0, a0 = np.zeros(6), np.zeros(6), np.zeros(6)
    p, v, a = 0., 0., 0.
    for i, (jk, dt) in enumerate(zip(jerks, durations)):
        p0[i], v0[i], a0[i] = p, v, a
        p = p + v * dt + a * dt**2 / 2 + jk * dt**3 / 6
        v = v + a * dt + jk * dt**2 / 2
        a = a + jk * dt

    n_steps = int(np.ceil(duration / T - 1e-9))
    t = np.arange(n_steps + 1) * T
    tc = np.minimum(t, duration)
    idx = np.clip(np.searchsorted(starts, tc, side='right') - 1, 0, 5)
    tau = tc - starts[idx]
    jk = jerks[idx]
    pos = p0[idx] + v0[idx] * tau + a0[idx] * tau**2 / 2 + jk * tau**3 / 6
    vel = v0[idx] + a0[idx] * tau + jk * tau**2 / 2
    acc = a0[idx] + jk * tau

    pos = np.clip(pos, 0., distance)
    vel = np.maximum(vel, 0.)
    acc = np.clip(acc, -a_max, a_max)
    pos[-1], vel[-1], acc[-1] = distance, 0., 0.
    return t, pos, vel, acc


def _finite_differences(q_ref, T):
    if len(q_ref) < 2:
        zeros = np.zeros_like(q_ref)
        return zeros, zeros.copy()
    dq_ref = np.gradient(q_ref, T, axis=0)
    ddq_ref = np.gradient(dq_ref, T, axis=0)
    return dq_ref, ddq_ref


def _count_branch_jumps(q_ref):
    if len(q_ref) < 2:
        return 0
    steps = np.abs(np.diff(q_ref, axis=0)).max(axis=1)
    jumps = np.nonzero(steps > BRANCH_JUMP_THRESHOLD)[0]
    for k in jumps:
        log.warning('joint step of %.3f rad between samples %d and %d',
                    steps[k], k, k + 1)
    return len(jumps)


def plan_tour(model, waypoints, T, q_seed=None, jerk_factor=100.,
              ik_restarts=7):
    """Cartesian tour through ``waypoints`` starting at the first one.

    Segments are straight lines with the orientation slerped along the arc
    length, timed by an S-curve with the target waypoint's acceleration
    limit and j_max = jerk_factor * a_max. Each waypoint's dwell is held by
    repeating its pose. Joint references come from IK continued from the
    previous sample, velocities and accelerations from central differences.
    """
    if len(waypoints) == 0:
        raise InvalidParamsError('at least one waypoint is required')
    if not T > 0:
        raise InvalidParamsError('T must be positive')

    q_seed = np.zeros(model.n) if q_seed is None else np.asarray(q_seed,
                                                                 dtype=float)
    first = waypoints[0].pose
    try:
        q = inverse_kinematics(model, first, q_seed, restarts=ik_restarts)
    except NoConvergence as e:
        e.segment = 0
        raise

    positions, rotations, qs, segment = [], [], [], []

    def hold(pose, q, count):
        for _ in range(count):
            positions.append(pose.position)
            rotations.append(pose.rotation)
            qs.append(q)
            segment.append(-1)

    hold(first, q, max(int(round(waypoints[0].dwell_after / T)), 1))

    for i in range(1, len(waypoints)):
        start, goal = waypoints[i - 1].pose, waypoints[i].pose
        a_max = waypoints[i].accel_limit_to_here
        delta = goal.position - start.position
        distance = np.linalg.norm(delta)
        angle = np.linalg.norm(orientation_error(goal.rotation,
                                                 start.rotation))
        length = distance if distance > 0 else angle
        if length > 0:
            _, s, _, _ = s_curve_profile(length, a_max, jerk_factor * a_max, T)
            u = s[1:] / length
            slerp = Slerp([0., 1.], Rotation.from_matrix([start.rotation,
                                                          goal.rotation]))
            seg_rot = slerp(u).as_matrix()
            log.info('segment %d: %.4f m in %.3f s (a_max %.1f m/s2)', i,
                     distance, (len(s) - 1) * T, a_max)
            for k in range(len(u)):
                target = Pose(position=start.position + u[k] * delta,
                              rotation=seg_rot[k])
                try:
                    q = inverse_kinematics(model, target, q)
                except NoConvergence as e:
                    e.segment = i
                    log.error('inverse kinematics failed in segment %d', i)
                    raise
                positions.append(target.position)
                rotations.append(target.rotation)
                qs.append(q)
                segment.append(i)
        hold(goal, q, int(round(waypoints[i].dwell_after / T)))

    q_ref = np.array(qs)
    dq_ref, ddq_ref = _finite_differences(q_ref, T)
    traj = Trajectory(T=T, t=np.arange(len(q_ref)) * T,
                      positions=np.array(positions),
                      rotations=np.array(rotations), q_ref=q_ref,
                      dq_ref=dq_ref, ddq_ref=ddq_ref,
                      segment=np.array(segment, dtype=int))
    traj.attrs['branch_jumps'] = _count_branch_jumps(q_ref)
    traj.attrs['kind'] = 'cartesian'
    return traj


def plan_joint_moves(model, q_points, accel_limit, dwell, T, jerk_factor=100.):
    """Joint-space S-curve moves through ``q_points`` (rad).

    All joints move synchronously, scaled to the largest joint distance.
    ``dwell`` is held at every point, including the first and the last.
    """
    q_points = [np.asarray(q, dtype=float) for q in q_points]
    if len(q_points) == 0:
        raise InvalidParamsError('at least one joint point is required')
    if not (accel_limit > 0 and T > 0 and dwell >= 0):
        raise InvalidParamsError('accel_limit and T must be positive, dwell '
                                 'not negative')

    n_dwell = int(round(dwell / T))
    qs = [q_points[0]] * max(n_dwell, 1)
    segment = [-1] * len(qs)
    for i in range(1, len(q_points)):
        delta = q_points[i] - q_points[i - 1]
        length = np.abs(delta).max()
        if length > 0:
            _, s, _, _ = s_curve_profile(length, accel_limit,
                                         jerk_factor * accel_limit, T)
            for u in s[1:] / length:
                qs.append(q_points[i - 1] + u * delta)
                segment.append(i)
        qs.extend([q_points[i]] * n_dwell)
        segment.extend([-1] * n_dwell)

    q_ref = np.array(qs)
    dq_ref, ddq_ref = _finite_differences(q_ref, T)
    poses = [forward_kinematics(model, q) for q in q_ref]
    traj = Trajectory(T=T, t=np.arange(len(q_ref)) * T,
                      positions=np.array([p.position for p in poses]),
                      rotations=np.array([p.rotation for p in poses]),
                      q_ref=q_ref, dq_ref=dq_ref, ddq_ref=ddq_ref,
                      segment=np.array(segment, dtype=int))
    traj.attrs['branch_jumps'] = 0
    traj.attrs['kind'] = 'joint'
    return traj


def get_default_trajectory_settings(get_doc=False):
    trajectory_settings = dict()
    trajectory_settings_doc = dict()

    def add_setting():
        trajectory_settings[_key] = _default
        trajectory_settings_doc[_key] = _doc

    _key = "type"
    _doc = "'cartesian' for a waypoint tour or 'joint' for joint space " \
           "moves. Default: 'cartesian'"
    _default = 'cartesian'
    add_setting()

    _key = "waypoints"
    _doc = "Tour waypoints, each a dictionary with 'position' (m), 'euler' " \
           "(yaw, pitch, roll in rad), 'accel_limit' (m/s2, for the segment " \
           "ending here) and 'dwell' (s, held after arriving). The first " \
           "waypoint is the start. Default: p1 -> p2 -> p3 -> p4 -> p1 with " \
           "50 m/s2 out to p3 and 10 m/s2 back, 0.1 s before every motion."
    _default = [
        {'position': [0.47, 0., 0.395], 'euler': [0., 0., 'pi'],
         'accel_limit': 50., 'dwell': 0.1},
        {'position': [0.2, 0.2, 0.2], 'euler': ['pi/4', 'pi/4', 'pi/2'],
         'accel_limit': 50., 'dwell': 0.1},
        {'position': [0.2, 0.3, 0.3], 'euler': ['pi/2', 'pi/2', 'pi/2'],
         'accel_limit': 50., 'dwell': 0.1},
        {'position': [0.3, 0.1, 0.5], 'euler': ['pi/4', 'pi/4', 'pi/2'],
         'accel_limit': 10., 'dwell': 0.1},
        {'position': [0.47, 0., 0.395], 'euler': [0., 0., 'pi'],
         'accel_limit': 10., 'dwell': 0.3}]
    add_setting()

    _key = "q_seed"
    _doc = "Seed of the inverse kinematics of the first waypoint (rad). " \
           "None starts from zero. Default: None"
    _default = None
    add_setting()

    _key = "jerk_factor"
    _doc = "Jerk limit as multiple of the acceleration limit (1/s). " \
           "Default: 100."
    _default = 100.
    add_setting()

    _key = "joint_points"
    _doc = "Joint space points (deg) visited by a 'joint' trajectory. " \
           "Default: all joints 0 -> 20 -> 0 deg"
    _default = [[0.] * 6, [20.] * 6, [0.] * 6]
    add_setting()

    _key = "joint_accel_limit"
    _doc = "Acceleration limit of 'joint' moves in rad/s2. Default: 20."
    _default = 20.
    add_setting()

    _key = "joint_dwell"
    _doc = "Dwell at every joint point in s. Default: 0.5"
    _default = 0.5
    add_setting()

    if get_doc:
        return trajectory_settings, trajectory_settings_doc

    return trajectory_settings

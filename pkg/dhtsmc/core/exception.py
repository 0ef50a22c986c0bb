# Configuration could not be parsed or violates a model invariant
class InvalidParamsError(Exception):
    pass


# Cholesky factorisation of the inertia matrix failed
class SingularInertia(Exception):
    pass


# Iterative inverse kinematics did not reach the tolerance
class NoConvergence(Exception):
    def __init__(self, message, residual=None, q_best=None, segment=None,
                 tick=None):
        super().__init__(message)
        self.residual = residual
        self.q_best = q_best
        self.segment = segment
        self.tick = tick


# Euler extraction at |pitch| = pi/2, euler holds the roll = 0 branch
class GimbalLock(Exception):
    def __init__(self, message, euler=None):
        super().__init__(message)
        self.euler = euler


# Writing of simulation outputs failed
class OutputError(Exception):
    pass

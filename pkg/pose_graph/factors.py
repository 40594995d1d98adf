"""
Factores del grafo de keyframes.

Cada nodo tiene tres bloques de variables: pose (6: δφ, δp en el cuerpo), velocidad
(3) y sesgo (6: δb_a, δb_g). La retracción es R·Exp(δφ), p + R·δp, v + δv, b + δb.
Los residuos de pose van con la traslación primero; el del IMU en orden (φ, v, p),
igual que la covarianza de la preintegración.
"""
import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from geom.se3 import Pose, left_jacobian_inverse, right_jacobian, skew, so3_exp, so3_log
from imu.preintegration import GRAVITY
from imu.types import ImuBias, NavState
from nvlio.exceptions import PreconditionError

POSE = 'pose'
VELOCITY = 'velocity'
BIAS = 'bias'
BLOCK_SIZE = {POSE: 6, VELOCITY: 3, BIAS: 6}
BLOCK_ORDER = {POSE: 0, VELOCITY: 1, BIAS: 2}


def jr_inverse(phi):
    return left_jacobian_inverse(-np.asarray(phi, dtype=float))


def retract(state, kind, delta):
    if kind == POSE:
        R = state.pose.rotation
        pose = Pose(R @ so3_exp(delta[:3]), state.pose.translation + R @ delta[3:6])
        return NavState(pose, state.velocity, state.bias)
    if kind == VELOCITY:
        return NavState(state.pose, state.velocity + delta, state.bias)
    return NavState(state.pose, state.velocity, ImuBias.from_vector(state.bias.vector() + delta))


def _whitener(covariance):
    covariance = np.asarray(covariance, dtype=float)
    if not np.allclose(covariance, covariance.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(covariance).max())):
        raise PreconditionError('La covarianza del factor no es simétrica')
    try:
        L = cholesky(0.5 * (covariance + covariance.T), lower=True)
    except LinAlgError:
        raise PreconditionError('La covarianza del factor no es definida positiva') from None
    return solve_triangular(L, np.eye(len(L)), lower=True)


class Factor:
    kind = 'factor'

    def __init__(self, keys, covariance):
        self.keys = tuple(keys)
        self.covariance = np.asarray(covariance, dtype=float)
        self.whitener = _whitener(self.covariance)

    @property
    def nodes(self):
        return sorted({node for node, _ in self.keys})

    def residual(self, values):
        return self.linearize(values)[0]

    def linearize(self, values):
        """(residuo, [jacobiano por clave]) sin blanquear."""
        raise NotImplementedError

    def whitened(self, values):
        r, jacobians = self.linearize(values)
        return self.whitener @ r, [self.whitener @ J for J in jacobians]

    def cost(self, values):
        e = self.whitener @ self.residual(values)
        return 0.5 * float(e @ e)

    def __repr__(self):
        return f'{type(self).__name__}({", ".join(str(n) for n in self.nodes)})'


class PriorFactor(Factor):
    kind = 'prior'

    def __init__(self, node, pose, covariance):
        super().__init__([(node, POSE)], covariance)
        self.node = node
        self.pose = pose

    def linearize(self, values):
        R0, p0 = self.pose.rotation, self.pose.translation
        R, p = values[self.node].pose.rotation, values[self.node].pose.translation
        e_r = so3_log(R0.T @ R)
        r = np.concatenate([R0.T @ (p - p0), e_r])
        J = np.zeros((6, 6))
        J[0:3, 3:6] = R0.T @ R
        J[3:6, 0:3] = jr_inverse(e_r)
        return r, [J]


class VelocityPrior(Factor):
    kind = 'velocity-prior'

    def __init__(self, node, velocity, covariance):
        super().__init__([(node, VELOCITY)], covariance)
        self.node = node
        self.velocity = np.asarray(velocity, dtype=float)

    def linearize(self, values):
        return values[self.node].velocity - self.velocity, [np.eye(3)]


class BiasPrior(Factor):
    kind = 'bias-prior'

    def __init__(self, node, bias, covariance):
        super().__init__([(node, BIAS)], covariance)
        self.node = node
        self.bias = bias

    def linearize(self, values):
        return values[self.node].bias.vector() - self.bias.vector(), [np.eye(6)]


class BetweenFactor(Factor):
    """Pose relativa medida T_i⁻¹·T_j (registro entre keyframes o lazo)."""
    kind = 'relative'

    def __init__(self, i, j, measurement, covariance, kind='relative'):
        super().__init__([(i, POSE), (j, POSE)], covariance)
        self.i, self.j = i, j
        self.measurement = measurement
        self.kind = kind

    def linearize(self, values):
        Zr, Zt = self.measurement.rotation, self.measurement.translation
        Ri, pi = values[self.i].pose.rotation, values[self.i].pose.translation
        Rj, pj = values[self.j].pose.rotation, values[self.j].pose.translation
        Rij = Ri.T @ Rj
        tij = Ri.T @ (pj - pi)
        e_r = so3_log(Zr.T @ Rij)
        r = np.concatenate([Zr.T @ (tij - Zt), e_r])
        Jr_inv = jr_inverse(e_r)

        Ji = np.zeros((6, 6))
        Ji[0:3, 0:3] = Zr.T @ skew(tij)
        Ji[0:3, 3:6] = -Zr.T
        Ji[3:6, 0:3] = -Jr_inv @ Rij.T
        Jj = np.zeros((6, 6))
        Jj[0:3, 3:6] = Zr.T @ Rij
        Jj[3:6, 0:3] = Jr_inv
        return r, [Ji, Jj]


class ImuFactor(Factor):
    """Residuo de preintegración entre dos keyframes, con el sesgo del nodo i."""
    kind = 'imu'

    def __init__(self, i, j, preint, gravity=GRAVITY):
        keys = [(i, POSE), (i, VELOCITY), (i, BIAS), (j, POSE), (j, VELOCITY)]
        super().__init__(keys, preint.covariance + 1e-12 * np.eye(9))
        self.i, self.j = i, j
        self.preint = preint
        self.gravity = np.asarray(gravity, dtype=float)

    def linearize(self, values):
        si, sj = values[self.i], values[self.j]
        Ri, pi, vi = si.pose.rotation, si.pose.translation, si.velocity
        Rj, pj, vj = sj.pose.rotation, sj.pose.translation, sj.velocity
        pim = self.preint.corrected(si.bias)
        dt, g = pim.dt, self.gravity
        _, d_bg = self.preint.bias_delta(si.bias)

        E = pim.delta_R.T @ Ri.T @ Rj
        r_R = so3_log(E)
        dv = Ri.T @ (vj - vi - g * dt)
        dp = Ri.T @ (pj - pi - vi * dt - 0.5 * g * dt * dt)
        r = np.concatenate([r_R, dv - pim.delta_v, dp - pim.delta_p])
        Jr_inv = jr_inverse(r_R)

        J_pose_i = np.zeros((9, 6))
        J_pose_i[0:3, 0:3] = -Jr_inv @ Rj.T @ Ri
        J_pose_i[3:6, 0:3] = skew(dv)
        J_pose_i[6:9, 0:3] = skew(dp)
        J_pose_i[6:9, 3:6] = -np.eye(3)

        J_vel_i = np.zeros((9, 3))
        J_vel_i[3:6] = -Ri.T
        J_vel_i[6:9] = -Ri.T * dt

        J_bias_i = np.zeros((9, 6))
        d_R_d_bg = self.preint.d_R_d_bg
        J_bias_i[0:3, 3:6] = -Jr_inv @ E.T @ right_jacobian(d_R_d_bg @ d_bg) @ d_R_d_bg
        J_bias_i[3:6, 0:3] = -self.preint.d_v_d_ba
        J_bias_i[3:6, 3:6] = -self.preint.d_v_d_bg
        J_bias_i[6:9, 0:3] = -self.preint.d_p_d_ba
        J_bias_i[6:9, 3:6] = -self.preint.d_p_d_bg

        J_pose_j = np.zeros((9, 6))
        J_pose_j[0:3, 0:3] = Jr_inv
        J_pose_j[6:9, 3:6] = Ri.T @ Rj

        J_vel_j = np.zeros((9, 3))
        J_vel_j[3:6] = Ri.T
        return r, [J_pose_i, J_vel_i, J_bias_i, J_pose_j, J_vel_j]


class ConstantBiasFactor(Factor):
    """b_j − b_i con covarianza de paseo aleatorio sobre el intervalo."""
    kind = 'constant-bias'

    def __init__(self, i, j, covariance):
        super().__init__([(i, BIAS), (j, BIAS)], covariance)
        self.i, self.j = i, j

    @classmethod
    def random_walk(cls, i, j, dt, accel_walk, gyro_walk):
        sigma2 = np.concatenate([np.full(3, accel_walk ** 2), np.full(3, gyro_walk ** 2)])
        return cls(i, j, np.diag(sigma2 * max(dt, 1e-9)))

    def linearize(self, values):
        r = values[self.j].bias.vector() - values[self.i].bias.vector()
        return r, [-np.eye(6), np.eye(6)]

"""
Odometría LiDAR-inercial por keyframes.

Por barrido: compensación de movimiento, imagen de profundidad y normales,
predicción IMU desde el último keyframe, registro contra el submapa, análisis de
degeneración y, si el movimiento supera la política, un keyframe nuevo con sus
factores relativo, IMU y de sesgo, cierre de lazo y optimización del grafo.

Las nubes de los keyframes quedan en el marco del cuerpo (IMU); la extrínseca
lleva LiDAR → cuerpo.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from degeneracy.analysis import (
    DEFAULT_LAMBDA_THRESHOLD, DEFAULT_ROTATION_SIGMA, DEFAULT_SCALE,
    analyze, measurement_covariance, normal_covariance,
)
from geom.kdtree import KdTree
from geom.se3 import Pose
from imu.deskew import deskew
from imu.preintegration import GRAVITY, estimate_gravity, predict, preintegrate
from imu.types import ImuBias, ImuBuffer, NavState
from loop_closure.closure import LoopCloser, LoopParams
from nvlio.exceptions import InsufficientOverlapError, PreconditionError
from range_image.normals import (
    DEFAULT_CONSENSUS_DISTANCE, DEFAULT_RANGE_JUMP, compute_normals,
)
from range_image.params import ProjectionParams
from range_image.projection import project
from registration.gauss_newton import register
from registration.submap import build_submap
from registration.types import Keyframe, RegistrationParams

from .factors import (
    BetweenFactor, BiasPrior, ConstantBiasFactor, ImuFactor, PriorFactor, VelocityPrior,
)
from .graph import FactorGraph
from .keyframes import KeyframePolicy, should_insert_keyframe
from .optimizer import optimize

logger = logging.getLogger(__name__)

# desvíos del arranque: posición y roll/pitch firmes, yaw libre
PRIOR_POSITION_SIGMA = 1e-6
PRIOR_TILT_SIGMA = 1e-4
PRIOR_YAW_SIGMA = 1.0
PRIOR_VELOCITY_SIGMA = 1e-3
PRIOR_ACCEL_BIAS_SIGMA = 0.05
PRIOR_GYRO_BIAS_SIGMA = 1e-3


def extrinsic_pose(translation=(0.0, 0.0, 0.0), rpy_deg=(0.0, 0.0, 0.0)):
    """LiDAR → cuerpo a partir de traslación y roll/pitch/yaw en grados."""
    rotation = Rotation.from_euler('xyz', list(rpy_deg), degrees=True).as_matrix()
    return Pose(rotation, list(translation))


@dataclass(frozen=True)
class OdometryParams:
    projection: ProjectionParams = field(
        default_factory=lambda: ProjectionParams.from_degrees(45.0, -45.0, 32, 512))
    normal_window: int = 3
    range_jump: float = DEFAULT_RANGE_JUMP
    consensus_distance: float = DEFAULT_CONSENSUS_DISTANCE
    registration: RegistrationParams = field(default_factory=RegistrationParams)
    submap_length: int = 5
    keyframe: KeyframePolicy = field(default_factory=KeyframePolicy)
    loop: LoopParams = field(default_factory=LoopParams)
    loop_closure: bool = True
    lambda_threshold: float = DEFAULT_LAMBDA_THRESHOLD
    covariance_scale: float = DEFAULT_SCALE
    rotation_sigma: float = DEFAULT_ROTATION_SIGMA
    gyro_noise: float = 1.7e-4
    accel_noise: float = 2e-3
    gyro_bias_walk: float = 1e-5
    accel_bias_walk: float = 1e-4
    gravity_init_window: float = 1.0
    extrinsic: Pose = field(default_factory=Pose.identity)
    optimizer_iterations: int = 50
    deterministic: bool = False

    def __post_init__(self):
        if self.submap_length < 1:
            raise PreconditionError('submap_length debe ser al menos 1')

    @classmethod
    def from_config(cls, config, **overrides):
        values = dict(
            projection=ProjectionParams.from_degrees(config.fov_max_deg, config.fov_min_deg,
                                                     config.image_height, config.image_width),
            normal_window=config.normal_window,
            range_jump=config.range_jump,
            consensus_distance=config.consensus_distance,
            registration=RegistrationParams.from_config(config),
            submap_length=config.submap_length,
            keyframe=KeyframePolicy.from_config(config),
            loop=LoopParams.from_config(config),
            lambda_threshold=config.lambda_threshold,
            covariance_scale=config.covariance_scale,
            rotation_sigma=config.rotation_sigma,
            gyro_noise=config.gyro_noise,
            accel_noise=config.accel_noise,
            gyro_bias_walk=config.gyro_bias_walk,
            accel_bias_walk=config.accel_bias_walk,
            gravity_init_window=config.gravity_init_window,
            extrinsic=extrinsic_pose(config.extrinsic_translation, config.extrinsic_rpy_deg),
            optimizer_iterations=config.optimizer_iterations,
            deterministic=config.deterministic,
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class ScanLog:
    t: float
    residual: float = float('nan')
    correspondences: int = 0
    degenerate: bool = False
    lambda_min: float = float('nan')
    keyframe: int = -1
    loops: int = 0
    skipped: bool = False

    def line(self):
        return (f't={self.t:.6f} residual={self.residual:.6f} '
                f'correspondences={self.correspondences} degenerate={int(self.degenerate)} '
                f'lambda_min={self.lambda_min:.6f} keyframe={self.keyframe} '
                f'loop={self.loops} skipped={int(self.skipped)}')


class LidarInertialOdometry:
    """
    Frente de odometría con el grafo de keyframes como estado.

    Uso: initialize(buffer) con el arranque estático, luego process_scan por cada
    barrido en orden y finish() al terminar.
    """

    def __init__(self, params=None):
        self.params = params or OdometryParams()
        self.graph = FactorGraph()
        self.keyframes = []
        self.records = []
        self.loop_events = []
        self.buffer = None
        self.gravity = GRAVITY
        self._initial = None
        self._entries = []
        self._submap = None
        self._closer = None
        if self.params.loop_closure:
            self._closer = LoopCloser(self.params.loop, deterministic=self.params.deterministic)

    # arranque

    def initialize(self, buffer):
        """Gravedad, roll/pitch y sesgo del giróscopo a partir del tramo estático inicial."""
        self.buffer = buffer if isinstance(buffer, ImuBuffer) else ImuBuffer(buffer)
        estimate = estimate_gravity(self.buffer, self.params.gravity_init_window)
        self.gravity = estimate.gravity
        self._initial = NavState(Pose(estimate.rotation, np.zeros(3)), np.zeros(3),
                                 ImuBias(np.zeros(3), estimate.gyro_bias))
        return self._initial

    @property
    def initialized(self):
        return self._initial is not None

    @property
    def state(self):
        """Último estado optimizado (el del keyframe más reciente)."""
        if not self.keyframes:
            return self._initial
        return self.graph.values[self.keyframes[-1].id]

    def _bootstrap(self, cloud, t):
        state = self._initial
        self.graph.add_factor(PriorFactor(0, state.pose, np.diag(
            [PRIOR_POSITION_SIGMA ** 2] * 3
            + [PRIOR_TILT_SIGMA ** 2, PRIOR_TILT_SIGMA ** 2, PRIOR_YAW_SIGMA ** 2])))
        self.graph.values[0] = state
        self.graph.add_factor(VelocityPrior(0, state.velocity,
                                            PRIOR_VELOCITY_SIGMA ** 2 * np.eye(3)))
        self.graph.add_factor(BiasPrior(0, state.bias, np.diag(
            [PRIOR_ACCEL_BIAS_SIGMA ** 2] * 3 + [PRIOR_GYRO_BIAS_SIGMA ** 2] * 3)))
        self.keyframes.append(Keyframe(0, state.pose, cloud, t))
        self._entries.append((t, 0, Pose.identity()))
        record = ScanLog(t, 0.0, len(cloud), keyframe=0)
        self._log(record)
        return record

    # frente

    def _scan_cloud(self, scan, bias):
        p = self.params
        points = deskew(scan.points, scan.times, self.buffer, bias, p.extrinsic.rotation)
        img = project(points, p.projection)
        cloud = compute_normals(img, p.normal_window, p.range_jump, p.consensus_distance)
        return cloud.transformed(p.extrinsic, 'body')

    def _submap_and_tree(self):
        if self._submap is None:
            recent = self.keyframes[-self.params.submap_length:]
            submap = build_submap(recent, self.params.registration.voxel_size,
                                  self.params.registration.coherence)
            self._submap = (submap, KdTree(submap.points))
        return self._submap

    def process_scan(self, scan):
        """Procesa un ScanRecord y devuelve el ScanLog del barrido."""
        if not self.initialized:
            raise PreconditionError('La odometría no está inicializada (falta initialize)')
        t = float(scan.start)
        last = self.keyframes[-1] if self.keyframes else None
        if last is not None and not t > last.timestamp:
            raise PreconditionError(f'Barrido fuera de orden: {t} después de {last.timestamp}')

        anchor = self.state
        cloud = self._scan_cloud(scan, anchor.bias)
        if len(cloud) == 0:
            logger.warning('t=%.6f barrido sin normales válidas, se omite', t)
            return self._skip(t, None)
        if last is None:
            return self._bootstrap(cloud, t)

        preint = preintegrate(self.buffer.window(last.timestamp, t), anchor.bias,
                              self.params.gyro_noise, self.params.accel_noise)
        predicted = predict(anchor, preint, self.gravity)
        init = predicted.pose.inverse() @ last.pose

        submap, tree = self._submap_and_tree()
        try:
            result = register(cloud, submap, init, self.params.registration, tree=tree)
        except InsufficientOverlapError as exc:
            logger.warning('t=%.6f registro omitido (%s); se usa la predicción IMU', t, exc)
            return self._skip(t, predicted.pose)
        if result.stalled:
            logger.warning('t=%.6f registro estancado sin converger; se usa la predicción IMU', t)
            return self._skip(t, predicted.pose)

        report = analyze(normal_covariance(result.correspondences), self.params.lambda_threshold)
        Q = measurement_covariance(report, self.params.covariance_scale, self.params.rotation_sigma)
        relative = result.pose.inverse()
        pose = last.pose @ relative
        record = ScanLog(t, result.mean_residual, len(result.correspondences),
                         report.degenerate, report.lambda_min)

        if should_insert_keyframe(pose, last.pose, self.params.keyframe):
            state = NavState(pose, predicted.velocity, anchor.bias)
            record.keyframe = self._insert_keyframe(last, state, cloud, t, relative, Q.Q, preint)
            record.loops = self._collect_loops()
            self._optimize()
            self._entries.append((t, record.keyframe, Pose.identity()))
        else:
            self._entries.append((t, last.id, relative))
        self._log(record)
        return record

    def _skip(self, t, pose):
        if pose is not None and self.keyframes:
            last = self.keyframes[-1]
            self._entries.append((t, last.id, last.pose.inverse() @ pose))
        record = ScanLog(t, skipped=True)
        self._log(record)
        return record

    def _insert_keyframe(self, last, state, cloud, t, relative, covariance, preint):
        j = len(self.keyframes)
        self.graph.add_node(j, state)
        self.graph.add_factor(BetweenFactor(last.id, j, relative, covariance))
        self.graph.add_factor(ImuFactor(last.id, j, preint, self.gravity))
        self.graph.add_factor(ConstantBiasFactor.random_walk(
            last.id, j, t - last.timestamp, self.params.accel_bias_walk,
            self.params.gyro_bias_walk))
        self.keyframes.append(Keyframe(j, state.pose, cloud, t))
        self._submap = None
        if self._closer is not None:
            self._closer.submit(self.keyframes, j)
        return j

    def _collect_loops(self, wait=False):
        if self._closer is None:
            return 0
        accepted = 0
        for outcome in self._closer.drain(wait):
            self.loop_events.append(outcome)
            if outcome.accepted:
                factor = outcome.factor
                self.graph.add_factor(BetweenFactor(factor.target, factor.current,
                                                    factor.relative, factor.covariance,
                                                    kind='loop'))
                accepted += 1
        return accepted

    def _optimize(self):
        result = optimize(self.graph, self.params.optimizer_iterations)
        # instantánea nueva: el lazo en curso conserva la anterior
        self.keyframes = [replace(kf, pose=result.values[kf.id].pose) for kf in self.keyframes]
        self._submap = None
        return result

    def _log(self, record):
        self.records.append(record)
        logger.info(record.line())

    # salidas

    def propagate(self, t):
        """Estado en `t` integrado con el IMU desde el último keyframe optimizado."""
        if not self.keyframes:
            raise PreconditionError('Todavía no hay keyframes')
        last = self.keyframes[-1]
        if t == last.timestamp:
            return self.state
        preint = preintegrate(self.buffer.window(last.timestamp, t), self.state.bias,
                              self.params.gyro_noise, self.params.accel_noise)
        return predict(self.state, preint, self.gravity)

    def trajectory(self):
        """(t, Pose) de cada barrido, re-anclado a la pose vigente de su keyframe."""
        return [(t, self.keyframes[kf].pose @ rel) for t, kf, rel in self._entries]

    def finish(self):
        """Espera los lazos pendientes y hace la optimización final."""
        if self._closer is None:
            return 0
        try:
            accepted = self._collect_loops(wait=True)
        finally:
            self._closer.close()
        if accepted:
            self._optimize()
        logger.info('odometría finalizada: keyframes=%d lazos=%d', len(self.keyframes),
                    len(self.graph.factors_of_kind('loop')))
        return accepted

    def run(self, scans):
        try:
            for scan in scans:
                self.process_scan(scan)
        except BaseException:
            if self._closer is not None:
                self._closer.close()
            raise
        self.finish()
        return self.trajectory()

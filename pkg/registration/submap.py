"""Submapa: unión de las últimas nubes de keyframes en el marco del keyframe más reciente."""
from geom.voxel import DEFAULT_COHERENCE, voxel_downsample
from nvlio.exceptions import PreconditionError
from range_image.cloud import NormalCloud


def build_submap(keyframes, voxel_size, coherence=DEFAULT_COHERENCE):
    """`keyframes` va del más viejo al más reciente; el último fija el marco."""
    keyframes = list(keyframes)
    if not keyframes:
        raise PreconditionError('El submapa necesita al menos un keyframe')
    reference = keyframes[-1].pose.inverse()
    clouds = [kf.cloud.transformed(reference @ kf.pose, 'keyframe') for kf in keyframes]
    return voxel_downsample(NormalCloud.concatenate(clouds, 'keyframe'), voxel_size, coherence)

"""Scene -> ambisonics encoding at arbitrary listener poses and orders.

A point source is approximated by its anchor centroid; a cluster averages
the per-anchor gains of its whole point set; a global bed feeds only the
omni channel. Distance attenuation with air absorption is
e^(-alpha*d)/max(d, d_min). Encoding contains no propagation delay; time
of flight belongs to the room-acoustics module.

The core quantity is a per-source gain vector g of length (L+1)^2 such
that the source's contribution is outer(g, equalized_audio) — encoding is
linear in the audio buffers, which the separation module relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import (
    SAMPLE_RATE,
    AmbisonicBuffer,
    ListenerPose,
    MonoBuffer,
    Scene,
    SoundSource,
    SourceType,
    db_gain,
)
from .sh import Direction, check_order, eval_sh, eval_sh_direction, n_channels

DEFAULT_ALPHA = 0.003
D_MIN = 0.1


@dataclass(frozen=True)
class AttenuationModel:
    """Gain e^(-alpha*d)/d with the distance clamped below at d_min."""

    alpha: float = DEFAULT_ALPHA
    d_min: float = D_MIN

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.d_min <= 0:
            raise ValueError("d_min must be > 0")

    def gain(self, d) -> np.ndarray:
        d = np.maximum(np.asarray(d, dtype=np.float64), self.d_min)
        return np.exp(-self.alpha * d) / d


def attenuation(model: AttenuationModel, d: float) -> float:
    return float(model.gain(d))


def _directional_gain(
    points: np.ndarray, pose: ListenerPose, order: int, atten: AttenuationModel
) -> np.ndarray:
    """Mean over anchor points of sigma(d) * y_L(listener-frame direction).

    Directions point from the listener toward each anchor. Points closer
    than d_min keep their true direction but render at the clamped distance.
    """
    offsets = points - pose.position[None, :]
    dist = np.linalg.norm(offsets, axis=1)
    local = offsets @ pose.rotation  # row-wise R^T @ offset
    az = np.arctan2(local[:, 1], local[:, 0])
    el = np.arctan2(local[:, 2], np.hypot(local[:, 0], local[:, 1]))
    basis = eval_sh(az, el, order)
    coincident = dist == 0.0
    if np.any(coincident):
        # Direction undefined when the listener sits exactly on an anchor:
        # render that point as omni at the clamped distance.
        basis[coincident] = 0.0
        basis[coincident, 0] = 1.0
    return (atten.gain(dist)[:, None] * basis).mean(axis=0)


def source_gain_vector(
    src: SoundSource, pose: ListenerPose, order: int, atten: AttenuationModel
) -> np.ndarray:
    """The (L+1)^2 gain vector mapping this source's equalized audio to channels."""
    order = check_order(order)
    if src.source_type is SourceType.GLOBAL:
        gain = np.zeros(n_channels(order))
        gain[0] = 1.0
        return gain
    if src.source_type is SourceType.POINT:
        points = src.centroid[None, :]
    else:
        points = src.anchor_points
    return _directional_gain(points, pose, order, atten)


def _source_window(src: SoundSource, start: int, length: int, loop: bool) -> np.ndarray:
    """Equalized samples of a source over [start, start+length), looped or padded."""
    audio = src.audio.samples
    n = audio.shape[0]
    out = np.zeros(length)
    if n == 0:
        return out
    if loop:
        idx = (start + np.arange(length)) % n
        out[:] = audio[idx]
    else:
        lo = max(start, 0)
        hi = min(start + length, n)
        if hi > lo:
            out[lo - start : hi - start] = audio[lo:hi]
    return out * db_gain(src.peak_db)


def encode_source(
    src: SoundSource,
    pose: ListenerPose,
    order: int,
    atten: AttenuationModel | None = None,
    window: tuple[int, int] | None = None,
    loop: bool = False,
) -> AmbisonicBuffer:
    """Encode one source; equalization from peak_db is applied here, once."""
    atten = atten or AttenuationModel()
    gain = source_gain_vector(src, pose, order, atten)
    if window is None:
        audio = src.audio.samples * db_gain(src.peak_db)
    else:
        audio = _source_window(src, window[0], window[1], loop)
    return AmbisonicBuffer(order, gain[:, None] * audio[None, :], src.audio.sample_rate)


def encode_point(src, pose, order, atten=None, window=None, loop=False) -> AmbisonicBuffer:
    if src.source_type is not SourceType.POINT:
        raise ValueError("encode_point expects a point source")
    return encode_source(src, pose, order, atten, window, loop)


def encode_cluster(src, pose, order, atten=None, window=None, loop=False) -> AmbisonicBuffer:
    if src.source_type is not SourceType.CLUSTER:
        raise ValueError("encode_cluster expects a cluster source")
    return encode_source(src, pose, order, atten, window, loop)


def encode_global(src, order, window=None, loop=False) -> AmbisonicBuffer:
    if src.source_type is not SourceType.GLOBAL:
        raise ValueError("encode_global expects a global source")
    return encode_source(src, ListenerPose.identity(), order, None, window, loop)


def encode_scene(
    scene: Scene,
    pose: ListenerPose,
    order: int,
    window: tuple[int, int] | None = None,
    loop: bool = False,
) -> AmbisonicBuffer:
    """Sum of all per-source encodes; empty scenes give silence.

    Without an explicit window the buffer spans the longest source.
    """
    order = check_order(order)
    atten = AttenuationModel(alpha=scene.alpha)
    if window is None:
        length = max((len(s.audio) for s in scene.sources), default=0)
        window = (0, length)
    out = np.zeros((n_channels(order), window[1]))
    for src in scene.sources:
        out += encode_source(src, pose, order, atten, window, loop).data
    return AmbisonicBuffer(order, out, SAMPLE_RATE)


def virtual_mic(ambi: AmbisonicBuffer, direction: Direction) -> MonoBuffer:
    """Probe the field: sample-wise dot of y_L(direction) with the channels."""
    basis = eval_sh_direction(direction, ambi.order)
    return MonoBuffer(basis @ ambi.data, ambi.sample_rate)

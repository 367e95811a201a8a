"""Block-based rendering sessions and offline trajectory renders.

Threading contract: one control thread calls ``update_pose``, one audio
thread calls ``next_block``. The expensive part of a pose change (gain
vectors for every source, including thousand-point clusters) runs on the
control thread; what crosses to the audio thread is an immutable
(gains, generation) tuple swapped by plain attribute assignment, which is
atomic under the GIL — the audio thread never takes a lock.

``next_block`` touches only buffers preallocated at session start; the
steady-state block path performs no heap allocation (numpy-domain) and no
I/O. ``block_allocation_stats`` is the measurement hook for that claim.

Pose changes crossfade linearly over ``crossfade_ms`` to avoid zipper
noise: during a fade the block is mixed twice (old and new gains) and
blended per sample, which is exactly equivalent to fading the gains since
the whole encoder is linear.
"""

from __future__ import annotations

import gc
import json
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .binaural import AmbiHrir, BinauralStream, decode_binaural
from .encoder import AttenuationModel, encode_scene, source_gain_vector
from .scene import SAMPLE_RATE, AmbisonicBuffer, ListenerPose, MonoBuffer, Scene, db_gain
from .sh import check_order, matrix_to_quat, n_channels, quat_to_matrix, slerp


class SessionClosedError(RuntimeError):
    pass


@dataclass(frozen=True)
class RenderConfig:
    order: int = 1
    block_size: int = 256
    sample_rate: int = SAMPLE_RATE
    loop_sources: bool = True
    crossfade_ms: float = 10.0

    def __post_init__(self):
        check_order(self.order)
        b = self.block_size
        if b < 64 or b > 4096 or (b & (b - 1)) != 0:
            raise ValueError("block_size must be a power of two in [64, 4096]")
        if self.crossfade_ms < 0:
            raise ValueError("crossfade_ms must be >= 0")

    @property
    def crossfade_samples(self) -> int:
        return int(round(self.crossfade_ms * 1e-3 * self.sample_rate))


@dataclass
class Trajectory:
    """Keyframed listener path; linear position, slerp rotation, clamped ends."""

    times: np.ndarray
    poses: list[ListenerPose]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if len(self.times) != len(self.poses) or len(self.times) == 0:
            raise ValueError("trajectory needs one pose per keyframe time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("keyframe times must be strictly increasing")

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def pose_at(self, t: float) -> ListenerPose:
        times, poses = self.times, self.poses
        if t <= times[0]:
            return poses[0]
        if t >= times[-1]:
            return poses[-1]
        k = int(np.searchsorted(times, t, side="right")) - 1
        u = (t - times[k]) / (times[k + 1] - times[k])
        pos = (1 - u) * poses[k].position + u * poses[k + 1].position
        quat = slerp(matrix_to_quat(poses[k].rotation), matrix_to_quat(poses[k + 1].rotation), u)
        return ListenerPose(pos, quat_to_matrix(*quat))

    @classmethod
    def from_json_file(cls, path) -> "Trajectory":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        times, poses = [], []
        for kf in doc["keyframes"]:
            times.append(float(kf["time"]))
            poses.append(ListenerPose.from_quat(kf["pos"], kf.get("quat", (1, 0, 0, 0))))
        return cls(np.asarray(times), poses)

    def to_json(self) -> dict:
        return {
            "keyframes": [
                {
                    "time": float(t),
                    "pos": [float(v) for v in p.position],
                    "quat": [float(v) for v in matrix_to_quat(p.rotation)],
                }
                for t, p in zip(self.times, self.poses)
            ]
        }


class Session:
    """A live rendering session; see module docstring for the thread roles."""

    def __init__(self, scene: Scene, cfg: RenderConfig, hrir: AmbiHrir):
        if hrir.order < cfg.order:
            raise ValueError("HRIR order below render order")
        self.scene = scene
        self.cfg = cfg
        self.atten = AttenuationModel(alpha=scene.alpha)
        self._closed = False
        n_ch = n_channels(cfg.order)
        block = cfg.block_size

        # Source audio is equalized and materialized once, up front.
        self._audio = [np.ascontiguousarray(s.audio.samples * db_gain(s.peak_db)) for s in scene.sources]
        self._n_src = len(scene.sources)
        self.playhead = 0

        pose = ListenerPose.identity()
        gains = self._compute_gains(pose)
        self._box = (pose, gains, 0)  # (pose, gains, generation), swapped atomically
        self._seen_generation = 0
        self._cur_gains = gains.copy()
        self._fade_from = gains.copy()
        self._target = gains
        self._fade_pos = 0
        self._fade_total = 0

        self._decoder = BinauralStream(hrir, block, cfg.order)
        self._src_block = np.zeros(block)
        self._work = np.zeros(block)
        self._mix_a = np.zeros((n_ch, block))
        self._mix_b = np.zeros((n_ch, block))
        self._ramp = np.zeros(block)
        self._omr = np.zeros(block)
        self._base_idx = np.arange(block, dtype=np.float64)
        self._stereo = np.zeros((2, block))
        self._gain_work = np.empty_like(gains)

    # -- control-thread side ------------------------------------------------

    def _compute_gains(self, pose: ListenerPose) -> np.ndarray:
        gains = np.zeros((self._n_src, n_channels(self.cfg.order)))
        for i, src in enumerate(self.scene.sources):
            gains[i] = source_gain_vector(src, pose, self.cfg.order, self.atten)
        return gains

    def update_pose(self, pose: ListenerPose) -> None:
        """Publish a new pose snapshot; last writer wins, never blocks audio."""
        if self._closed:
            raise SessionClosedError("session is closed")
        generation = self._box[2] + 1
        self._box = (pose, self._compute_gains(pose), generation)

    @property
    def pose(self) -> ListenerPose:
        return self._box[0]

    def close(self) -> None:
        self._closed = True

    # -- audio-thread side --------------------------------------------------

    def _fetch_block(self, i: int, out: np.ndarray) -> None:
        audio = self._audio[i]
        n = audio.shape[0]
        block = self.cfg.block_size
        if n == 0:
            out[:] = 0.0
            return
        start = self.playhead
        if self.cfg.loop_sources:
            start %= n
            first = min(block, n - start)
            np.copyto(out[:first], audio[start : start + first])
            filled = first
            while filled < block:
                take = min(block - filled, n)
                np.copyto(out[filled : filled + take], audio[:take])
                filled += take
        else:
            if start >= n:
                out[:] = 0.0
                return
            avail = min(block, n - start)
            np.copyto(out[:avail], audio[start : start + avail])
            if avail < block:
                out[avail:] = 0.0

    def _mix_into(self, out: np.ndarray, gains: np.ndarray) -> None:
        out[:] = 0.0
        for i in range(self._n_src):
            self._fetch_block(i, self._src_block)
            for ch in range(out.shape[0]):
                g = gains[i, ch]
                if g == 0.0:
                    continue
                np.multiply(self._src_block, g, out=self._work)
                row = out[ch]
                np.add(row, self._work, out=row)

    def next_block(self) -> np.ndarray:
        """Render one stereo block (2, block_size) at the latest pose snapshot.

        Returns a view of an internal buffer, valid until the next call.
        """
        box = self._box  # single atomic read of (pose, gains, generation)
        if box[2] != self._seen_generation:
            self._seen_generation = box[2]
            if self.cfg.crossfade_samples > 0:
                np.copyto(self._fade_from, self._cur_gains)
                self._fade_pos = 0
                self._fade_total = self.cfg.crossfade_samples
            else:
                self._fade_total = 0
            self._target = box[1]

        fading = self._fade_total > 0 and self._fade_pos < self._fade_total
        if fading:
            np.add(self._base_idx, float(self._fade_pos), out=self._ramp)
            np.divide(self._ramp, float(self._fade_total), out=self._ramp)
            np.clip(self._ramp, 0.0, 1.0, out=self._ramp)
            np.subtract(1.0, self._ramp, out=self._omr)
            self._mix_into(self._mix_a, self._fade_from)
            self._mix_into(self._mix_b, self._target)
            for ch in range(self._mix_a.shape[0]):
                row = self._mix_a[ch]
                np.multiply(row, self._omr, out=row)
                np.multiply(self._mix_b[ch], self._ramp, out=self._work)
                np.add(row, self._work, out=row)
            w_end = min(1.0, (self._fade_pos + self.cfg.block_size) / self._fade_total)
            np.multiply(self._fade_from, 1.0 - w_end, out=self._gain_work)
            np.multiply(self._target, w_end, out=self._cur_gains)
            np.add(self._cur_gains, self._gain_work, out=self._cur_gains)
            self._fade_pos += self.cfg.block_size
        else:
            self._mix_into(self._mix_a, self._target)
            np.copyto(self._cur_gains, self._target)

        self._decoder.process_into(self._mix_a, self._stereo)
        self.playhead += self.cfg.block_size
        return self._stereo

    @property
    def last_ambi_block(self) -> np.ndarray:
        """The (channels, block) mix behind the last stereo block (a view)."""
        return self._mix_a


def start_session(scene: Scene, cfg: RenderConfig, hrir: AmbiHrir) -> Session:
    return Session(scene, cfg, hrir)


def render_offline(
    scene: Scene,
    pose: ListenerPose,
    cfg: RenderConfig,
    hrir: AmbiHrir,
    n_samples: int,
) -> tuple[MonoBuffer, MonoBuffer, AmbisonicBuffer]:
    """Whole-signal reference pipeline: encode at one pose, then decode."""
    ambi = encode_scene(scene, pose, cfg.order, window=(0, n_samples), loop=cfg.loop_sources)
    left, right = decode_binaural(ambi, hrir, trim=True)
    return left, right, ambi


def render_trajectory(
    scene: Scene,
    traj: Trajectory,
    cfg: RenderConfig,
    hrir: AmbiHrir,
    duration: float | None = None,
    collect_ambi: bool = False,
):
    """Deterministic offline render along a trajectory.

    The pose is sampled at each block-start time. Returns (left, right,
    ambi-or-None, block_poses) where block_poses lists (time, pose) per block.
    """
    if duration is None:
        duration = traj.duration
        if duration <= 0:
            duration = max((len(s.audio) for s in scene.sources), default=0) / cfg.sample_rate
    if duration <= 0:
        raise ValueError("trajectory duration must be > 0")
    n_blocks = int(np.ceil(duration * cfg.sample_rate / cfg.block_size))
    session = Session(scene, cfg, hrir)
    out = np.zeros((2, n_blocks * cfg.block_size))
    ambi = np.zeros((n_channels(cfg.order), out.shape[1])) if collect_ambi else None
    block_poses = []
    for b in range(n_blocks):
        t = b * cfg.block_size / cfg.sample_rate
        pose = traj.pose_at(t)
        session.update_pose(pose)
        block = session.next_block()
        lo = b * cfg.block_size
        out[:, lo : lo + cfg.block_size] = block
        if collect_ambi:
            ambi[:, lo : lo + cfg.block_size] = session.last_ambi_block
        block_poses.append((t, pose))
    left = MonoBuffer(out[0], cfg.sample_rate)
    right = MonoBuffer(out[1], cfg.sample_rate)
    ambi_buf = AmbisonicBuffer(cfg.order, ambi, cfg.sample_rate) if collect_ambi else None
    return left, right, ambi_buf, block_poses


def block_allocation_stats(session: Session, n_blocks: int = 256, warmup: int = 32) -> dict:
    """Measure heap behavior of the block path with tracemalloc.

    Returns net numpy-domain allocation growth across ``n_blocks`` calls
    (bytes and block count; zero when the path only reuses preallocated
    buffers) plus the worst transient allocation peak seen in any single
    call (Python-object churn included).
    """
    for _ in range(warmup):
        session.next_block()
    gc.collect()
    was_tracing = tracemalloc.is_tracing()
    tracemalloc.start()
    try:
        for _ in range(8):
            session.next_block()  # warm allocator state under tracing
        gc.collect()
        domain = tracemalloc.DomainFilter(True, np.lib.tracemalloc_domain)
        before = tracemalloc.take_snapshot().filter_traces([domain])
        peak_per_block = 0
        for _ in range(n_blocks):
            tracemalloc.reset_peak()
            start = tracemalloc.get_traced_memory()[0]
            session.next_block()
            peak = tracemalloc.get_traced_memory()[1]
            peak_per_block = max(peak_per_block, peak - start)
        gc.collect()
        after = tracemalloc.take_snapshot().filter_traces([domain])
    finally:
        if not was_tracing:
            tracemalloc.stop()
    stats = after.compare_to(before, "filename")
    return {
        "numpy_net_bytes": sum(s.size_diff for s in stats),
        "numpy_net_blocks": sum(s.count_diff for s in stats),
        "transient_peak_bytes": peak_per_block,
    }

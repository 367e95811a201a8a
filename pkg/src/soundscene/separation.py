"""Spatial source separation by inverse rendering.

Given an ambisonic mixture and the 3D anchors of the sources that compose
it, recover per-source monaural waveforms whose encoded sum matches the
mixture. The encoder is linear (source i contributes outer(g_i, s_i) for a
fixed gain vector g_i), so the waveforms are optimized directly with Adam
on the spectral log-magnitude of the rendered sum; a small waveform L2
term pins down what the magnitude loss leaves free (phase and DC in
near-silent regions).

Initialization pans the mixture toward each source: the virtual-mic render
at the source's listener-frame centroid direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .encoder import AttenuationModel, source_gain_vector, virtual_mic
from .scene import AmbisonicBuffer, ListenerPose, MonoBuffer, SoundSource, SourceType
from .sh import Direction, rotate_into_listener
from .acoustics import l_mag_torch

_DT = torch.float64


@dataclass(frozen=True)
class AnchoredSource:
    """What separation needs to know about one source: where, not what."""

    id: str
    anchors: np.ndarray
    source_type: SourceType

    def __post_init__(self):
        object.__setattr__(
            self, "anchors", np.asarray(self.anchors, dtype=np.float64).reshape(-1, 3)
        )
        if self.source_type not in (SourceType.POINT, SourceType.CLUSTER):
            raise ValueError("separation sources must be point or cluster")
        if not len(self.anchors):
            raise ValueError("separation sources need anchors")

    @property
    def centroid(self) -> np.ndarray:
        return self.anchors.mean(axis=0)


@dataclass
class SeparationProblem:
    mixture: AmbisonicBuffer
    sources: list[AnchoredSource]
    pose: ListenerPose = field(default_factory=ListenerPose.identity)
    atten: AttenuationModel = field(default_factory=AttenuationModel)

    def __post_init__(self):
        if len(self.sources) < 2:
            raise ValueError("separation needs at least two sources")
        if self.mixture.order < 1:
            raise ValueError("mixture must be at least first order")
        ids = [s.id for s in self.sources]
        if len(set(ids)) != len(ids):
            raise ValueError("source ids must be unique")


def gain_matrix(problem: SeparationProblem) -> np.ndarray:
    """(n_sources, channels) encoder gains at the recording pose."""
    rows = []
    for src in problem.sources:
        probe = SoundSource(
            id=src.id,
            label=src.id,
            source_type=src.source_type,
            audio=MonoBuffer(np.zeros(1)),
            anchor_points=src.anchors,
        )
        rows.append(
            source_gain_vector(probe, problem.pose, problem.mixture.order, problem.atten)
        )
    return np.stack(rows)


def source_directions(problem: SeparationProblem) -> list[Direction]:
    return [
        rotate_into_listener(problem.pose.rotation, src.centroid - problem.pose.position)
        for src in problem.sources
    ]


def init_sources(problem: SeparationProblem) -> list[MonoBuffer]:
    """Directional-panning start: probe the mixture toward each source.

    Sources with coincident directions receive identical initializations
    (there is nothing directional to split them with yet).
    """
    import warnings

    dirs = source_directions(problem)
    for i in range(len(dirs)):
        for j in range(i + 1, len(dirs)):
            if (
                abs(dirs[i].azimuth - dirs[j].azimuth) < 1e-9
                and abs(dirs[i].elevation - dirs[j].elevation) < 1e-9
            ):
                warnings.warn(
                    f"sources {problem.sources[i].id!r} and {problem.sources[j].id!r} "
                    "share a direction; identical initializations"
                )
    return [virtual_mic(problem.mixture, d) for d in dirs]


@dataclass
class SeparationResult:
    sources: list[MonoBuffer]
    trace: np.ndarray  # monotone best-so-far loss
    losses: np.ndarray
    diverged: bool = False


def separate(
    problem: SeparationProblem,
    iters: int = 500,
    lr: float = 1e-6,
    gain_lr: float = 2e-2,
    l2_weight: float = 0.1,
    init: list[MonoBuffer] | None = None,
) -> SeparationResult:
    """Descend on L_mag(rendered sum, mixture) over the source waveforms.

    Each source is parameterized as exp(log_gain) * waveform so the
    dominant error of the panning initialization (a per-source level
    offset) lives in one well-conditioned coordinate; the waveform itself
    moves at a much smaller rate, since the log-magnitude loss is brutally
    ill-conditioned in raw sample coordinates near quiet spectral bins.
    The returned waveforms have the gains folded in.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    init = init if init is not None else init_sources(problem)
    if len(init) != len(problem.sources):
        raise ValueError("one initial waveform per source required")
    gains = torch.tensor(gain_matrix(problem), dtype=_DT)
    mix = torch.tensor(problem.mixture.data, dtype=_DT)
    waves = torch.tensor(
        np.stack([b.samples for b in init]), dtype=_DT, requires_grad=True
    )
    if waves.shape[1] != mix.shape[1]:
        raise ValueError("initial waveforms must match the mixture length")
    log_gains = torch.zeros(len(init), dtype=_DT, requires_grad=True)
    opt = torch.optim.Adam(
        [{"params": [waves], "lr": lr}, {"params": [log_gains], "lr": gain_lr}],
        betas=(0.9, 0.999),
    )

    def forward() -> tuple[torch.Tensor, torch.Tensor]:
        scaled = torch.exp(log_gains)[:, None] * waves
        pred = gains.T @ scaled
        loss = l_mag_torch(pred, mix)
        if l2_weight:
            loss = loss + l2_weight * torch.mean((pred - mix) ** 2)
        return loss, scaled

    best = math.inf
    best_waves = waves.detach().clone()
    losses, trace = [], []
    diverged = False
    for _ in range(iters):
        opt.zero_grad()
        loss, scaled = forward()
        value = float(loss.detach())
        if math.isnan(value):
            diverged = True
            break
        losses.append(value)
        if value < best:
            best = value
            best_waves = scaled.detach().clone()
        trace.append(best)
        loss.backward()
        opt.step()
    out = [
        MonoBuffer(best_waves[i].numpy(), problem.mixture.sample_rate)
        for i in range(len(problem.sources))
    ]
    return SeparationResult(out, np.asarray(trace), np.asarray(losses), diverged)


def render_sum(problem: SeparationProblem, sources: list[MonoBuffer]) -> AmbisonicBuffer:
    gains = gain_matrix(problem)
    data = gains.T @ np.stack([b.samples for b in sources])
    return AmbisonicBuffer(problem.mixture.order, data, problem.mixture.sample_rate)


def rendered_l_mag(problem: SeparationProblem, sources: list[MonoBuffer]) -> float:
    pred = torch.tensor(render_sum(problem, sources).data, dtype=_DT)
    return float(l_mag_torch(pred, torch.tensor(problem.mixture.data, dtype=_DT)))


def si_sdr(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Scale-invariant signal-to-distortion ratio in dB."""
    est = np.asarray(estimate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError("shapes differ")
    scale = float(np.dot(est, ref) / np.dot(ref, ref))
    target = scale * ref
    noise = est - target
    return float(10.0 * np.log10(np.sum(target**2) / max(np.sum(noise**2), 1e-30)))

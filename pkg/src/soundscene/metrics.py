"""Spatial evaluation suite: intensity-vector DoA, angular errors, spherical
energy maps, CC/AUC saliency scores, and the four directional mono renders.

FOA channels are read in ACN order [W, Y, Z, X]. The intensity vector is
accumulated over STFT frames (1024-sample Hann window, 512 hop) and all
bins, then converted to azimuth/elevation.

Two geodesic-error formulas are provided. ``geodesic_angle`` (arccos of the
clipped dot product) is the primary one. ``haversine_angle`` exists in two
layouts: the conventional one, which places the elevation difference in the
leading sin^2 term and is identical to the arccos form, and a variant with
the azimuth/elevation roles swapped that some prior evaluation code uses.
Reports carry both so the discrepancy stays visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import virtual_mic
from .scene import AmbisonicBuffer, MonoBuffer
from .sh import BACK, FRONT, LEFT, RIGHT, Direction, angles_to_vector, eval_sh

STFT_WINDOW = 1024
STFT_HOP = 512


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class DoaEstimate:
    azimuth: float
    elevation: float
    intensity: np.ndarray

    @property
    def direction(self) -> Direction:
        return Direction(self.azimuth, self.elevation)


@dataclass
class EnergyMap:
    """Time-aggregated energy on an equiangular azimuth x elevation grid."""

    values: np.ndarray  # (n_el, n_az)
    azimuths: np.ndarray
    elevations: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.elevations), len(self.azimuths)):
            raise ValueError("energy map shape mismatch")

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def min_max_normalized(self) -> "EnergyMap":
        v = self.values
        span = v.max() - v.min()
        if span == 0.0:
            norm = np.zeros_like(v)
        else:
            norm = (v - v.min()) / span
        return EnergyMap(norm, self.azimuths, self.elevations, normalized=True)

    def argmax_direction(self) -> Direction:
        i, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return Direction(float(self.azimuths[j]), float(self.elevations[i]))


def stft_frames(x: np.ndarray, window: int = STFT_WINDOW, hop: int = STFT_HOP) -> np.ndarray:
    """Hann-windowed rFFT frames, shape (n_frames, n_bins). Short inputs are padded."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < window:
        x = np.pad(x, (0, window - len(x)))
    n_frames = 1 + (len(x) - window) // hop
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    return np.fft.rfft(x[idx] * np.hanning(window)[None, :], axis=1)


def intensity_doa(foa: AmbisonicBuffer) -> DoaEstimate:
    """Dominant direction of arrival from the W-correlated intensity vector."""
    if foa.order != 1:
        raise MetricError("intensity DoA is defined on first-order buffers")
    if not foa.data.any():
        raise MetricError("no energy: cannot estimate DoA of silence")
    w = stft_frames(foa.data[0])
    intensity = np.empty(3)
    for axis, ch in enumerate((3, 1, 2)):  # X, Y, Z live at ACN 3, 1, 2
        intensity[axis] = np.sum(np.real(np.conj(w) * stft_frames(foa.data[ch])))
    azimuth = float(np.arctan2(intensity[1], intensity[0]))
    elevation = float(np.arctan2(intensity[2], np.hypot(intensity[0], intensity[1])))
    return DoaEstimate(azimuth, elevation, intensity)


def wrapped_azimuth_distance(a: float, b: float) -> float:
    d = abs(a - b) % (2.0 * np.pi)
    return min(d, 2.0 * np.pi - d)


def geodesic_angle(az1, el1, az2, el2) -> float:
    u = angles_to_vector(az1, el1)
    v = angles_to_vector(az2, el2)
    return float(np.arccos(np.clip(np.dot(u, v), -1.0, 1.0)))


def haversine_angle(az1, el1, az2, el2, swap_roles: bool = False) -> float:
    """Great-circle distance via the haversine identity.

    With ``swap_roles=False`` the elevation difference sits in the leading
    sin^2 term (the standard layout, equal to ``geodesic_angle``). With
    ``swap_roles=True`` azimuth and elevation trade places, reproducing the
    variant found in some published evaluation formulas; the two disagree
    away from the equator.
    """
    d_az = wrapped_azimuth_distance(az1, az2)
    d_el = abs(el1 - el2)
    if swap_roles:
        a = np.sin(d_az / 2) ** 2 + np.cos(el1) * np.cos(el2) * np.sin(d_el / 2) ** 2
    else:
        a = np.sin(d_el / 2) ** 2 + np.cos(el1) * np.cos(el2) * np.sin(d_az / 2) ** 2
    a = float(np.clip(a, 0.0, 1.0))
    if a >= 1.0:
        return float(np.pi)
    return float(2.0 * np.arctan(np.sqrt(a / (1.0 - a))))


def angular_errors(gt: DoaEstimate, pred: DoaEstimate) -> dict:
    """All DoA error columns between a reference and a predicted estimate."""
    return {
        "abs_azimuth": wrapped_azimuth_distance(gt.azimuth, pred.azimuth),
        "abs_elevation": abs(gt.elevation - pred.elevation),
        "angular": geodesic_angle(gt.azimuth, gt.elevation, pred.azimuth, pred.elevation),
        "angular_haversine_swapped": haversine_angle(
            gt.azimuth, gt.elevation, pred.azimuth, pred.elevation, swap_roles=True
        ),
    }


def make_grid(n_az: int = 64, n_el: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Equiangular cell-center grid over the full sphere."""
    if n_az < 8 or n_el < 4:
        raise ValueError("grid must be at least 8 x 4")
    az = -np.pi + (np.arange(n_az) + 0.5) * 2.0 * np.pi / n_az
    el = -np.pi / 2 + (np.arange(n_el) + 0.5) * np.pi / n_el
    return az, el


def energy_map(ambi: AmbisonicBuffer, n_az: int = 64, n_el: int = 32) -> EnergyMap:
    """E(az, el) = sum_t (y_L(az, el)^T a(t))^2 on the equiangular grid.

    Uses the channel Gram matrix so cost is independent of signal length
    once the (channels x channels) correlation is formed.
    """
    az, el = make_grid(n_az, n_el)
    basis = eval_sh(az[None, :], el[:, None], ambi.order)  # (n_el, n_az, ch)
    gram = ambi.data @ ambi.data.T
    values = np.einsum("eac,cd,ead->ea", basis, gram, basis)
    return EnergyMap(np.maximum(values, 0.0), az, el)


def cc(pred: EnergyMap, gt: EnergyMap) -> float:
    """Pearson correlation of the min-max-normalized maps; 0 if either is flat."""
    if pred.values.shape != gt.values.shape:
        raise MetricError("energy-map grids differ")
    a = pred.min_max_normalized().flat
    b = gt.min_max_normalized().flat
    va = a - a.mean()
    vb = b - b.mean()
    denom = np.sqrt((va**2).sum() * (vb**2).sum())
    if denom == 0.0:
        return 0.0
    return float(np.dot(va, vb) / denom)


def auc(pred: EnergyMap, gt: EnergyMap) -> float:
    """ROC area: ground truth binarized at its median, predictions as scores.

    Computed with the rank statistic (ties get average ranks).
    """
    if pred.values.shape != gt.values.shape:
        raise MetricError("energy-map grids differ")
    labels = gt.flat > np.median(gt.flat)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("degenerate labels: ground-truth map has a single class")
    scores = pred.flat
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    ranks[order] = np.arange(1, scores.size + 1)
    # average ranks across tied scores
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    rank_sum = ranks[labels].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


DIRECTIONAL_PROBES = {"left": LEFT, "right": RIGHT, "front": FRONT, "back": BACK}


def directional_renders(ambi: AmbisonicBuffer) -> dict[str, MonoBuffer]:
    """Virtual-mic renders toward the four canonical directions."""
    return {name: virtual_mic(ambi, d) for name, d in DIRECTIONAL_PROBES.items()}


def rms(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(x**2)))


def compare(pred: AmbisonicBuffer, ref: AmbisonicBuffer, n_az: int = 64, n_el: int = 32) -> dict:
    """Full spatial-metric row between a predicted and a reference buffer."""
    doa_pred = intensity_doa(pred.truncated(1))
    doa_ref = intensity_doa(ref.truncated(1))
    errs = angular_errors(doa_ref, doa_pred)
    map_pred = energy_map(pred, n_az, n_el)
    map_ref = energy_map(ref, n_az, n_el)
    return {
        "doa_pred_azimuth": doa_pred.azimuth,
        "doa_pred_elevation": doa_pred.elevation,
        "doa_ref_azimuth": doa_ref.azimuth,
        "doa_ref_elevation": doa_ref.elevation,
        **errs,
        "cc": cc(map_pred, map_ref),
        "auc": auc(map_pred, map_ref),
    }

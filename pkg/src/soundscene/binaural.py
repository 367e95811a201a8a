"""Ambisonics -> binaural decoding through ambisonics-domain HRIRs.

A measured HRIR grid is projected once per order:

    h_{l,m}^{ear}(tau) = sum_d w(d) * h^{ear}(d, tau) * Y_l^m(d)

with uniform weights 1/N unless the grid supplies its own. Decoding then
convolves each coefficient channel with its projected pair and sums:

    b_ear(t) = sum_{l,m} (h_{l,m}^{ear} * a_{l,m})(t)

Offline decoding uses FFT overlap-add; the streaming decoder keeps carried
tails per instance and works entirely in preallocated buffers so the
real-time block path never allocates.

A synthetic "panner" grid (single-tap IRs with cardioid-like ear gains)
ships for tests and as the default set, so nothing external is required.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import wavio
from .scene import SAMPLE_RATE, AmbisonicBuffer, MonoBuffer
from .sh import Direction, check_order, eval_sh, n_channels


@dataclass
class HrirGrid:
    """Measured per-direction ear impulse responses."""

    directions: list[Direction]
    left: np.ndarray  # (n_dirs, ir_len)
    right: np.ndarray
    weights: np.ndarray | None = None
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.left = np.atleast_2d(np.asarray(self.left, dtype=np.float64))
        self.right = np.atleast_2d(np.asarray(self.right, dtype=np.float64))
        n = len(self.directions)
        if self.left.shape != self.right.shape or self.left.shape[0] != n:
            raise ValueError("HRIR grid arrays disagree with the direction list")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64).reshape(n)

    @property
    def ir_length(self) -> int:
        return self.left.shape[1]


@dataclass
class AmbiHrir:
    """Per-ambisonic-channel ear impulse responses."""

    order: int
    left: np.ndarray  # ((L+1)^2, ir_len)
    right: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        want = n_channels(self.order)
        if self.left.shape != self.right.shape or self.left.shape[0] != want:
            raise ValueError("AmbiHrir shape does not match its order")

    @property
    def ir_length(self) -> int:
        return self.left.shape[1]

    def truncated(self, order: int) -> "AmbiHrir":
        if order > self.order:
            raise ValueError("cannot truncate to a higher order")
        n = n_channels(order)
        return AmbiHrir(order, self.left[:n], self.right[:n], self.sample_rate)


def project_hrirs(grid: HrirGrid, order: int) -> AmbiHrir:
    """Quadrature-project a measured grid into the SH domain."""
    order = check_order(order)
    if not grid.directions:
        raise ValueError("empty HRIR grid")
    az = np.array([d.azimuth for d in grid.directions])
    el = np.array([d.elevation for d in grid.directions])
    basis = eval_sh(az, el, order)  # (n_dirs, ch)
    w = grid.weights if grid.weights is not None else np.full(len(az), 1.0 / len(az))
    wb = basis * w[:, None]
    return AmbiHrir(order, wb.T @ grid.left, wb.T @ grid.right, grid.sample_rate)


def _ola_convolve(signal: np.ndarray, ir: np.ndarray) -> np.ndarray:
    """Linear convolution via FFT overlap-add with power-of-two blocks."""
    n_sig, n_ir = len(signal), len(ir)
    if n_sig == 0 or n_ir == 0:
        return np.zeros(max(n_sig + n_ir - 1, 0))
    nfft = 1
    while nfft < 4 * n_ir or nfft < 4096:
        nfft *= 2
    step = nfft - (n_ir - 1)
    h = np.fft.rfft(ir, nfft)
    out = np.zeros(n_sig + n_ir - 1)
    for start in range(0, n_sig, step):
        chunk = signal[start : start + step]
        seg = np.fft.irfft(np.fft.rfft(chunk, nfft) * h, nfft)
        stop = min(start + nfft, len(out))
        out[start:stop] += seg[: stop - start]
    return out


def decode_binaural(
    ambi: AmbisonicBuffer, hrir: AmbiHrir, trim: bool = False
) -> tuple[MonoBuffer, MonoBuffer]:
    """Decode to a stereo pair; full convolution length unless ``trim``."""
    if hrir.order < ambi.order:
        raise ValueError(f"HRIR order {hrir.order} < signal order {ambi.order}")
    hrir = hrir.truncated(ambi.order) if hrir.order > ambi.order else hrir
    n_out = ambi.n_samples + hrir.ir_length - 1
    ears = np.zeros((2, n_out))
    for ch in range(ambi.n_channels):
        ears[0] += _ola_convolve(ambi.data[ch], hrir.left[ch])
        ears[1] += _ola_convolve(ambi.data[ch], hrir.right[ch])
    if trim:
        ears = ears[:, : ambi.n_samples]
    return MonoBuffer(ears[0], ambi.sample_rate), MonoBuffer(ears[1], ambi.sample_rate)


class BinauralStream:
    """Stateful block decoder with carried convolution tails.

    One instance per audio stream; not shareable across streams. The
    ``process_into`` path performs no allocation: the convolution runs as a
    tap loop over the IR with vectorized in-place updates.
    """

    def __init__(self, hrir: AmbiHrir, block_size: int, order: int | None = None):
        order = hrir.order if order is None else order
        self.hrir = hrir.truncated(order) if hrir.order > order else hrir
        if self.hrir.order != order:
            raise ValueError("HRIR order below requested stream order")
        self.block_size = block_size
        self.n_ch = n_channels(order)
        tail = max(self.hrir.ir_length - 1, 0)
        self._tails = np.zeros((2, tail))
        self._work = np.zeros(block_size)
        self._acc = np.zeros((2, block_size + tail))
        self._kernels = np.stack([self.hrir.left, self.hrir.right])  # (2, ch, taps)

    def reset(self):
        self._tails[:] = 0.0

    def process_into(self, ambi_block: np.ndarray, out: np.ndarray) -> None:
        """Decode one (channels, block) array into a preallocated (2, block)."""
        n = self.block_size
        acc = self._acc
        acc[:] = 0.0
        taps = self.hrir.ir_length
        for ear in range(2):
            for ch in range(self.n_ch):
                kern = self._kernels[ear, ch]
                sig = ambi_block[ch]
                for k in range(taps):
                    c = kern[k]
                    if c == 0.0:
                        continue
                    np.multiply(sig, c, out=self._work)
                    seg = acc[ear, k : k + n]
                    np.add(seg, self._work, out=seg)
        tail = acc.shape[1] - n
        if tail:
            np.add(acc[:, :tail], self._tails, out=acc[:, :tail])
            np.copyto(self._tails, acc[:, n:])
        np.copyto(out, acc[:, :n])

    def process(self, ambi_block: np.ndarray) -> np.ndarray:
        out = np.empty((2, self.block_size))
        self.process_into(ambi_block, out)
        return out


# ---------------------------------------------------------------------------
# built-in synthetic set and manifest loading


def panner_hrir_grid(n_azimuths: int = 8, elevations=(-np.pi / 3, 0.0, np.pi / 3)) -> HrirGrid:
    """Delta-IR grid with cardioid-like ear gains; mirror-symmetric in Y.

    Ear gain is 0.75 + 0.25 * u_y for the left ear (and -u_y for the right),
    so both ears hear every direction but lateral sources dominate the near
    ear. Single-tap IRs keep the streaming path to a matrix multiply.
    """
    directions = []
    left, right = [], []
    for el in elevations:
        for k in range(n_azimuths):
            az = -np.pi + (2 * np.pi * k) / n_azimuths
            d = Direction(az, el)
            u_y = float(np.cos(el) * np.sin(az))
            directions.append(d)
            left.append([0.75 + 0.25 * u_y])
            right.append([0.75 - 0.25 * u_y])
    return HrirGrid(directions, np.array(left), np.array(right))


def default_hrir(order: int) -> AmbiHrir:
    return project_hrirs(panner_hrir_grid(), order)


def identity_hrir(order: int, ir_length: int = 1) -> AmbiHrir:
    """Both ears reproduce the W channel exactly; useful in tests."""
    left = np.zeros((n_channels(order), ir_length))
    left[0, 0] = 1.0
    return AmbiHrir(order, left, left.copy())


def load_hrir_manifest(path) -> HrirGrid:
    """Load a measured grid from a JSON manifest.

    Format: {"entries": [{"azimuth_deg": .., "elevation_deg": ..,
    "left_wav": .., "right_wav": .., "weight": optional}, ...]}
    Paths resolve relative to the manifest.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    entries = doc["entries"]
    if not entries:
        raise ValueError(f"{path}: empty HRIR manifest")
    directions, lefts, rights, weights = [], [], [], []
    has_weights = any("weight" in e for e in entries)
    for e in entries:
        directions.append(
            Direction(np.deg2rad(e["azimuth_deg"]), np.deg2rad(e["elevation_deg"]))
        )
        for side, acc in (("left_wav", lefts), ("right_wav", rights)):
            data, rate = wavio.read_wav(os.path.join(base, e[side]))
            if rate != SAMPLE_RATE:
                raise ValueError(f"{e[side]}: HRIRs must be {SAMPLE_RATE} Hz")
            acc.append(data[0])
        weights.append(float(e.get("weight", 1.0)))
    length = max(len(ir) for ir in lefts + rights)
    lefts = [np.pad(ir, (0, length - len(ir))) for ir in lefts]
    rights = [np.pad(ir, (0, length - len(ir))) for ir in rights]
    w = np.asarray(weights)
    if has_weights:
        w = w / w.sum()
    else:
        w = np.full(len(entries), 1.0 / len(entries))
    return HrirGrid(directions, np.array(lefts), np.array(rights), weights=w)

"""Minimal RIFF/WAVE reader and writer.

Supports the three encodings the engine exchanges: PCM16, PCM24 and IEEE
float32, at any channel count. Data is exposed as float64 arrays shaped
(channels, samples) with PCM scaled to [-1, 1). The stdlib ``wave`` module
cannot read float WAVs, hence this module.
"""

from __future__ import annotations

import struct

import numpy as np

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    pass


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file; returns (data shaped (channels, samples), sample_rate)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        size = struct.unpack_from("<I", blob, pos + 4)[0]
        body = blob[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")

    tag, n_ch, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == _FMT_EXTENSIBLE:
        if len(fmt) < 40:
            raise WavFormatError(f"{path}: truncated extensible fmt chunk")
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if n_ch < 1 or block_align != n_ch * (bits // 8):
        raise WavFormatError(f"{path}: inconsistent fmt chunk")

    n_frames = len(data) // block_align
    data = data[: n_frames * block_align]
    if tag == _FMT_FLOAT and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
    elif tag == _FMT_PCM and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif tag == _FMT_PCM and bits == 24:
        raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3)
        ints = (
            raw[:, 0].astype(np.int32)
            | (raw[:, 1].astype(np.int32) << 8)
            | (raw[:, 2].astype(np.int32) << 16)
        )
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        x = ints.astype(np.float64) / float(1 << 23)
    else:
        raise WavFormatError(f"{path}: unsupported encoding (tag={tag}, bits={bits})")
    return np.ascontiguousarray(x.reshape(n_frames, n_ch).T), int(rate)


def write_wav(path, data: np.ndarray, sample_rate: int, encoding: str = "float32") -> None:
    """Write (channels, samples) or (samples,) data as WAV.

    encoding: "float32" (default) or "pcm16".
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected 1-D or 2-D sample array")
    frames = np.ascontiguousarray(x.T)
    if encoding == "float32":
        payload = frames.astype("<f4").tobytes()
        tag, bits = _FMT_FLOAT, 32
    elif encoding == "pcm16":
        clipped = np.clip(frames, -1.0, 32767.0 / 32768.0)
        payload = (np.round(clipped * 32768.0).astype("<i2")).tobytes()
        tag, bits = _FMT_PCM, 16
    else:
        raise ValueError(f"unsupported encoding {encoding!r}")

    n_ch = x.shape[0]
    block_align = n_ch * (bits // 8)
    fmt = struct.pack("<HHIIHH", tag, n_ch, sample_rate, sample_rate * block_align, block_align, bits)
    chunks = b"".join(
        [
            b"fmt ",
            struct.pack("<I", len(fmt)),
            fmt,
            b"data",
            struct.pack("<I", len(payload)),
            payload,
            b"\x00" if len(payload) & 1 else b"",
        ]
    )
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)

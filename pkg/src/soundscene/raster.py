"""Header-only raster formats: PGM/PPM for 8-bit images, PFM for floats.

Masks travel as P5 PGM with 255 = inside; confidences and metric depth as
PFM (negative scale = little-endian, scanlines stored bottom-to-top per the
format's convention). Color images may use P6 PPM or the "PF" PFM variant.
"""

from __future__ import annotations

import numpy as np


class RasterFormatError(ValueError):
    pass


def _read_token(blob: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(blob) and blob[pos : pos + 1].isspace():
        pos += 1
    if blob[pos : pos + 1] == b"#":  # comment line
        while pos < len(blob) and blob[pos : pos + 1] != b"\n":
            pos += 1
        return _read_token(blob, pos)
    start = pos
    while pos < len(blob) and not blob[pos : pos + 1].isspace():
        pos += 1
    return blob[start:pos], pos


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit grayscale; bool arrays map to 0/255."""
    img = np.asarray(image)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    elif np.issubdtype(img.dtype, np.floating):
        img = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    else:
        img = img.astype(np.uint8)
    if img.ndim != 2:
        raise ValueError("PGM wants a 2-D image")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, pos = _read_token(blob, 0)
    if magic != b"P5":
        raise RasterFormatError(f"{path}: not a binary PGM")
    w, pos = _read_token(blob, pos)
    h, pos = _read_token(blob, pos)
    maxval, pos = _read_token(blob, pos)
    if int(maxval) != 255:
        raise RasterFormatError(f"{path}: only maxval 255 supported")
    w, h = int(w), int(h)
    data = blob[pos + 1 : pos + 1 + w * h]
    if len(data) != w * h:
        raise RasterFormatError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)


def read_mask(path) -> np.ndarray:
    return read_pgm(path) >= 128


def write_ppm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if np.issubdtype(img.dtype, np.floating):
        img = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM wants an (H, W, 3) image")
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(img.astype(np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, pos = _read_token(blob, 0)
    if magic != b"P6":
        raise RasterFormatError(f"{path}: not a binary PPM")
    w, pos = _read_token(blob, pos)
    h, pos = _read_token(blob, pos)
    _, pos = _read_token(blob, pos)
    w, h = int(w), int(h)
    data = blob[pos + 1 : pos + 1 + w * h * 3]
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3)


def write_pfm(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        magic, chans = b"Pf", 1
    elif img.ndim == 3 and img.shape[2] == 3:
        magic, chans = b"PF", 3
    else:
        raise ValueError("PFM wants (H, W) or (H, W, 3)")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")  # negative scale: little-endian
        fh.write(img[::-1].astype("<f4").tobytes())  # bottom-to-top rows


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, pos = _read_token(blob, 0)
    if magic not in (b"Pf", b"PF"):
        raise RasterFormatError(f"{path}: not a PFM file")
    chans = 3 if magic == b"PF" else 1
    w, pos = _read_token(blob, pos)
    h, pos = _read_token(blob, pos)
    scale, pos = _read_token(blob, pos)
    w, h, scale = int(w), int(h), float(scale)
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * chans
    data = np.frombuffer(blob[pos + 1 : pos + 1 + 4 * count], dtype=dtype)
    if data.size != count:
        raise RasterFormatError(f"{path}: truncated pixel data")
    img = data.reshape(h, w, chans)[::-1].astype(np.float64)
    if abs(scale) not in (0.0, 1.0):
        img = img * abs(scale)
    return img[..., 0] if chans == 1 else img


def load_image(path) -> np.ndarray:
    """Read PGM/PPM/PFM by magic, as float64 in [0, 1] for 8-bit inputs."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        return read_pgm(path).astype(np.float64) / 255.0
    if magic == b"P6":
        return read_ppm(path).astype(np.float64) / 255.0
    if magic in (b"Pf", b"PF"):
        return read_pfm(path)
    raise RasterFormatError(f"{path}: unknown raster magic {magic!r}")


def save_image(path, image: np.ndarray) -> None:
    """Write by extension: .pgm, .ppm or .pfm."""
    name = str(path)
    if name.endswith(".pgm"):
        write_pgm(path, image)
    elif name.endswith(".ppm"):
        write_ppm(path, image)
    elif name.endswith(".pfm"):
        write_pfm(path, image)
    else:
        raise ValueError(f"unsupported raster extension on {name}")

"""Equirectangular panorama geometry: calibrated perspective-to-panorama
warping with pyramid anti-aliasing, mask voting, unprojection through depth,
and importance-weighted anchor downsampling.

Pixel (u, v) of a W x H equirectangular panorama maps to

    azimuth   = 2*pi * ((u + 0.5) / W - 1/2)
    elevation =   pi * ((v + 0.5) / H - 1/2)

and onward to the unit vector [cos(el)cos(az), cos(el)sin(az), sin(el)].
Equirectangular rasters must be 2:1 (width = 2 * height).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sh import pitch_matrix

PYRAMID_LEVELS = 6
DOWNSAMPLE_EPS = 1e-3
DEFAULT_N_MAX = 1000


def _check_equirect(shape) -> None:
    h, w = shape[:2]
    if w != 2 * h:
        raise ValueError(f"equirectangular raster must be 2:1, got {w}x{h}")


def pano_angles(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (azimuth (H,W), elevation (H,W)) grids for a panorama."""
    u = np.arange(width)
    v = np.arange(height)
    az = 2.0 * np.pi * ((u + 0.5) / width - 0.5)
    el = np.pi * ((v + 0.5) / height - 0.5)
    return (
        np.broadcast_to(az[None, :], (height, width)).copy(),
        np.broadcast_to(el[:, None], (height, width)).copy(),
    )


def pano_directions(width: int, height: int) -> np.ndarray:
    az, el = pano_angles(width, height)
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


def direction_to_pixel(direction, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Continuous (u, v) pano coordinates of direction vector(s)."""
    d = np.asarray(direction, dtype=np.float64)
    az = np.arctan2(d[..., 1], d[..., 0])
    el = np.arctan2(d[..., 2], np.hypot(d[..., 0], d[..., 1]))
    u = width * (az / (2.0 * np.pi) + 0.5) - 0.5
    v = height * (el / np.pi + 0.5) - 0.5
    return u, v


# ---------------------------------------------------------------------------
# Gaussian pyramid + warping


def _blur_binomial5(img: np.ndarray) -> np.ndarray:
    """Separable [1,4,6,4,1]/16 blur with reflected borders."""
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    out = img.astype(np.float64, copy=True)
    for axis in (0, 1):
        padded = np.pad(
            out, [(2, 2) if a == axis else (0, 0) for a in range(out.ndim)], mode="reflect"
        )
        acc = np.zeros_like(out)
        for k, c in enumerate(kernel):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(k, k + out.shape[axis])
            acc += c * padded[tuple(sl)]
        out = acc
    return out


def gaussian_pyramid(img: np.ndarray, levels: int = PYRAMID_LEVELS) -> list[np.ndarray]:
    pyr = [img.astype(np.float64)]
    for _ in range(1, levels):
        prev = pyr[-1]
        if min(prev.shape[:2]) < 2:
            break
        pyr.append(_blur_binomial5(prev)[::2, ::2])
    return pyr


def _bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = (u - u0)[..., None] if img.ndim == 3 else (u - u0)
    fv = (v - v0)[..., None] if img.ndim == 3 else (v - v0)
    return (
        img[v0, u0] * (1 - fu) * (1 - fv)
        + img[v0, u1] * fu * (1 - fv)
        + img[v1, u0] * (1 - fu) * fv
        + img[v1, u1] * fu * fv
    )


def warp_to_pano(
    image: np.ndarray,
    elevation: float,
    focal: float,
    pano_width: int,
    pano_height: int,
    levels: int = PYRAMID_LEVELS,
) -> tuple[np.ndarray, np.ndarray]:
    """Reproject a calibrated perspective image onto an equirectangular canvas.

    ``elevation`` is the camera tilt in radians, ``focal`` the focal length
    normalized by image width. Every pano pixel is traced through the
    rectified camera and sampled from the Gaussian pyramid level matching
    its local magnification (anti-aliased minification); pixels outside the
    frustum come back invalid.

    Returns (pano image, boolean validity mask).
    """
    _check_equirect((pano_height, pano_width))
    if not (np.isfinite(elevation) and np.isfinite(focal)) or focal <= 0:
        raise ValueError("calibration must be finite with focal > 0")
    if abs(elevation) >= np.pi / 2:
        raise ValueError("|elevation| must be < pi/2")
    img = np.asarray(image, dtype=np.float64)
    img_h, img_w = img.shape[:2]

    dirs = pano_directions(pano_width, pano_height)
    cam = dirs @ pitch_matrix(elevation)  # row-wise world->camera
    with np.errstate(divide="ignore", invalid="ignore"):
        x_n = -cam[..., 1] / cam[..., 0]
        y_n = -cam[..., 2] / cam[..., 0]
    f_px = focal * img_w
    cx, cy = (img_w - 1) / 2.0, (img_h - 1) / 2.0
    u_img = cx + f_px * x_n
    v_img = cy + f_px * y_n
    valid = (
        (cam[..., 0] > 1e-9)
        & (u_img >= 0.0)
        & (u_img <= img_w - 1.0)
        & (v_img >= 0.0)
        & (v_img <= img_h - 1.0)
    )
    u_img = np.where(valid, u_img, 0.0)
    v_img = np.where(valid, v_img, 0.0)

    # local magnification from forward differences of the pano->image map
    du_u = np.diff(u_img, axis=1, append=u_img[:, -1:])
    dv_u = np.diff(v_img, axis=1, append=v_img[:, -1:])
    du_v = np.diff(u_img, axis=0, append=u_img[-1:, :])
    dv_v = np.diff(v_img, axis=0, append=v_img[-1:, :])
    det = np.abs(du_u * dv_v - du_v * dv_u)
    rho = np.sqrt(np.maximum(det, 1e-12))

    pyramid = gaussian_pyramid(img, levels)
    n_levels = len(pyramid)
    with np.errstate(divide="ignore"):
        level = np.clip(np.round(np.log2(rho)), 0, n_levels - 1).astype(int)
    level[~valid] = 0

    out = np.zeros_like(_bilinear(pyramid[0], u_img, v_img))
    for s in range(n_levels):
        sel = valid & (level == s)
        if not sel.any():
            continue
        scale = 2.0**s
        out[sel] = _bilinear(pyramid[s], u_img[sel] / scale, v_img[sel] / scale)
    if out.ndim == 3:
        out[~valid] = 0.0
    else:
        out = np.where(valid, out, 0.0)
    return out, valid


# ---------------------------------------------------------------------------
# mask voting


@dataclass
class MaskProposal:
    """A binary region with optional per-pixel confidence and a label."""

    mask: np.ndarray
    confidence: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.confidence is not None:
            self.confidence = np.asarray(self.confidence, dtype=np.float64)
            if self.confidence.shape != self.mask.shape:
                raise ValueError("confidence raster must match the mask shape")


@dataclass
class VotedMask:
    mask: np.ndarray
    score: float
    proposal_index: int
    label: str = ""


def iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def mask_vote(
    proposals: list[MaskProposal],
    ovs: list[MaskProposal],
    tau_iou: float = 0.5,
    tau_vote: float = 0.5,
) -> list[VotedMask]:
    """Confidence-weighted voting of category masks onto global proposals.

    For each proposal, OVS masks with IoU > tau_iou vote: every proposal
    pixel gets the maximum confidence over eligible masks covering it, the
    sum of those scores is normalized by the count of voted pixels, and a
    proposal passing tau_vote is kept with its mask unioned with all
    contributing OVS masks. Proposals no eligible mask touches are dropped.
    """
    if not proposals:
        return []
    shape = proposals[0].mask.shape
    for m in list(proposals) + list(ovs):
        if m.mask.shape != shape:
            raise ValueError("all rasters must share one shape")
    out: list[VotedMask] = []
    for idx, prop in enumerate(proposals):
        eligible = [m for m in ovs if iou(prop.mask, m.mask) > tau_iou]
        if eligible:
            score_map = np.zeros(shape)
            covered = np.zeros(shape, dtype=bool)
            for m in eligible:
                conf = m.confidence if m.confidence is not None else np.ones(shape)
                inside = prop.mask & m.mask
                score_map = np.where(inside, np.maximum(score_map, conf), score_map)
                covered |= inside
            visibility = int(covered.sum())
        else:
            visibility = 0
        if visibility == 0:
            continue  # no semantic support: rejected regardless of tau_vote
        score = float(score_map.sum() / visibility)
        if score >= tau_vote:
            refined = prop.mask.copy()
            for m in eligible:
                refined |= m.mask
            label = prop.label or (eligible[0].label if eligible else "")
            out.append(VotedMask(refined, score, idx, label))
    return out


# ---------------------------------------------------------------------------
# unprojection


@dataclass
class AnchorCloud:
    """Unprojected mask pixels with the per-point downsampling attributes."""

    positions: np.ndarray  # (N, 3) meters
    elevations: np.ndarray  # (N,)
    depths: np.ndarray  # (N,)
    normals: np.ndarray  # (N, 3) unit
    view_dirs: np.ndarray  # (N, 3) unit, surface -> camera
    pixels: np.ndarray  # (N, 2) integer (v, u) source pixels

    def __len__(self) -> int:
        return self.positions.shape[0]


def unproject_mask(mask: np.ndarray, depth: np.ndarray) -> AnchorCloud:
    """Lift masked valid-depth pixels into 3D through the equirect mapping.

    Depth 0 (or negative) marks invalid pixels. Normals come from central
    finite differences of the unprojected surface (one-sided at borders);
    degenerate normals fall back to the view direction.
    """
    mask = np.asarray(mask, dtype=bool)
    depth = np.asarray(depth, dtype=np.float64)
    if mask.shape != depth.shape:
        raise ValueError("mask and depth must share a shape")
    _check_equirect(mask.shape)
    h, w = mask.shape
    az, el = pano_angles(w, h)
    dirs = pano_directions(w, h)
    valid = depth > 0.0
    safe_depth = np.where(valid, depth, np.nan)
    surface = safe_depth[..., None] * dirs

    grad_v = np.gradient(surface, axis=0)
    grad_u = np.gradient(surface, axis=1)
    normals = np.cross(grad_u, grad_v)
    norm = np.linalg.norm(normals, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore"):
        normals = normals / norm
    bad = ~np.isfinite(normals).all(axis=-1) | (norm[..., 0] < 1e-12)
    normals[bad] = -dirs[bad]

    keep = mask & valid
    vs, us = np.nonzero(keep)
    return AnchorCloud(
        positions=surface[keep],
        elevations=el[keep],
        depths=depth[keep],
        normals=normals[keep],
        view_dirs=-dirs[keep],
        pixels=np.stack([vs, us], axis=1),
    )


def downsample_weights(cloud: AnchorCloud, eps: float = DOWNSAMPLE_EPS) -> np.ndarray:
    """Importance weights d^2 * cos(e) / max(|n . v|, eps), normalized."""
    grazing = np.abs(np.einsum("ij,ij->i", cloud.normals, cloud.view_dirs))
    w = cloud.depths**2 * np.cos(cloud.elevations) / np.maximum(grazing, eps)
    total = w.sum()
    if total <= 0:
        return np.full(len(cloud), 1.0 / max(len(cloud), 1))
    return w / total


def downsample_points(
    cloud: AnchorCloud,
    n_max: int = DEFAULT_N_MAX,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Weighted draw (without replacement) of min(n_max, N) anchor positions."""
    if len(cloud) == 0:
        raise ValueError("cannot downsample an empty cloud")
    if len(cloud) <= n_max:
        return cloud.positions.copy()
    rng = rng or np.random.default_rng()
    probs = downsample_weights(cloud)
    idx = rng.choice(len(cloud), size=n_max, replace=False, p=probs)
    return cloud.positions[idx]

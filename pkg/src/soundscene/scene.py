"""Audio-scene data model and its on-disk formats.

A scene is a JSON document plus referenced WAV files and optional binary
anchor blobs:

    {
      "alpha": 0.003,
      "meta": {...},
      "sources": [
        {"id": "...", "label": "...", "prompt": "...", "peak_db": -12,
         "source_type": "point" | "area" | "background",
         "anchors": [[x, y, z], ...] | "anchors_file": "points.swpc",
         "audio": "clip.wav"}
      ]
    }

"area" maps to Cluster and "background" to Global. Anchor blobs are
little-endian float32 xyz triplets behind the 8-byte magic "SWPC0001".
All audio is 48 kHz; other rates are a hard error (no resampling).
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import wavio
from .sh import is_rotation, quat_to_matrix

SAMPLE_RATE = 48000
ANCHOR_MAGIC = b"SWPC0001"

_TYPE_NAMES = {"point": "Point", "area": "Cluster", "background": "Global"}
_TYPE_JSON = {"Point": "point", "Cluster": "area", "Global": "background"}


class SceneError(ValueError):
    """Scene file or schema violation."""


class SourceType(enum.Enum):
    POINT = "Point"
    CLUSTER = "Cluster"
    GLOBAL = "Global"

    @classmethod
    def from_json(cls, name: str) -> "SourceType":
        try:
            return cls(_TYPE_NAMES[name])
        except KeyError:
            raise SceneError(f"unknown source_type {name!r}") from None

    @property
    def json_name(self) -> str:
        return _TYPE_JSON[self.value]


@dataclass
class MonoBuffer:
    """A mono waveform at the canonical 48 kHz rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("MonoBuffer needs a 1-D sample array")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass
class AmbisonicBuffer:
    """(L+1)^2 coefficient channels in ACN order, shaped (channels, samples)."""

    order: int
    data: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        want = (self.order + 1) ** 2
        if self.data.ndim != 2 or self.data.shape[0] != want:
            raise ValueError(
                f"order-{self.order} buffer needs {want} channels, got shape {self.data.shape}"
            )

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def channel(self, acn: int) -> MonoBuffer:
        return MonoBuffer(self.data[acn], self.sample_rate)

    def truncated(self, order: int) -> "AmbisonicBuffer":
        """The nested lower-order view of this buffer (basis is nested)."""
        if order > self.order:
            raise ValueError("cannot truncate to a higher order")
        return AmbisonicBuffer(order, self.data[: (order + 1) ** 2], self.sample_rate)


@dataclass
class ListenerPose:
    """Rigid listener pose: world position plus orthonormal rotation."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if not is_rotation(self.rotation):
            raise ValueError("rotation must be orthonormal with det +1")

    @classmethod
    def identity(cls) -> "ListenerPose":
        return cls(np.zeros(3), np.eye(3))

    @classmethod
    def from_quat(cls, position, quat) -> "ListenerPose":
        w, x, y, z = (float(v) for v in quat)
        return cls(np.asarray(position, dtype=np.float64), quat_to_matrix(w, x, y, z))


@dataclass
class SoundSource:
    id: str
    label: str
    source_type: SourceType
    audio: MonoBuffer
    peak_db: int = 0
    prompt: str = ""
    anchor_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.anchor_points = np.asarray(self.anchor_points, dtype=np.float64).reshape(-1, 3)
        if self.peak_db > 0:
            raise SceneError(f"source {self.id!r}: peak_db must be <= 0")
        if self.peak_db != 0 and self.peak_db > -6:
            raise SceneError(f"source {self.id!r}: peak_db must be 0 or <= -6")
        if self.source_type is SourceType.GLOBAL:
            if len(self.anchor_points):
                raise SceneError(f"source {self.id!r}: global sources take no anchors")
        elif not len(self.anchor_points):
            raise SceneError(f"source {self.id!r}: point/cluster sources need >= 1 anchor")

    @property
    def centroid(self) -> np.ndarray:
        return self.anchor_points.mean(axis=0)


@dataclass
class Scene:
    sources: list[SoundSource]
    alpha: float = 0.003
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [s.id for s in self.sources]
        if len(set(ids)) != len(ids):
            raise SceneError("source ids must be unique")
        if sum(s.source_type is SourceType.GLOBAL for s in self.sources) > 1:
            raise SceneError("at most one global source allowed")

    def source(self, source_id: str) -> SoundSource:
        for s in self.sources:
            if s.id == source_id:
                return s
        raise KeyError(source_id)


def equalize(buf: MonoBuffer, peak_db: float) -> MonoBuffer:
    """Scale a waveform by 10^(peak_db/20); peak_db must be <= 0."""
    if peak_db > 0:
        raise ValueError("peak_db must be <= 0")
    return MonoBuffer(buf.samples * 10.0 ** (peak_db / 20.0), buf.sample_rate)


def db_gain(peak_db: float) -> float:
    return 10.0 ** (peak_db / 20.0)


# ---------------------------------------------------------------------------
# anchor blobs


def write_anchor_blob(path, points: np.ndarray) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    with open(path, "wb") as fh:
        fh.write(ANCHOR_MAGIC)
        fh.write(pts.astype("<f4").tobytes())


def read_anchor_blob(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != ANCHOR_MAGIC:
        raise SceneError(f"{path}: bad anchor blob magic")
    body = blob[8:]
    if len(body) % 12:
        raise SceneError(f"{path}: anchor blob length not a multiple of 12")
    return np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(-1, 3)


# ---------------------------------------------------------------------------
# scene files


def _load_audio(path) -> MonoBuffer:
    data, rate = wavio.read_wav(path)
    if rate != SAMPLE_RATE:
        raise SceneError(f"{path}: sample-rate mismatch ({rate} != {SAMPLE_RATE})")
    if data.shape[0] != 1:
        raise SceneError(f"{path}: source audio must be mono, got {data.shape[0]} channels")
    if not np.all(np.isfinite(data)):
        raise SceneError(f"{path}: non-finite samples")
    return MonoBuffer(data[0])


def load_scene(path) -> Scene:
    """Load and validate a scene JSON file; audio paths resolve relative to it."""
    if not os.path.exists(path):
        raise SceneError(f"scene file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneError(f"{path}: invalid JSON ({exc})") from exc
    base = os.path.dirname(os.path.abspath(path))

    if not isinstance(doc, dict) or "sources" not in doc:
        raise SceneError(f"{path}: expected an object with a 'sources' list")
    sources = []
    for entry in doc["sources"]:
        for key in ("id", "source_type", "audio"):
            if key not in entry:
                raise SceneError(f"{path}: source missing required field {key!r}")
        stype = SourceType.from_json(entry["source_type"])
        if "anchors_file" in entry:
            anchors = read_anchor_blob(os.path.join(base, entry["anchors_file"]))
        else:
            anchors = np.asarray(entry.get("anchors", []), dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(anchors)):
            raise SceneError(f"{path}: non-finite anchor coordinates in {entry['id']!r}")
        if stype is SourceType.GLOBAL and len(anchors):
            raise SceneError(f"{path}: global source {entry['id']!r} must not carry anchors")
        peak_db = entry.get("peak_db", 0)
        if not float(peak_db).is_integer():
            raise SceneError(f"{path}: peak_db must be an integer, got {peak_db!r}")
        sources.append(
            SoundSource(
                id=str(entry["id"]),
                label=str(entry.get("label", entry["id"])),
                prompt=str(entry.get("prompt", "")),
                peak_db=int(peak_db),
                source_type=stype,
                anchor_points=anchors,
                audio=_load_audio(os.path.join(base, entry["audio"])),
            )
        )
    return Scene(
        sources=sources,
        alpha=float(doc.get("alpha", 0.003)),
        meta=dict(doc.get("meta", {})),
    )


def save_scene(scene: Scene, path, anchors_inline_limit: int = 64) -> None:
    """Write a scene back to disk: JSON plus per-source WAVs (and blobs).

    Audio lands next to the JSON as <id>.wav; anchor sets larger than
    ``anchors_inline_limit`` go to <id>.swpc sidecars.
    """
    base = os.path.dirname(os.path.abspath(path))
    os.makedirs(base, exist_ok=True)
    entries = []
    for src in scene.sources:
        wav_name = f"{src.id}.wav"
        wavio.write_wav(os.path.join(base, wav_name), src.audio.samples, src.audio.sample_rate)
        entry = {
            "id": src.id,
            "label": src.label,
            "prompt": src.prompt,
            "peak_db": src.peak_db,
            "source_type": src.source_type.json_name,
            "audio": wav_name,
        }
        if src.source_type is not SourceType.GLOBAL:
            if len(src.anchor_points) > anchors_inline_limit:
                blob_name = f"{src.id}.swpc"
                write_anchor_blob(os.path.join(base, blob_name), src.anchor_points)
                entry["anchors_file"] = blob_name
            else:
                entry["anchors"] = [[float(v) for v in p] for p in src.anchor_points]
        entries.append(entry)
    doc = {"alpha": scene.alpha, "meta": scene.meta, "sources": entries}
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


__all__ = [
    "SAMPLE_RATE",
    "AmbisonicBuffer",
    "ListenerPose",
    "MonoBuffer",
    "Scene",
    "SceneError",
    "SoundSource",
    "SourceType",
    "db_gain",
    "equalize",
    "load_scene",
    "read_anchor_blob",
    "save_scene",
    "write_anchor_blob",
]

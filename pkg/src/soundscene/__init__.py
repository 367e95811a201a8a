"""Spatial audio scene engine.

Renders order-agnostic ambisonics and binaural audio for navigable 3D
sound scenes built from typed anchors (point / cluster / global), scores
spatial audio against references, grounds sounding regions in panorama
geometry, and fits room acoustics / separates sources through the same
differentiable renderer.
"""

from .scene import (  # noqa: F401
    SAMPLE_RATE,
    AmbisonicBuffer,
    ListenerPose,
    MonoBuffer,
    Scene,
    SceneError,
    SoundSource,
    SourceType,
    equalize,
    load_scene,
    save_scene,
)

__version__ = "0.1.0"

"""
Pianobench is a data pipeline and evaluation benchmark for piano hand-motion generation.

The `pianobench` package reads and validates MIDI transcriptions, cleans and segments
per-frame hand annotations, computes distribution metrics between generated and
recorded motion, and provides the diffusion sampling mathematics of a
position-guided pose generator.
"""

from .config import CliConfig
from .dataset import ClipAnnotation, load_clip, save_clip
from .evaluate import aevaluate_dirs, evaluate_dirs
from .metrics import MetricReport
from .types import HandTrack, MotionSequence, NoteEvent

__all__ = [
    "CliConfig",
    "ClipAnnotation",
    "HandTrack",
    "MetricReport",
    "MotionSequence",
    "NoteEvent",
    "aevaluate_dirs",
    "evaluate_dirs",
    "load_clip",
    "save_clip",
]

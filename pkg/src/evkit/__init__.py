"""evkit: DVS emulation, event codecs, dataset mixing, and detection metrics."""

from .core import (Annotation, Detection, Event, EventStream, Frame,
                   SensorGeometry, slice_stream)
from .emulator import EmulatorParams, PixelState, emulate, log_map, step_pixel
from .errors import CapacityError, CodecError, EvkitError, FormatError, UsageError
from .evaluation import (COCO_THRESHOLDS, EvalReport, GapFit, average_precision,
                         evaluate, fit_gap_line, iou, match_detections)
from .mixer import (Group, Instance, MixPlan, SequenceEntry, SplitPlan,
                    build_groups, compose_mix, fixed_eval_split, segment_instances)
from .render import Palette, render_window
from .sync import (FrameIndex, TickRecord, filter_tick_records,
                   group_events_by_frame, resample_annotations)

__version__ = "0.1.0"

__all__ = [
    "Annotation", "Detection", "Event", "EventStream", "Frame", "SensorGeometry",
    "slice_stream", "EmulatorParams", "PixelState", "emulate", "log_map",
    "step_pixel", "CapacityError", "CodecError", "EvkitError", "FormatError",
    "UsageError", "COCO_THRESHOLDS", "EvalReport", "GapFit", "average_precision",
    "evaluate", "fit_gap_line", "iou", "match_detections", "Group", "Instance",
    "MixPlan", "SequenceEntry", "SplitPlan", "build_groups", "compose_mix",
    "fixed_eval_split", "segment_instances", "Palette", "render_window",
    "FrameIndex", "TickRecord", "filter_tick_records", "group_events_by_frame",
    "resample_annotations",
]

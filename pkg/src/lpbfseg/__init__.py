"""Streaming foreground segmentation of thermal frames from laser powder bed fusion builds."""

from .core import CorruptRecordError, Frame, FrameSequence, Mask, Rect, ShapeError, mask_apply, mask_or

__version__ = "0.1.0"

__all__ = ["CorruptRecordError", "Frame", "FrameSequence", "Mask", "Rect", "ShapeError",
           "mask_apply", "mask_or", "__version__"]

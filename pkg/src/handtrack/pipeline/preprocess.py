"""Depth-frame preprocessing: range thresholding and mask ingestion."""

from __future__ import annotations

import numpy as np

from ..geometry import DepthFrame


def preprocess(frame: DepthFrame, depth_threshold: float, mask: np.ndarray | None = None) -> DepthFrame:
    """Invalidate pixels beyond the threshold; intersect an external
    foreground mask when one is supplied (segmentation is ingested, never
    computed here)."""
    depth = np.where(frame.depth <= depth_threshold, frame.depth, 0.0)
    out_mask = frame.mask
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != depth.shape:
            raise ValueError(f"mask shape {mask.shape} does not match frame {depth.shape}")
        out_mask = mask if out_mask is None else (out_mask & mask)
    return DepthFrame(depth, frame.intrinsics, out_mask)

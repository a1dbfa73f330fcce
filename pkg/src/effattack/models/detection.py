"""D3: grid detector with greedy NMS and per-box downstream cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..tensor import stack_flops
from .core import InferenceResult, InferenceTrace, check_input, check_policy, fits, run_stack, tape_stack
from .spec import BOX_CHANNELS

# per threshold-passing candidate: centre/size decode + corner conversion
DECODE_FLOPS_PER_BOX = 10
# per candidate pair: intersection (8), areas (2), union (2), ratio (1), clamp (1)
IOU_FLOPS_PER_PAIR = 14


@dataclass(frozen=True)
class Box:
    index: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float

    def corners(self):
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)


def nms_flops(passing: int) -> int:
    return DECODE_FLOPS_PER_BOX * passing + IOU_FLOPS_PER_PAIR * passing * (passing - 1) // 2


def iou(a: Box, b: Box) -> float:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def decode_boxes(model, raw) -> list:
    """Turn the sigmoid-squashed backbone output into one box per cell."""
    side = model.spec.grid_side
    cells = np.asarray(raw).reshape(model.spec.grid, BOX_CHANNELS)
    boxes = []
    for g, (sx, sy, sw, sh, conf) in enumerate(cells):
        row, col = divmod(g, side)
        boxes.append(Box(g, (col + sx) / side, (row + sy) / side, 2 * sw / side, 2 * sh / side, float(conf)))
    return boxes


def greedy_nms(boxes, iou_thresh):
    """Keep boxes in descending confidence; drop any with IoU >= thresh to a kept one.

    Equal confidences are broken by lower candidate index.
    """
    order = sorted(boxes, key=lambda b: (-b.confidence, b.index))
    kept = []
    for b in order:
        if all(iou(b, k) < iou_thresh for k in kept):
            kept.append(b)
    return kept


def _check_thresholds(conf_thresh, iou_thresh):
    for name, val in (("conf_thresh", conf_thresh), ("iou_thresh", iou_thresh)):
        if not 0 < val < 1:
            raise DomainError(f"{name} must lie in (0, 1), got {val}")


def detect(model, x, conf_thresh=0.5, iou_thresh=0.5, ceiling=None, policy="abort-and-flag") -> InferenceResult:
    """Score every grid cell, threshold, run NMS, then pay ``c_out`` per kept box."""
    model.require("D3")
    _check_thresholds(conf_thresh, iou_thresh)
    check_policy(policy)
    x = check_input(model, x)
    trace = InferenceTrace("D3")
    spent = 0

    def stop(done):
        return InferenceResult(list(done) if policy == "exit-now" else None, trace, spent, breached=True)

    if not fits(spent, stack_flops(model.stacks["backbone"]), ceiling):
        return stop([])
    raw, f = run_stack(model, "backbone", x)
    spent += f
    trace.cumulative_flops.append(spent)

    boxes = decode_boxes(model, raw)
    trace.candidate_scores = [b.confidence for b in boxes]
    passing = [b for b in boxes if b.confidence >= conf_thresh]
    trace.passing_count = len(passing)
    cost = nms_flops(len(passing))
    if cost:
        if not fits(spent, cost, ceiling):
            return stop([])
        spent += cost
        trace.cumulative_flops.append(spent)
    kept = greedy_nms(passing, iou_thresh)
    trace.retained_count = len(kept)

    done = []
    c_out = model.spec.c_out
    for b in kept:
        if c_out:
            if not fits(spent, c_out, ceiling):
                return stop(done)
            spent += c_out
            trace.cumulative_flops.append(spent)
        done.append(b)
    return InferenceResult(done, trace, spent)


def conf_logit_index(model):
    return np.arange(BOX_CHANNELS - 1, BOX_CHANNELS * model.spec.grid, BOX_CHANNELS)


def tape_conf_logits(tape, pvars, model, x):
    """Pre-sigmoid confidence logits for every cell; ``x`` may be a batch."""
    pre = tape_stack(tape, pvars, model, "backbone", x, upto=-1)
    return tape.take(pre, conf_logit_index(model))

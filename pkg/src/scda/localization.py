"""Box-overlap scoring for unsupervised localization.

Boxes use inclusive integer pixel coordinates, so a box spanning columns
x_min..x_max is x_max - x_min + 1 pixels wide. A prediction counts as correct
when IoU is strictly greater than the threshold (default 0.5).
"""

from dataclasses import dataclass

from .selection import BoundingBox

HISTOGRAM_BINS = 10


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two inclusive-coordinate boxes."""
    ix_min = max(a.x_min, b.x_min)
    iy_min = max(a.y_min, b.y_min)
    ix_max = min(a.x_max, b.x_max)
    iy_max = min(a.y_max, b.y_max)
    iw = ix_max - ix_min + 1
    ih = iy_max - iy_min + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def pcp(predicted, truth, threshold: float = 0.5) -> float:
    """Fraction of box pairs whose IoU exceeds the threshold (strict >)."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise ValueError("predicted and truth box lists must align")
    if not predicted:
        raise ValueError("no box pairs to score")
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must lie in [0, 1)")
    hits = sum(1 for p, t in zip(predicted, truth) if iou(p, t) > threshold)
    return hits / len(predicted)


def coverage_histogram(fractions):
    """Counts of values in ten equal bins [0,.1), [.1,.2), ... [.9,1.0].

    Values must lie in [0, 1]; 1.0 lands in the last bin.
    """
    counts = [0] * HISTOGRAM_BINS
    fractions = list(fractions)
    if not fractions:
        raise ValueError("no coverage values given")
    for value in fractions:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"coverage {value} outside [0, 1]")
        counts[min(int(value * HISTOGRAM_BINS), HISTOGRAM_BINS - 1)] += 1
    return counts


@dataclass(frozen=True)
class LocalizationReport:
    pcp: float
    threshold: float
    mean_iou: float
    iou_histogram: tuple
    count: int


def evaluate_localization(predicted, truth, threshold: float = 0.5) -> LocalizationReport:
    """PCP plus the distribution of per-image IoU values."""
    predicted = list(predicted)
    truth = list(truth)
    scores = [iou(p, t) for p, t in zip(predicted, truth)]
    if len(predicted) != len(truth) or not scores:
        raise ValueError("predicted and truth box lists must align and be non-empty")
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must lie in [0, 1)")
    hits = sum(1 for s in scores if s > threshold)
    return LocalizationReport(
        pcp=hits / len(scores),
        threshold=threshold,
        mean_iou=sum(scores) / len(scores),
        iou_histogram=tuple(coverage_histogram(scores)),
        count=len(scores),
    )

"""Simulated object detection, description post-processing, and template QA.

The camera is a sector of the ground-truth scene: detection returns noisy
class/confidence/bbox triples per visible object, description compresses them
into a short sentence, and question answering matches a handful of templates
against the current frame only.  QA deliberately answers from the front view
even when the question names a direction; the single-frame scope is part of
the modeled behavior, not an oversight.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .world import Pose2D, SceneObject, normalize_angle

# Distances under this answer "close", at or above it "far".
CLOSE_METERS = 2.0


@dataclass(frozen=True)
class Detection:
    """One detected instance; bbox is (cx, cy, w, h) in normalized image units."""

    class_name: str
    confidence: float
    bbox: tuple[float, float, float, float]

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        cx, cy, w, h = self.bbox
        if w < 0 or h < 0:
            raise ValueError("bbox size must be non-negative")
        if not (0.0 <= cx - w / 2 and cx + w / 2 <= 1.0 and 0.0 <= cy - h / 2 and cy + h / 2 <= 1.0):
            raise ValueError(f"bbox {self.bbox} exceeds the unit image square")

    @property
    def area(self) -> float:
        return self.bbox[2] * self.bbox[3]


@dataclass(frozen=True)
class DescriptionConfig:
    iou_threshold: float = 0.5
    confidence_floor: float = 0.5
    max_classes: int = 3

    def __post_init__(self):
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must be in [0, 1]")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ValueError("confidence_floor must be in [0, 1]")
        if self.max_classes < 1:
            raise ValueError("max_classes must be >= 1")


def _clamped_center(center: float, size: float) -> float:
    half = size / 2
    return min(max(center, half), 1.0 - half)


def simulate_detections(
    visible: Sequence[SceneObject],
    camera: Pose2D,
    seed: int,
    fov: float = math.pi / 2,
    jitter: float = 0.05,
    duplicate_rate: float = 0.05,
) -> list[Detection]:
    """Noisy detections for the objects in view.

    Each object either yields one detection (probability = its detectability)
    or nothing; apparent bbox size shrinks with distance.  A small duplicate
    rate occasionally emits a near-copy so NMS has something to do.  Exactly
    four random draws happen per object, so one object's parameters never
    shift another object's noise.
    """
    rng = random.Random(seed)
    out: list[Detection] = []
    for obj in visible:
        present = rng.random() < obj.detectability
        conf_noise = rng.uniform(-jitter, jitter)
        duplicate = rng.random() < duplicate_rate
        dup_noise = rng.uniform(-jitter, jitter)
        if not present:
            continue
        dx = obj.position.x - camera.x
        dy = obj.position.y - camera.y
        dist = math.hypot(dx, dy)
        bearing = normalize_angle(math.atan2(dy, dx) - camera.theta) if dist > 0 else 0.0
        size = min(1.0, 2.0 * max(obj.footprint_halfwidths) / max(dist, 1e-6))
        cx = _clamped_center(0.5 - bearing / fov, size)
        confidence = min(1.0, max(0.0, obj.base_confidence + conf_noise))
        det = Detection(obj.class_name, confidence, (cx, 0.5, size, size))
        out.append(det)
        if duplicate:
            shifted = _clamped_center(cx + 0.02, size)
            dup_conf = min(1.0, max(0.0, confidence - 0.1 + dup_noise))
            out.append(Detection(obj.class_name, dup_conf, (shifted, 0.5, size, size)))
    return out


def iou(a: Detection, b: Detection) -> float:
    ax, ay, aw, ah = a.bbox
    bx, by, bw, bh = b.bbox
    ix = min(ax + aw / 2, bx + bw / 2) - max(ax - aw / 2, bx - bw / 2)
    iy = min(ay + ah / 2, by + bh / 2) - max(ay - ah / 2, by - bh / 2)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy per-class suppression, highest confidence first."""
    ordered = sorted(dets, key=lambda d: -d.confidence)
    kept: list[Detection] = []
    for det in ordered:
        if all(
            k.class_name != det.class_name or iou(k, det) <= iou_threshold
            for k in kept
        ):
            kept.append(det)
    return kept


EMPTY_DESCRIPTION = "I don't see anything notable."


def _plural(count: int, class_name: str) -> str:
    return f"{count} {class_name}{'s' if count > 1 else ''}"


def _join(items: Sequence[str]) -> str:
    if len(items) == 1:
        return items[0]
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return ", ".join(items[:-1]) + f", and {items[-1]}"


def describe(dets: Sequence[Detection], cfg: DescriptionConfig = DescriptionConfig()) -> str:
    """Compress detections into "2 chairs, 1 person, and 1 table"."""
    survivors = [d for d in nms(dets, cfg.iou_threshold) if d.confidence >= cfg.confidence_floor]
    if not survivors:
        return EMPTY_DESCRIPTION
    by_class: dict[str, list[Detection]] = {}
    for det in survivors:
        by_class.setdefault(det.class_name, []).append(det)
    ranked = sorted(
        by_class.items(),
        key=lambda kv: (-sum(d.area for d in kv[1]) / len(kv[1]), kv[0]),
    )
    top = ranked[: cfg.max_classes]
    return _join([_plural(len(group), name) for name, group in top])


# --- question answering ----------------------------------------------------

_PERSON_WORDS = {"person", "people", "anyone", "anybody", "someone", "somebody"}
_WILDCARDS = {"anything", "something", "object", "objects"}


def _article(word: str) -> str:
    return "an" if word[:1] in "aeiou" else "a"


def _match_class(token: str, classes: set[str]) -> Optional[str]:
    if token in classes:
        return token
    if token in _PERSON_WORDS and "person" in classes:
        return "person"
    if token.endswith("s") and token[:-1] in classes:
        return token[:-1]
    return None


def _referenced_class(tokens: Sequence[str], classes: set[str]) -> Optional[str]:
    for token in tokens:
        hit = _match_class(token, classes)
        if hit is not None:
            return hit
    return None


def _mentions_person(tokens: Sequence[str]) -> bool:
    return any(t in _PERSON_WORDS for t in tokens)


NOT_SURE = "I am not sure."


def answer_question(question: str, visible: Sequence[SceneObject], camera: Pose2D) -> str:
    """Template QA over the current camera frame.

    Knows four shapes: "how many X", "how far is X" (answered only as close
    or far), "what is ..." (nearest frontal object regardless of the stated
    direction), and existence ("is there ...", "any ...").  Everything else
    gets a refusal.
    """
    from .nlu import tokenize  # local import keeps perception usable standalone

    tokens = tokenize(question)
    if not tokens:
        return NOT_SURE
    classes = {obj.class_name for obj in visible}

    if tokens[:2] == ["how", "many"]:
        wanted = _referenced_class(tokens[2:], classes)
        if wanted is None and not _mentions_person(tokens):
            # The asked-for class may simply not be in view: count zero unless
            # the phrasing names nothing countable at all.
            named = [t for t in tokens[2:] if t not in
                     {"are", "is", "there", "here", "nearby", "around", "us", "we", "can", "you", "see"}]
            if not named:
                return NOT_SURE
        count = sum(1 for obj in visible if wanted is not None and obj.class_name == wanted)
        return str(count)

    if tokens[:2] == ["how", "far"]:
        wanted = _referenced_class(tokens[2:], classes)
        if wanted is None:
            return NOT_SURE
        nearest = min(
            (obj for obj in visible if obj.class_name == wanted),
            key=lambda o: math.hypot(o.position.x - camera.x, o.position.y - camera.y),
        )
        dist = math.hypot(nearest.position.x - camera.x, nearest.position.y - camera.y)
        return "close" if dist < CLOSE_METERS else "far"

    if "what" in tokens[:2]:
        if not visible:
            return NOT_SURE
        nearest = visible[0]  # visible_objects sorts by distance
        return f"{_article(nearest.class_name)} {nearest.class_name}"

    if tokens[0] in ("is", "are") or "any" in tokens:
        wanted = _referenced_class(tokens, classes)
        if wanted is not None:
            return "yes"
        if any(t in _WILDCARDS for t in tokens):
            return "yes" if visible else "no"
        return "no"

    return NOT_SURE

"""MOTChallenge-style text I/O and the key=value config file format.

Detections: ``frame,id,bb_left,bb_top,bb_width,bb_height,score,...`` with an
optional embedding sidecar holding one comma-separated row per detection
line, in the same order. Ground truth adds ``...,active,class,visibility``.
Results are written as ``frame,id,bb_left,bb_top,bb_width,bb_height,score,
-1,-1,-1`` with frames ascending and ids ascending within a frame; recovered
flags go to a companion events file so the main file stays compatible with
standard evaluators.
"""

import warnings

import numpy as np

from .core import BBox, DataFormatError, Detection
from .labels import GtObject
from .tracker import TrackOutput


def _parse_fields(line: str, path, lineno: int, minimum: int) -> list:
    parts = [p.strip() for p in line.strip().split(",")]
    if len(parts) < minimum:
        raise DataFormatError(f"{path}:{lineno}: expected >= {minimum} fields, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise DataFormatError(f"{path}:{lineno}: non-numeric field ({exc})") from exc


def _read_rows(path, minimum: int) -> list:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rows.append(_parse_fields(line, path, lineno, minimum))
    return rows


def _dense_range(rows: list) -> tuple:
    first = int(min(r[0] for r in rows))
    last = int(max(r[0] for r in rows))
    return first, last


def load_mot(det_path, emb_path=None, embedding_dim: int = 64) -> tuple:
    """Load a detection file (plus optional embedding sidecar).

    Returns (first frame number, per-frame detection lists) densely covering
    every frame between the first and last seen. Without a sidecar the
    embeddings default to zero vectors (no appearance information).
    """
    rows = _read_rows(det_path, 7)
    if not rows:
        return 1, []
    if emb_path is not None:
        embeddings = _read_rows(emb_path, 1)
        if len(embeddings) != len(rows):
            raise DataFormatError(
                f"{emb_path}: {len(embeddings)} embedding rows for {len(rows)} detections"
            )
        dims = {len(e) for e in embeddings}
        if len(dims) > 1:
            raise DataFormatError(f"{emb_path}: inconsistent embedding dimensions {sorted(dims)}")
    else:
        warnings.warn(
            f"{det_path}: no embedding sidecar, defaulting to zero vectors", stacklevel=2
        )
        embeddings = [[0.0] * embedding_dim] * len(rows)
    first, last = _dense_range(rows)
    frames = [[] for _ in range(last - first + 1)]
    for row, emb in zip(rows, embeddings):
        frame = int(row[0])
        left, top, width, height, score = row[2], row[3], row[4], row[5], row[6]
        frames[frame - first].append(
            Detection(
                frame=frame,
                box=BBox(left, top, left + width, top + height),
                score=float(np.clip(score, 0.0, 1.0)),
                embedding=np.asarray(emb, dtype=np.float64),
            )
        )
    return first, frames


def load_gt(gt_path) -> tuple:
    """Ground truth with ids and visibility (field 9 when present)."""
    rows = _read_rows(gt_path, 6)
    if not rows:
        return 1, []
    first, last = _dense_range(rows)
    frames = [[] for _ in range(last - first + 1)]
    for row in rows:
        frame = int(row[0])
        visibility = float(np.clip(row[8], 0.0, 1.0)) if len(row) >= 9 else 1.0
        left, top, width, height = row[2], row[3], row[4], row[5]
        frames[frame - first].append(
            GtObject(
                id=int(row[1]),
                box=BBox(left, top, left + width, top + height),
                visibility=visibility,
            )
        )
    return first, frames


def load_results(results_path) -> tuple:
    """Tracker output file -> per-frame TrackOutput lists."""
    rows = _read_rows(results_path, 7)
    if not rows:
        return 1, []
    first, last = _dense_range(rows)
    frames = [[] for _ in range(last - first + 1)]
    for row in rows:
        frame = int(row[0])
        left, top, width, height = row[2], row[3], row[4], row[5]
        frames[frame - first].append(
            TrackOutput(
                id=int(row[1]),
                box=BBox(left, top, left + width, top + height),
                score=float(row[6]),
                recovered=False,
            )
        )
    return first, frames


def write_results(frame_results: list, path, first_frame: int = 1, events_path=None):
    """Write tracker output; optionally a ``frame,id,recovered`` sidecar."""
    lines = []
    event_lines = []
    for offset, result in enumerate(frame_results):
        frame = first_frame + offset
        for out in sorted(result.outputs, key=lambda o: o.id):
            box = out.box
            lines.append(
                f"{frame},{out.id},{box.x_left:.6f},{box.y_top:.6f},"
                f"{box.width():.6f},{box.height():.6f},{out.score:.6f},-1,-1,-1"
            )
            event_lines.append(f"{frame},{out.id},{int(out.recovered)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    if events_path is not None:
        with open(events_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(event_lines) + ("\n" if event_lines else ""))


def write_gt(gts_per_frame: list, path, first_frame: int = 1):
    lines = []
    for offset, objs in enumerate(gts_per_frame):
        frame = first_frame + offset
        for obj in sorted(objs, key=lambda o: o.id):
            box = obj.box
            lines.append(
                f"{frame},{obj.id},{box.x_left:.6f},{box.y_top:.6f},"
                f"{box.width():.6f},{box.height():.6f},1,1,{obj.visibility:.6f}"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def write_detections(dets_per_frame: list, det_path, emb_path, first_frame: int = 1):
    det_lines = []
    emb_lines = []
    for offset, dets in enumerate(dets_per_frame):
        frame = first_frame + offset
        for det in dets:
            box = det.box
            det_lines.append(
                f"{frame},-1,{box.x_left:.6f},{box.y_top:.6f},"
                f"{box.width():.6f},{box.height():.6f},{det.score:.6f}"
            )
            emb_lines.append(",".join(f"{v:.6f}" for v in det.embedding))
    with open(det_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(det_lines) + ("\n" if det_lines else ""))
    with open(emb_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(emb_lines) + ("\n" if emb_lines else ""))


def load_config_file(path) -> dict:
    """Line-oriented key=value pairs; blank lines and # comments skipped."""
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise DataFormatError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, _, value = text.partition("=")
            overrides[key.strip()] = value.strip()
    return overrides


def align_frames(first_a: int, frames_a: list, first_b: int, frames_b: list) -> tuple:
    """Pad two dense per-frame lists onto their common frame range."""
    if not frames_a and not frames_b:
        return [], []
    firsts = [f for f, frames in ((first_a, frames_a), (first_b, frames_b)) if frames]
    lasts = [
        f + len(frames) - 1 for f, frames in ((first_a, frames_a), (first_b, frames_b)) if frames
    ]
    lo, hi = min(firsts), max(lasts)

    def pad(first, frames):
        out = [[] for _ in range(hi - lo + 1)]
        for i, items in enumerate(frames):
            out[first - lo + i] = items
        return out

    return pad(first_a, frames_a), pad(first_b, frames_b)

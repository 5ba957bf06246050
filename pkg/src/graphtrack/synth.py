"""Synthetic sequence generation with scripted occlusions.

Identities move with constant velocity plus noise, bouncing off the image
borders. Each identity owns a unit appearance embedding; per-frame observed
embeddings are the identity vector mixed toward a random direction when
visibility drops, then perturbed and re-normalized. Occlusion events script
score dips (low-confidence detections) or full occlusion (the detection is
omitted entirely); fully occluded identities can additionally shed
"occluder fragment" detections frozen at the position where they vanished,
which is what a detector firing on the occluder looks like. Optional clutter
adds low-score boxes at random positions.

Everything is driven by one seeded generator, so identical (spec, seed)
inputs reproduce identical sequences bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import BBox, Detection
from .labels import GtObject


@dataclass(frozen=True)
class OcclusionEvent:
    identity: int
    start_frame: int
    end_frame: int  # exclusive
    score_during: float
    visibility_during: float


@dataclass
class SequenceSpec:
    n_frames: int = 200
    n_identities: int = 10
    fps: int = 30
    image_w: float = 1920.0
    image_h: float = 1080.0
    occlusion_events: list = field(default_factory=list)
    speed_px: float = 4.0
    motion_noise_std: float = 0.6
    embedding_dim: int = 64
    embedding_noise_std: float = 0.08
    box_noise_std: float = 1.0
    base_score_min: float = 0.70
    base_score_max: float = 0.98
    box_w_min: float = 40.0
    box_w_max: float = 90.0
    box_h_min: float = 80.0
    box_h_max: float = 170.0
    clutter_per_frame: float = 0.0
    clutter_score_min: float = 0.15
    clutter_score_max: float = 0.45
    occluder_fragments: int = 0
    # Scalar or (lo, hi) range sampled per fragment: how much of the occluded
    # identity's appearance leaks into a fragment's embedding.
    fragment_feature_mix: object = 0.5
    fragment_score_min: float = 0.20
    fragment_score_max: float = 0.45

    def validate(self) -> "SequenceSpec":
        for ev in self.occlusion_events:
            if not 0 <= ev.start_frame <= ev.end_frame <= self.n_frames:
                raise ValueError(f"event {ev} outside [0, {self.n_frames})")
            if not 0.0 <= ev.score_during <= 1.0:
                raise ValueError("score_during outside [0, 1]")
        return self


def _fold(value: float, lo: float, hi: float) -> float:
    """Reflect a coordinate into [lo, hi] (bounce off the borders)."""
    span = hi - lo
    if span <= 0:
        return lo
    t = (value - lo) % (2.0 * span)
    return lo + (span - abs(t - span))


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    norm = np.linalg.norm(v)
    while norm == 0.0:
        v = rng.normal(size=dim)
        norm = np.linalg.norm(v)
    return v / norm


def _observed_embedding(
    rng: np.random.Generator,
    identity_emb: np.ndarray,
    mix: float,
    noise_std: float,
    contaminant: np.ndarray = None,
) -> np.ndarray:
    other = contaminant if contaminant is not None else _unit(rng, identity_emb.size)
    direction = mix * identity_emb + (1.0 - mix) * other
    obs = direction + noise_std * rng.normal(size=identity_emb.size)
    norm = np.linalg.norm(obs)
    if norm == 0.0:
        return identity_emb.copy()
    return obs / norm


def _noisy_box(rng, cx, cy, w, h, noise_std, image_w, image_h) -> BBox:
    cx = cx + rng.normal() * noise_std
    cy = cy + rng.normal() * noise_std
    w = max(2.0, w + rng.normal() * noise_std)
    h = max(2.0, h + rng.normal() * noise_std)
    return _make_box(cx, cy, w, h, image_w, image_h)


def _make_box(cx, cy, w, h, image_w, image_h) -> BBox:
    x0 = float(np.clip(cx - w / 2.0, 0.0, image_w - 1.0))
    y0 = float(np.clip(cy - h / 2.0, 0.0, image_h - 1.0))
    x1 = float(np.clip(cx + w / 2.0, x0, image_w))
    y1 = float(np.clip(cy + h / 2.0, y0, image_h))
    return BBox(x0, y0, x1, y1)


def synth_generate(spec: SequenceSpec, seed: int) -> tuple:
    """Returns (detections per frame, ground truth per frame)."""
    spec.validate()
    rng = np.random.default_rng(seed)
    n = spec.n_identities
    sizes = np.column_stack(
        [
            rng.uniform(spec.box_w_min, spec.box_w_max, size=n),
            rng.uniform(spec.box_h_min, spec.box_h_max, size=n),
        ]
    )
    margin_x = sizes[:, 0] / 2.0 + 2.0
    margin_y = sizes[:, 1] / 2.0 + 2.0
    starts = np.column_stack(
        [
            rng.uniform(margin_x, spec.image_w - margin_x),
            rng.uniform(margin_y, spec.image_h - margin_y),
        ]
    )
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n)
    speeds = spec.speed_px * rng.uniform(0.5, 1.25, size=n)
    velocities = np.column_stack([np.cos(angles), np.sin(angles)]) * speeds[:, None]
    wander = rng.normal(scale=spec.motion_noise_std, size=(spec.n_frames, n, 2)).cumsum(axis=0)
    identity_embs = [_unit(rng, spec.embedding_dim) for _ in range(n)]

    events_by_id = {}
    for ev in spec.occlusion_events:
        events_by_id.setdefault(ev.identity, []).append(ev)

    # Fragments for a full-occlusion event stay frozen at the identity's
    # position when it vanished; their appearance partially carries the
    # occluded identity's features.
    frag_anchor = {}

    def center_at(i: int, t: int) -> tuple:
        raw = starts[i] + velocities[i] * t + wander[t, i]
        return (
            _fold(raw[0], margin_x[i], spec.image_w - margin_x[i]),
            _fold(raw[1], margin_y[i], spec.image_h - margin_y[i]),
        )

    dets_per_frame = []
    gts_per_frame = []
    for t in range(spec.n_frames):
        dets = []
        gts = []
        for i in range(n):
            cx, cy = center_at(i, t)
            w, h = sizes[i]
            event = None
            for ev in events_by_id.get(i, ()):
                if ev.start_frame <= t < ev.end_frame:
                    event = ev
                    break
            visibility = event.visibility_during if event else 1.0
            gts.append(GtObject(id=i + 1, box=_make_box(cx, cy, w, h, spec.image_w, spec.image_h), visibility=visibility))
            if event and event.score_during == 0.0:
                if spec.occluder_fragments > 0:
                    key = (i, event.start_frame)
                    if key not in frag_anchor:
                        frag_anchor[key] = center_at(i, event.start_frame)
                    ax, ay = frag_anchor[key]
                    mix_spec = spec.fragment_feature_mix
                    for _ in range(spec.occluder_fragments):
                        fx = ax + rng.uniform(-0.25, 0.25) * w
                        fy = ay + rng.uniform(-0.25, 0.25) * h
                        fw = w * rng.uniform(0.7, 1.2)
                        fh = h * rng.uniform(0.7, 1.2)
                        if isinstance(mix_spec, (tuple, list)):
                            mix = float(rng.uniform(mix_spec[0], mix_spec[1]))
                        else:
                            mix = float(mix_spec)
                        emb = _observed_embedding(
                            rng, identity_embs[i], mix, spec.embedding_noise_std
                        )
                        dets.append(
                            Detection(
                                frame=t,
                                box=_make_box(fx, fy, fw, fh, spec.image_w, spec.image_h),
                                score=float(
                                    rng.uniform(spec.fragment_score_min, spec.fragment_score_max)
                                ),
                                embedding=emb,
                            )
                        )
                continue
            if event:
                # A dipped detection is partially occluded by another object,
                # so its appearance mixes toward the nearest identity rather
                # than an arbitrary direction; spurious boxes (fragments,
                # clutter) mix toward directions no tracked object explains.
                score = event.score_during
                mix = event.visibility_during
                contaminant = None
                best = np.inf
                for k in range(n):
                    if k == i:
                        continue
                    ox, oy = center_at(k, t)
                    dist = (ox - cx) ** 2 + (oy - cy) ** 2
                    if dist < best:
                        best = dist
                        contaminant = identity_embs[k]
            else:
                score = float(rng.uniform(spec.base_score_min, spec.base_score_max))
                mix = 1.0
                contaminant = None
            dets.append(
                Detection(
                    frame=t,
                    box=_noisy_box(rng, cx, cy, w, h, spec.box_noise_std, spec.image_w, spec.image_h),
                    score=score,
                    embedding=_observed_embedding(
                        rng, identity_embs[i], mix, spec.embedding_noise_std,
                        contaminant=contaminant,
                    ),
                )
            )
        for _ in range(rng.poisson(spec.clutter_per_frame)):
            w = rng.uniform(spec.box_w_min, spec.box_w_max) * rng.uniform(0.6, 1.1)
            h = rng.uniform(spec.box_h_min, spec.box_h_max) * rng.uniform(0.6, 1.1)
            cx = rng.uniform(w / 2.0, spec.image_w - w / 2.0)
            cy = rng.uniform(h / 2.0, spec.image_h - h / 2.0)
            dets.append(
                Detection(
                    frame=t,
                    box=_make_box(cx, cy, w, h, spec.image_w, spec.image_h),
                    score=float(rng.uniform(spec.clutter_score_min, spec.clutter_score_max)),
                    embedding=_unit(rng, spec.embedding_dim),
                )
            )
        dets_per_frame.append(dets)
        gts_per_frame.append(gts)
    return dets_per_frame, gts_per_frame


def make_benchmark_spec(
    rng: np.random.Generator,
    *,
    n_frames: int = 200,
    n_identities: int = 10,
    embedding_dim: int = 16,
    dip_fraction: float = 0.25,
    dip_score: tuple = (0.25, 0.35),
    dip_visibility: tuple = (0.5, 0.8),
    dip_length: tuple = (30, 60),
    occlusion_fraction: float = 0.0,
    occlusion_length: tuple = (15, 30),
    fragments: int = 0,
    fragment_mix: float = 0.5,
    clutter_per_frame: float = 0.0,
    speed_px: float = 4.0,
    embedding_noise_std: float = 0.08,
) -> SequenceSpec:
    """A sequence spec with randomized dip / full-occlusion events.

    Events start after the new-track warmup window and each identity gets
    at most one; dip events lower scores and degrade appearance, occlusion
    events remove detections entirely (optionally shedding fragments).
    """
    events = []
    first_start = 15
    for identity in range(n_identities):
        draw = rng.uniform()
        if draw < dip_fraction:
            length = int(rng.integers(dip_length[0], dip_length[1] + 1))
            start = int(rng.integers(first_start, max(first_start + 1, n_frames - length - 5)))
            events.append(
                OcclusionEvent(
                    identity=identity,
                    start_frame=start,
                    end_frame=min(start + length, n_frames),
                    score_during=float(rng.uniform(*dip_score)),
                    visibility_during=float(rng.uniform(*dip_visibility)),
                )
            )
        elif draw < dip_fraction + occlusion_fraction:
            length = int(rng.integers(occlusion_length[0], occlusion_length[1] + 1))
            start = int(rng.integers(first_start, max(first_start + 1, n_frames - length - 5)))
            events.append(
                OcclusionEvent(
                    identity=identity,
                    start_frame=start,
                    end_frame=min(start + length, n_frames),
                    score_during=0.0,
                    visibility_during=0.0,
                )
            )
    return SequenceSpec(
        n_frames=n_frames,
        n_identities=n_identities,
        embedding_dim=embedding_dim,
        occlusion_events=events,
        speed_px=speed_px,
        embedding_noise_std=embedding_noise_std,
        clutter_per_frame=clutter_per_frame,
        occluder_fragments=fragments,
        fragment_feature_mix=fragment_mix,
    )


def generate_corpus(seed: int, n_sequences: int, **spec_kwargs) -> list:
    """List of (detections per frame, ground truth per frame) sequences."""
    rng = np.random.default_rng(seed)
    corpus = []
    for _ in range(n_sequences):
        spec = make_benchmark_spec(rng, **spec_kwargs)
        corpus.append(synth_generate(spec, int(rng.integers(2**31))))
    return corpus

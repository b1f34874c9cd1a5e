"""Synthetic ground truth: LTI tracklets, gait-like identities and naive oracles.

The oracles here are deliberately slow, loop-based restatements of the
evaluation formulas. They exist to cross-check the vectorized code paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, Sequence
from .trajectory import CROP_SIZE, Tracklet

TRACKLET_LENGTH = 15
CAMERAS = ("cam_a", "cam_b", "cam_c", "cam_d")


def _all_poles(poles):
    out = []
    for p in poles:
        p = complex(p)
        out.append(p)
        if abs(p.imag) > 0 and not any(abs(q - p.conjugate()) < 1e-12 for q in poles):
            out.append(p.conjugate())
    return out


def gen_lti_tracklet(order, poles, length=TRACKLET_LENGTH, seed=0, noise=0.0, start=None):
    """Tracklet whose velocities obey the linear recurrence with ``poles``.

    Complex poles are completed with their conjugates; the total must equal
    ``order``. Noise-free velocity Hankelets then have rank at most ``order``.
    """
    all_poles = _all_poles(poles)
    if len(all_poles) != order:
        raise ValueError(f"{len(all_poles)} poles (with conjugates) for order {order}")
    coeffs = np.real(np.poly(all_poles))  # 1, a_1, ..., a_n
    rng = np.random.default_rng(seed)
    n_vel = length - 1
    v = np.zeros((max(n_vel, order), 2))
    v[:order] = rng.normal(size=(order, 2))
    for t in range(order, n_vel):
        v[t] = -coeffs[1:] @ v[t - order:t][::-1]
    v = v[:n_vel]
    if noise:
        v = v + rng.normal(scale=noise, size=v.shape)
    origin = np.array(start if start is not None else (CROP_SIZE[0] / 2, CROP_SIZE[1] / 2))
    pts = np.vstack([origin, origin + np.cumsum(v, axis=0)])
    return Tracklet(0, pts)


@dataclass(frozen=True)
class IdentityParams:
    frequency: float      # cycles per 15 frames
    amp_x: float          # peak velocity, pixels per frame
    amp_y: float
    phase_xy: float       # phase lag of y behind x
    top_color: tuple
    bottom_color: tuple


def _gait_tracklet(params, rng, noise, length, time_offset):
    omega = 2.0 * math.pi * params.frequency / TRACKLET_LENGTH
    w, h = CROP_SIZE
    y0 = rng.uniform(8.0, h - 8.0)
    limb = 0.5 + y0 / h                       # lower body moves more
    phase = rng.uniform(0.0, 2.0 * math.pi)
    t = np.arange(length - 1) + time_offset
    v = np.stack([limb * params.amp_x * np.sin(omega * t + phase),
                  limb * params.amp_y * np.sin(omega * t + phase + params.phase_xy)], axis=1)
    v += rng.normal(scale=noise, size=v.shape)
    offsets = np.vstack([np.zeros(2), np.cumsum(v, axis=0)])
    lo = np.maximum([2.0, 2.0], -offsets.min(axis=0))
    hi = np.minimum([w - 2.0, h - 2.0], np.array([w, h]) - offsets.max(axis=0))
    x0 = rng.uniform(lo[0], hi[0]) if hi[0] > lo[0] else w / 2
    y0 = float(np.clip(y0, lo[1], hi[1])) if hi[1] > lo[1] else h / 2
    return Tracklet(int(time_offset), np.array([x0, y0]) + offsets)


def _frames(params, rng, n_frames, appearance, color_noise, gain):
    h, w = CROP_SIZE[1], CROP_SIZE[0]
    if appearance == "black":
        return np.zeros((n_frames, h, w, 3), dtype=np.uint8)
    base = np.empty((h, w, 3))
    base[: h // 2] = params.top_color
    base[h // 2:] = params.bottom_color
    base *= gain
    frames = base[None] + rng.normal(scale=color_noise, size=(n_frames, h, w, 3)) if color_noise \
        else np.repeat(base[None], n_frames, axis=0)
    return np.clip(np.rint(frames), 0, 255).astype(np.uint8)


def draw_identities(n, rng, frequency_range=(0.5, 2.0), amp_range=(0.5, 2.0)):
    """Identity parameters with stratified, hence distinct, gait frequencies."""
    lo, hi = frequency_range
    slots = rng.permutation(n)
    out = []
    for i in range(n):
        f = lo + (slots[i] + rng.uniform(0.2, 0.8)) * (hi - lo) / n
        out.append(IdentityParams(
            frequency=float(f),
            amp_x=float(rng.uniform(*amp_range)),
            amp_y=float(rng.uniform(*amp_range)),
            phase_xy=float(rng.uniform(0.0, 2.0 * math.pi)),
            top_color=tuple(float(c) for c in rng.uniform(20, 235, size=3)),
            bottom_color=tuple(float(c) for c in rng.uniform(20, 235, size=3)),
        ))
    return out


def gen_identity_population(n_ids, seqs_per_id=2, frequency_range=(0.5, 2.0), noise=0.05,
                            seed=0, n_tracklets=120, n_frames=3, appearance="color",
                            color_noise=0.0, color_jitter=0.0, n_pool=0, pool_appearance="color",
                            tracklet_length=TRACKLET_LENGTH, camera_gains=None):
    """Two-or-more-camera population of gait-like identities.

    Each sequence re-draws tracklet phases, start points and velocity noise,
    so cross-camera renditions share only the identity's gait parameters and
    clothing colours. ``appearance='black'`` gives identical all-black crops
    for every identity. ``color_jitter`` perturbs each sequence's clothing
    colours independently (std in 8-bit units); ``color_noise`` adds
    per-pixel, per-channel noise. ``n_pool`` extra identities get role
    ``pool`` and appearance ``pool_appearance``.
    """
    rng = np.random.default_rng(seed)
    cameras = CAMERAS[:seqs_per_id]
    gains = camera_gains or [1.0 - 0.1 * i for i in range(seqs_per_id)]
    people = draw_identities(n_ids + n_pool, rng, frequency_range)
    seqs, roles = [], {}
    for i, params in enumerate(people):
        pid = f"p{i:03d}" if i < n_ids else f"q{i - n_ids:03d}"
        roles[pid] = "main" if i < n_ids else "pool"
        look = appearance if i < n_ids else pool_appearance
        for cam, gain in zip(cameras, gains):
            p = params
            if color_jitter:
                p = IdentityParams(p.frequency, p.amp_x, p.amp_y, p.phase_xy,
                                   tuple(np.clip(np.add(p.top_color, rng.normal(0, color_jitter, 3)), 0, 255)),
                                   tuple(np.clip(np.add(p.bottom_color, rng.normal(0, color_jitter, 3)), 0, 255)))
            tracks = [_gait_tracklet(p, rng, noise, tracklet_length, int(rng.integers(0, 200)))
                      for _ in range(n_tracklets)]
            frames = _frames(p, rng, n_frames, look, color_noise, gain)
            mask = np.ones((CROP_SIZE[1], CROP_SIZE[0]), dtype=bool)
            seqs.append(Sequence(pid, cam, frames, tracks, mask))
    return Dataset(seqs, roles, name=f"synthetic-{seed}")


def gen_tsd_population(n_targets=9, seqs_per_target=3, n_distractors=27, seed=0, noise=0.05,
                       n_tracklets=120, n_frames=3, frequency_range=(0.5, 2.0)):
    """Single-scene variant: targets re-appear in changed clothing, plus distractors."""
    rng = np.random.default_rng(seed)
    people = draw_identities(n_targets + n_distractors, rng, frequency_range)
    seqs, roles = [], {}
    for i, params in enumerate(people):
        target = i < n_targets
        pid = f"t{i:03d}" if target else f"d{i - n_targets:03d}"
        roles[pid] = "target" if target else "distractor"
        for s in range(seqs_per_target if target else 1):
            outfit = params
            if s:  # clothing change between appearances
                outfit = IdentityParams(params.frequency, params.amp_x, params.amp_y,
                                        params.phase_xy,
                                        tuple(float(c) for c in rng.uniform(20, 235, 3)),
                                        tuple(float(c) for c in rng.uniform(20, 235, 3)))
            tracks = [_gait_tracklet(outfit, rng, noise, TRACKLET_LENGTH, int(rng.integers(0, 200)))
                      for _ in range(n_tracklets)]
            frames = _frames(outfit, rng, n_frames, "color", 0.0, 1.0)
            mask = np.ones((CROP_SIZE[1], CROP_SIZE[0]), dtype=bool)
            seqs.append(Sequence(pid, f"view{s}", frames, tracks, mask))
    return Dataset(seqs, roles, name=f"tsd-synthetic-{seed}")


def naive_distance(a, b):
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def brute_force_rank_oracle(probes, gallery, truth):
    """Match characteristic from explicit distances and a full sort.

    ``probes``/``gallery`` map ids to vectors; ties order by gallery position.
    """
    gids = list(gallery)
    M = [0.0] * len(gids)
    for pid, pf in probes.items():
        scored = sorted((naive_distance(pf, gallery[g]), j, g) for j, g in enumerate(gids))
        rank = [g for _, _, g in scored].index(truth[pid])
        M[rank] += 1.0
    return np.array(M) / len(probes)


def brute_force_rank_oracle_from_distances(values, probes, gallery, truth):
    M = [0.0] * len(gallery)
    for i, p in enumerate(probes):
        order = sorted(range(len(gallery)), key=lambda j: (values[i][j], j))
        M[[gallery[j] for j in order].index(truth[p])] += 1.0
    return np.array(M) / len(probes)


def naive_cmc(M):
    return np.array([sum(M[:r + 1]) for r in range(len(M))])


def naive_pur(M, n):
    entropy = sum(m * math.log(m) for m in M if m > 0)
    return (math.log(n) + entropy) / math.log(n)


def naive_min_max_fuse(list_of_values):
    rows, cols = len(list_of_values[0]), len(list_of_values[0][0])
    out = [[0.0] * cols for _ in range(rows)]
    for vals in list_of_values:
        flat = [v for row in vals for v in row]
        lo, hi = min(flat), max(flat)
        for i in range(rows):
            for j in range(cols):
                out[i][j] += (vals[i][j] - lo) / (hi - lo) if hi > lo else 0.0
    return np.array(out)

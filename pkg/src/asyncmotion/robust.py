"""RANSAC wrapper: hypothesis sampling, angular scoring, inlier refinement.

Each hypothesis is solved from a small sample (M_s tracks, n temporally
spread observations each) but scored on the full observations of every
candidate track via the mean angular residual between observed and predicted
bearings. The best hypothesis by inlier count (ties broken by mean inlier
residual, then iteration index) is refined by a full solve on its inliers.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import AsyncMotionError, InsufficientDataError, NoSolutionError
from .geometry import (
    AngularRate,
    BearingObservation,
    CameraIntrinsics,
    Track,
    TimestampModel,
    compensate,
    reference_time,
)
from .linsys import TrackBlocks, track_blocks
from .solver import MotionEstimate, point_for_track, solve

RESIDUAL_SENTINEL_DEG = 180.0


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 200
    sample_tracks: int = 4  # M_s
    sample_obs_per_track: int = 5  # n
    inlier_threshold_deg: float = 5.0
    early_stop_inlier_ratio: float = 0.9
    rng_seed: int = 0

    def __post_init__(self):
        if self.sample_tracks < 1 or self.sample_obs_per_track < 2:
            raise ValueError("need at least 1 track and 2 observations per sample")
        if not self.inlier_threshold_deg > 0:
            raise ValueError("inlier threshold must be positive")
        if not 0 < self.early_stop_inlier_ratio <= 1:
            raise ValueError("early-stop ratio must be in (0, 1]")


@dataclass
class RansacResult:
    estimate: MotionEstimate
    inlier_ids: Set[int]
    inlier_ratio: float
    iterations_run: int


def track_residual(
    bearings: Sequence[BearingObservation],
    velocity: np.ndarray,
    point: Optional[np.ndarray] = None,
    blocks: Optional[TrackBlocks] = None,
) -> float:
    """Mean angular residual (degrees) of a track against a motion estimate.

    Predicts the point in each observation frame as P - sum_s v^(s) t'^s / s!
    and compares the normalized prediction with the observed bearing. When
    ``point`` is not given it is triangulated from the track's own blocks.
    """
    v = np.atleast_2d(np.asarray(velocity, dtype=float))
    order = v.shape[0]
    if point is None:
        if blocks is None:
            blocks = track_blocks(bearings, order=order)
        point = point_for_track(blocks, v.ravel())
    f = np.array([b.f_prime for b in bearings])
    tp = np.array([b.t_prime for b in bearings])
    inv_fact = 1.0 / np.cumprod(np.arange(1, order + 1))
    weights = tp[:, None] ** np.arange(1, order + 1)[None, :] * inv_fact[None, :]
    pred = point[None, :] - weights @ v
    norms = np.linalg.norm(pred, axis=1)
    angles = np.full(len(bearings), math.radians(RESIDUAL_SENTINEL_DEG))
    ok = norms > 0
    cosang = np.clip(
        np.sum(f[ok] * pred[ok], axis=1) / (np.linalg.norm(f[ok], axis=1) * norms[ok]),
        -1.0,
        1.0,
    )
    angles[ok] = np.arccos(cosang)
    return math.degrees(float(angles.mean()))


def sample_hypothesis(
    tracks: Sequence[Track], config: RansacConfig, rng: np.random.Generator
) -> List[Track]:
    """Pick M_s tracks and n temporally stratified observations from each.

    The first and last observation of a track are always kept; the interior
    is split into equal index strata with one draw per stratum. Tracks with
    at most n observations contribute all of them.
    """
    eligible = [t for t in tracks if len(t) >= 2]
    if len(eligible) < config.sample_tracks:
        raise InsufficientDataError(
            f"need {config.sample_tracks} tracks with >= 2 observations, "
            f"have {len(eligible)}"
        )
    chosen = rng.choice(len(eligible), size=config.sample_tracks, replace=False)
    sampled = []
    for idx in sorted(chosen):
        trk = eligible[idx]
        n = config.sample_obs_per_track
        if len(trk) <= n:
            sampled.append(trk)
            continue
        interior = np.arange(1, len(trk) - 1)
        strata = np.array_split(interior, n - 2)
        picks = [0, len(trk) - 1] + [int(rng.choice(s)) for s in strata if len(s)]
        obs = [trk.observations[j] for j in sorted(set(picks))]
        sampled.append(Track(id=trk.id, observations=obs))
    return sampled


@dataclass
class _Hypothesis:
    estimate: MotionEstimate
    inlier_ids: Set[int]
    mean_residual: float
    iteration: int

    def better_than(self, other: "_Hypothesis") -> bool:
        if len(self.inlier_ids) != len(other.inlier_ids):
            return len(self.inlier_ids) > len(other.inlier_ids)
        if self.mean_residual != other.mean_residual:
            return self.mean_residual < other.mean_residual
        return self.iteration < other.iteration


def ransac(
    tracks: Sequence[Track],
    omega: AngularRate,
    intr: CameraIntrinsics,
    config: RansacConfig,
    model: Optional[TimestampModel] = None,
) -> RansacResult:
    """Robust solve: sample, hypothesize, score on full tracks, refit on inliers."""
    candidates = [t for t in tracks if len(t) >= 2]
    if len(candidates) < config.sample_tracks:
        raise InsufficientDataError(
            f"need at least {config.sample_tracks} usable tracks"
        )
    t_ref = reference_time(candidates)
    # scoring data is hypothesis independent: compensate and block each track once
    bearings: Dict[int, List[BearingObservation]] = {}
    blocks: Dict[int, TrackBlocks] = {}
    for trk in candidates:
        obs = compensate(trk, omega, t_ref, intr)
        bearings[trk.id] = obs
        blocks[trk.id] = track_blocks(obs, order=1, track_id=trk.id)

    best: Optional[_Hypothesis] = None
    iterations = 0
    for it in range(config.max_iterations):
        iterations = it + 1
        rng = np.random.default_rng([config.rng_seed, it])
        sample = sample_hypothesis(candidates, config, rng)
        try:
            est = solve(sample, omega, intr, model, t_ref=t_ref)
        except AsyncMotionError:
            continue
        if est.degenerate:
            continue
        inliers, residuals = set(), []
        for trk in candidates:
            r = track_residual(
                bearings[trk.id], est.v, blocks=blocks[trk.id]
            )
            if r < config.inlier_threshold_deg:
                inliers.add(trk.id)
                residuals.append(r)
        hyp = _Hypothesis(
            estimate=est,
            inlier_ids=inliers,
            mean_residual=float(np.mean(residuals)) if residuals else math.inf,
            iteration=it,
        )
        if best is None or hyp.better_than(best):
            best = hyp
        if len(inliers) / len(candidates) >= config.early_stop_inlier_ratio:
            break
    if best is None or not best.inlier_ids:
        raise NoSolutionError("no valid hypothesis produced by RANSAC")

    inlier_tracks = [t for t in candidates if t.id in best.inlier_ids]
    try:
        refined = solve(inlier_tracks, omega, intr, model, t_ref=t_ref)
        if refined.degenerate:
            refined = best.estimate
    except AsyncMotionError:
        refined = best.estimate
    return RansacResult(
        estimate=refined,
        inlier_ids=best.inlier_ids,
        inlier_ratio=len(best.inlier_ids) / len(candidates),
        iterations_run=iterations,
    )

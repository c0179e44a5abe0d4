"""Synthetic scenes, noise injection and batched trials for the noise studies.

Scenes follow the simulation protocol used throughout: a 640x480 camera with
320 px focal length, unit-speed motion in a random direction, and static
points drawn from a one-meter cube two meters ahead, observed over a short
window with uniformly sampled timestamps.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    AsyncMotionError,
    ExperimentError,
    GenerationError,
    InvalidInputError,
)
from .geometry import (
    AngularRate,
    CameraIntrinsics,
    Track,
    TrackObservation,
    so3_exp,
)
from .robust import RansacConfig, ransac
from .solver import solve, solve_with_known_accel

_MIN_DEPTH = 0.1  # meters; guards against points crossing the camera plane


@dataclass(frozen=True)
class NoiseConfig:
    pixel_sigma: float = 0.0  # px, isotropic Gaussian on observations
    timestamp_jitter: float = 0.0  # s; sigma (Gaussian) or half-width (uniform)
    jitter_uniform: bool = False
    omega_noise_dps: float = 0.0  # deg/s, RMS norm of the Gaussian omega offset

    def __post_init__(self):
        if min(self.pixel_sigma, self.timestamp_jitter, self.omega_noise_dps) < 0:
            raise InvalidInputError("noise magnitudes must be nonnegative")


@dataclass(frozen=True)
class SimConfig:
    width: int = 640
    height: int = 480
    focal: float = 320.0
    speed: float = 1.0  # m/s
    cube_size: float = 1.0  # m, side of the point volume
    cube_distance: float = 2.0  # m, center of the volume ahead of the camera
    window: float = 0.2  # s
    num_tracks: int = 20
    obs_per_track: int = 20
    trials: int = 1000
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    accel: Optional[Tuple[float, float, float]] = None  # m/s^2, constant
    omega_gt: Tuple[float, float, float] = (0.0, 0.0, 0.0)  # rad/s
    use_ransac: bool = False
    ransac: Optional[RansacConfig] = None
    seed: int = 0

    def __post_init__(self):
        if self.window <= 0 or self.num_tracks < 1 or self.obs_per_track < 2:
            raise InvalidInputError("window must be positive, M >= 1 and n >= 2")
        if self.trials < 1:
            raise InvalidInputError("need at least one trial")

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.focal,
            fy=self.focal,
            cx=self.width / 2,
            cy=self.height / 2,
            width=self.width,
            height=self.height,
        )

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


PRESETS = {
    "sparse": (5, 5),
    "moderate": (20, 20),
    "dense": (100, 50),
}


def preset_config(name: str, **overrides) -> SimConfig:
    """Named (tracks, observations) presets matching the noise-study legend."""
    try:
        m, n = PRESETS[name]
    except KeyError:
        raise InvalidInputError(f"unknown preset {name!r}") from None
    return SimConfig(num_tracks=m, obs_per_track=n, **overrides)


@dataclass
class Scene:
    v: np.ndarray  # (3,) ground-truth velocity at the reference time
    accel: Optional[np.ndarray]
    omega: np.ndarray  # (3,) ground-truth angular rate
    points: np.ndarray  # (M, 3) in the reference frame
    tracks: List[Track]
    t_ref: float  # reference time the scene was generated around


def _project(
    p_cam: np.ndarray, intr: CameraIntrinsics
) -> Optional[np.ndarray]:
    if p_cam[2] < _MIN_DEPTH:
        return None
    u = intr.fx * p_cam[0] / p_cam[2] + intr.cx
    v = intr.fy * p_cam[1] / p_cam[2] + intr.cy
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        return None
    return np.array([u, v])


def generate_scene(config: SimConfig, rng: np.random.Generator) -> Scene:
    """Exact perspective projections of random points along the analytic trajectory."""
    intr = config.intrinsics()
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    v = config.speed * direction
    a = None if config.accel is None else np.asarray(config.accel, dtype=float)
    omega = np.asarray(config.omega_gt, dtype=float)
    t_ref = config.window / 2
    tracks = []
    points = np.empty((config.num_tracks, 3))
    half = config.cube_size / 2
    for i in range(config.num_tracks):
        for _ in range(1000):
            point = rng.uniform(-half, half, size=3) + np.array(
                [0.0, 0.0, config.cube_distance]
            )
            times = np.sort(rng.uniform(0.0, config.window, size=config.obs_per_track))
            if np.any(np.diff(times) <= 0):
                continue
            obs = []
            for t in times:
                tp = t - t_ref
                pos = v * tp if a is None else v * tp + 0.5 * a * tp**2
                p_cam = so3_exp(omega * tp).T @ (point - pos)
                pix = _project(p_cam, intr)
                if pix is None:
                    break
                obs.append(TrackObservation(x=pix, t=float(t)))
            if len(obs) == config.obs_per_track:
                tracks.append(Track(id=i, observations=obs))
                points[i] = point
                break
        else:
            raise GenerationError(
                f"could not place visible point {i} in 1000 attempts"
            )
    return Scene(v=v, accel=a, omega=omega, points=points, tracks=tracks, t_ref=t_ref)


def add_noise(
    tracks: Sequence[Track],
    omega: np.ndarray,
    noise: NoiseConfig,
    rng: np.random.Generator,
) -> Tuple[List[Track], AngularRate]:
    """Perturb observations and the angular rate handed to the solver.

    Pixel noise is isotropic Gaussian, timestamp jitter is zero-mean (Gaussian
    or uniform) with a clip that keeps per-track timestamps strictly
    increasing, and the omega perturbation is one constant Gaussian offset per
    call, matching the constant-rate motion model.
    """
    noisy = []
    for trk in tracks:
        pix = trk.pixels
        times = trk.times
        if noise.pixel_sigma > 0:
            pix = pix + rng.normal(0.0, noise.pixel_sigma, size=pix.shape)
        if noise.timestamp_jitter > 0:
            if noise.jitter_uniform:
                jit = rng.uniform(
                    -noise.timestamp_jitter, noise.timestamp_jitter, size=times.shape
                )
            else:
                jit = rng.normal(0.0, noise.timestamp_jitter, size=times.shape)
            times = times + jit
            for j in range(1, len(times)):
                if times[j] <= times[j - 1]:
                    times[j] = times[j - 1] + 1e-9
        noisy.append(
            Track(
                id=trk.id,
                observations=[
                    TrackObservation(x=pix[j], t=float(times[j]))
                    for j in range(len(trk))
                ],
            )
        )
    w = np.asarray(omega, dtype=float)
    if noise.omega_noise_dps > 0:
        # per-axis sigma chosen so the perturbation vector's RMS norm equals
        # the configured level
        sigma = math.radians(noise.omega_noise_dps) / math.sqrt(3.0)
        w = w + rng.normal(0.0, sigma, size=3)
    return noisy, AngularRate(omega=w)


def inject_outliers(
    tracks: Sequence[Track],
    fraction: float,
    angle_deg: float,
    rng: np.random.Generator,
) -> Tuple[List[Track], List[int]]:
    """Corrupt a random subset of tracks by rotating their image-plane motion.

    Each selected track has its pixel displacements from the first observation
    rotated by angle_deg about that anchor, which preserves track length and
    timing while breaking consistency with the true motion. Returns the new
    track list and the ids of the corrupted tracks.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InvalidInputError("outlier fraction must be in [0, 1]")
    n_out = int(round(fraction * len(tracks)))
    chosen = set(rng.choice(len(tracks), size=n_out, replace=False).tolist())
    theta = math.radians(angle_deg)
    rot = np.array(
        [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    )
    out, ids = [], []
    for k, trk in enumerate(tracks):
        if k not in chosen:
            out.append(trk)
            continue
        anchor = trk.pixels[0]
        pix = anchor + (trk.pixels - anchor) @ rot.T
        out.append(
            Track(
                id=trk.id,
                observations=[
                    TrackObservation(x=pix[j], t=obs.t)
                    for j, obs in enumerate(trk.observations)
                ],
            )
        )
        ids.append(trk.id)
    return out, ids


def velocity_error(v_hat: np.ndarray, v_gt: np.ndarray) -> float:
    """Angular error between estimated and true velocity, degrees in [0, 180]."""
    v_hat = np.asarray(v_hat, dtype=float)
    v_gt = np.asarray(v_gt, dtype=float)
    n1, n2 = np.linalg.norm(v_hat), np.linalg.norm(v_gt)
    if n1 == 0.0 or n2 == 0.0:
        raise InvalidInputError("velocity error undefined for zero vectors")
    c = np.clip(float(v_hat @ v_gt) / (n1 * n2), -1.0, 1.0)
    return math.degrees(math.acos(c))


@dataclass
class TrialStats:
    errors_deg: np.ndarray  # per successful trial
    failures: int
    trials: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors_deg))

    @property
    def median(self) -> float:
        return float(np.median(self.errors_deg))

    @property
    def p25(self) -> float:
        return float(np.percentile(self.errors_deg, 25))

    @property
    def p75(self) -> float:
        return float(np.percentile(self.errors_deg, 75))


def run_trial(config: SimConfig, trial: int) -> float:
    """One generate -> noise -> solve cycle; returns the velocity error in degrees."""
    rng = np.random.default_rng([config.seed, trial])
    scene = generate_scene(config, rng)
    noisy, omega_hat = add_noise(scene.tracks, scene.omega, config.noise, rng)
    if config.use_ransac:
        rc = config.ransac or RansacConfig()
        rc = replace(rc, rng_seed=config.seed * 100003 + trial)
        result = ransac(noisy, omega_hat, config.intrinsics(), rc)
        est = result.estimate
    elif scene.accel is not None:
        est = solve_with_known_accel(
            noisy, omega_hat, scene.accel, config.intrinsics()
        )
    else:
        est = solve(noisy, omega_hat, config.intrinsics())
    if est.degenerate:
        raise ExperimentError(est.degenerate_reason or "degenerate estimate")
    # express the ground truth in the solver's reference frame: the velocity
    # changes with the reference time under acceleration, and rotates with the
    # scene when omega is nonzero
    dt = est.t_ref - scene.t_ref
    v_gt = scene.v if scene.accel is None else scene.v + scene.accel * dt
    v_gt = so3_exp(scene.omega * dt).T @ v_gt
    return velocity_error(est.velocity, v_gt)


def run_trials(config: SimConfig) -> TrialStats:
    """Repeat trials with per-trial RNG streams and aggregate the error stats."""
    errors, failures = [], 0
    for trial in range(config.trials):
        try:
            errors.append(run_trial(config, trial))
        except AsyncMotionError:
            failures += 1
    if failures > config.trials // 2:
        raise ExperimentError(
            f"{failures} of {config.trials} trials failed; configuration unusable"
        )
    return TrialStats(
        errors_deg=np.array(errors), failures=failures, trials=config.trials
    )


CSV_HEADER = (
    "config_hash,preset,pixel_sigma_px,timestamp_jitter_s,omega_noise_dps,"
    "trials,mean_deg,median_deg,p25_deg,p75_deg,failures"
)


def stats_csv_row(config: SimConfig, stats: TrialStats, preset: str = "custom") -> str:
    n = config.noise
    return (
        f"{config.config_hash()},{preset},{n.pixel_sigma:.17g},"
        f"{n.timestamp_jitter:.17g},{n.omega_noise_dps:.17g},{config.trials},"
        f"{stats.mean:.17g},{stats.median:.17g},{stats.p25:.17g},"
        f"{stats.p75:.17g},{stats.failures}"
    )

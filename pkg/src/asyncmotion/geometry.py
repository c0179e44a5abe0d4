"""Camera model, bearing vectors, SO(3) exponential and timestamp handling.

Conventions: camera frame is right-handed with z along the optical axis,
pixels are (u, v) with v increasing downwards (v doubles as the sensor row
for rolling-shutter timestamp correction). All timestamps are seconds.
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np

from .errors import DegenerateTrackError, InvalidInputError

_SMALL_ANGLE = 1e-8


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError("principal point must lie inside the sensor")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class TrackObservation:
    x: np.ndarray  # (2,) pixel coordinates
    t: float  # absolute timestamp, seconds

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.shape != (2,) or not np.all(np.isfinite(x)) or not np.isfinite(self.t):
            raise InvalidInputError("observation must be a finite (u, v, t)")


@dataclass
class Track:
    id: int
    observations: List[TrackObservation] = field(default_factory=list)

    def __post_init__(self):
        ts = [o.t for o in self.observations]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError(f"track {self.id}: timestamps must be nondecreasing")
        if len(set(ts)) != len(ts):
            raise InvalidInputError(f"track {self.id}: duplicate timestamps")

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def times(self) -> np.ndarray:
        return np.array([o.t for o in self.observations])

    @property
    def pixels(self) -> np.ndarray:
        return np.array([o.x for o in self.observations])


@dataclass(frozen=True)
class BearingObservation:
    f_prime: np.ndarray  # unit 3-vector, rotation compensated
    t_prime: float  # timestamp relative to the reference time


@dataclass(frozen=True)
class AngularRate:
    omega: np.ndarray  # (3,) rad/s, constant over the window

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", w)
        if w.shape != (3,) or not np.all(np.isfinite(w)):
            raise InvalidInputError("angular rate must be a finite 3-vector")


# --- timestamp models -------------------------------------------------------


@dataclass(frozen=True)
class GlobalShutter:
    """All pixels of a frame share the frame time plus an exposure-midpoint offset."""

    offset: float = 0.0


@dataclass(frozen=True)
class RollingShutter:
    """Row-dependent capture time: row y is delayed by sign * y/(H-1) * t_rs."""

    t_rs: float  # seconds to scan the full frame
    sign: int = 1

    def __post_init__(self):
        if not self.t_rs > 0:
            raise InvalidInputError("rolling-shutter scan time must be positive")


@dataclass(frozen=True)
class Asynchronous:
    """Every observation already carries its own capture time."""


TimestampModel = Union[GlobalShutter, RollingShutter, Asynchronous]


def assign_timestamp(
    model: TimestampModel, frame_time: float, x: np.ndarray, height: int
) -> float:
    """Capture time of the observation at pixel ``x`` under the given shutter model."""
    if isinstance(model, GlobalShutter):
        return frame_time + model.offset
    if isinstance(model, RollingShutter):
        y = float(np.asarray(x)[1])
        if not (0 <= y < height):
            raise InvalidInputError(f"row {y} outside sensor of height {height}")
        return frame_time + model.sign * (y / (height - 1)) * model.t_rs
    if isinstance(model, Asynchronous):
        return frame_time
    raise InvalidInputError(f"unknown timestamp model {model!r}")


# --- bearings and rotations -------------------------------------------------


def pixel_to_bearing(x: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Unit bearing vector K^-1 [u, v, 1] / ||.|| of a pixel observation."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("pixel coordinates must be finite")
    f = np.array([(x[0] - intr.cx) / intr.fx, (x[1] - intr.cy) / intr.fy, 1.0])
    return f / np.linalg.norm(f)


def pixels_to_bearings(pixels: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Vectorized pixel_to_bearing over an (N, 2) pixel array."""
    pixels = np.asarray(pixels, dtype=float)
    if not np.all(np.isfinite(pixels)):
        raise InvalidInputError("pixel coordinates must be finite")
    f = np.empty((len(pixels), 3))
    f[:, 0] = (pixels[:, 0] - intr.cx) / intr.fx
    f[:, 1] = (pixels[:, 1] - intr.cy) / intr.fy
    f[:, 2] = 1.0
    return f / np.linalg.norm(f, axis=1, keepdims=True)


def skew(w: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rotation matrix exp([w]_x) via Rodrigues, with a series fallback near zero."""
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("rotation vector must be finite")
    theta = np.linalg.norm(w)
    W = skew(w)
    if theta < _SMALL_ANGLE:
        # second-order series, exact to machine precision at this magnitude
        return np.eye(3) + W + 0.5 * W @ W
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * W
        + ((1.0 - np.cos(theta)) / theta**2) * W @ W
    )


def so3_exp_batch(ws: np.ndarray) -> np.ndarray:
    """exp([w]_x) for each row of an (N, 3) array, returned as (N, 3, 3)."""
    ws = np.asarray(ws, dtype=float)
    n = len(ws)
    theta = np.linalg.norm(ws, axis=1)
    W = np.zeros((n, 3, 3))
    W[:, 0, 1] = -ws[:, 2]
    W[:, 0, 2] = ws[:, 1]
    W[:, 1, 0] = ws[:, 2]
    W[:, 1, 2] = -ws[:, 0]
    W[:, 2, 0] = -ws[:, 1]
    W[:, 2, 1] = ws[:, 0]
    W2 = W @ W
    small = theta < _SMALL_ANGLE
    a = np.empty(n)
    b = np.empty(n)
    t = theta[~small]
    a[~small] = np.sin(t) / t
    b[~small] = (1.0 - np.cos(t)) / t**2
    a[small] = 1.0
    b[small] = 0.5
    return np.eye(3) + a[:, None, None] * W + b[:, None, None] * W2


def compensate(
    track: Track,
    omega: Union[AngularRate, Sequence[np.ndarray]],
    t_s: float,
    intr: CameraIntrinsics,
) -> List[BearingObservation]:
    """Rotation-compensated unit bearings with timestamps relative to ``t_s``.

    ``omega`` is either a single constant angular rate or a sequence of
    higher-order rates w^(1..S); the compensating rotation is
    exp([sum_s w^(s) t'^s / s!]_x).
    """
    if len(track) < 2:
        raise DegenerateTrackError(f"track {track.id} has fewer than 2 observations")
    omegas = [omega.omega] if isinstance(omega, AngularRate) else [
        np.asarray(w, dtype=float) for w in omega
    ]
    t_prime = track.times - t_s
    f = pixels_to_bearings(track.pixels, intr)
    rotvec = np.zeros((len(track), 3))
    fact = 1.0
    for s, w in enumerate(omegas, start=1):
        fact *= s
        rotvec += np.outer(t_prime**s / fact, w)
    f_rot = np.einsum("nij,nj->ni", so3_exp_batch(rotvec), f)
    return [
        BearingObservation(f_prime=f_rot[j], t_prime=float(t_prime[j]))
        for j in range(len(track))
    ]


def reference_time(tracks: Sequence[Track]) -> float:
    """Midpoint of the earliest and latest observation timestamps."""
    chunks = [t.times for t in tracks if len(t)]
    if not chunks:
        raise InvalidInputError("no observations to derive a reference time from")
    ts = np.concatenate(chunks)
    return 0.5 * (ts.min() + ts.max())

"""Velocity / structure recovery from the reduced system, plus the dense oracle.

The homogeneous path recovers the unit-normalized stack of motion rates as the
null direction of B and back-substitutes per-track 3D points. The
known-acceleration path solves the inhomogeneous system B v = d, which makes
the result metric and unique (no sign ambiguity).
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    AmbiguousSignError,
    DegenerateTrackError,
    InvalidInputError,
    NoSolutionError,
    OracleTooLargeError,
    ScaleUnobservableError,
    UnderconstrainedError,
)
from .geometry import (
    AngularRate,
    CameraIntrinsics,
    Track,
    TimestampModel,
    compensate,
    reference_time,
    skew,
)
from .linsys import (
    DEFAULT_EPS_RANK,
    SchurMatrix,
    TrackBlocks,
    accumulate_schur,
    rank_check_F,
    track_blocks,
)

MAX_ORDER = 4
_ORACLE_MAX_ENTRIES = 10**7


class Minimality(enum.Enum):
    UNDERCONSTRAINED = "underconstrained"
    MINIMAL = "minimal"
    OVERCONSTRAINED = "overconstrained"


@dataclass(frozen=True)
class MinimalityClass:
    n_tracks: int
    obs_per_track: Tuple[int, ...]
    order: int
    classification: Minimality


@dataclass(frozen=True)
class OrderSInputs:
    order: int
    omegas: Sequence[np.ndarray]  # w^(1..S), rad/s^s

    def __post_init__(self):
        if not (1 <= self.order <= MAX_ORDER):
            raise InvalidInputError(f"expansion order must be in [1, {MAX_ORDER}]")
        ws = tuple(np.asarray(w, dtype=float) for w in self.omegas)
        if len(ws) != self.order or any(
            w.shape != (3,) or not np.all(np.isfinite(w)) for w in ws
        ):
            raise InvalidInputError("need one finite angular rate per order")
        object.__setattr__(self, "omegas", ws)


@dataclass
class MotionEstimate:
    v: np.ndarray  # (S, 3); unit-normalized stack if not metric
    points: Dict[int, np.ndarray]  # track id -> estimated 3D point
    singular_values: np.ndarray  # spectrum of B
    t_ref: float
    metric: bool = False
    degenerate: bool = False
    degenerate_reason: Optional[str] = None
    sign_flipped: bool = False
    dropped_tracks: List[int] = field(default_factory=list)

    @property
    def velocity(self) -> np.ndarray:
        """First-order rate v^(1)."""
        return self.v[0]

    @property
    def order(self) -> int:
        return self.v.shape[0]


def classify_minimality(
    n_tracks: int, obs_per_track: Sequence[int], order: int = 1
) -> MinimalityClass:
    """Constraint counting: 2N independent equations vs 3M + 3S - 1 unknowns.

    Minimal configurations are exactly M = 3S or M = 3S - 1 with two
    observations per track (N = 2M); anything with fewer constraints than
    unknowns, or fewer than two observations somewhere, is underconstrained.
    """
    obs = tuple(int(n) for n in obs_per_track)
    if n_tracks < 1 or len(obs) != n_tracks or any(n < 1 for n in obs):
        raise InvalidInputError("need a positive observation count per track")
    n_total = sum(obs)
    if (
        any(n < 2 for n in obs)
        or 2 * n_total < 3 * n_tracks + 3 * order - 1
        or n_total < 2 * n_tracks
    ):
        cls = Minimality.UNDERCONSTRAINED
    elif n_total == 2 * n_tracks and n_tracks in (3 * order, 3 * order - 1):
        cls = Minimality.MINIMAL
    else:
        cls = Minimality.OVERCONSTRAINED
    return MinimalityClass(
        n_tracks=n_tracks, obs_per_track=obs, order=order, classification=cls
    )


def solve_velocity(
    schur: SchurMatrix, eps_rank: float = DEFAULT_EPS_RANK
) -> Tuple[np.ndarray, np.ndarray, bool]:
    """Unit null direction of B via SVD.

    Returns (v_hat, singular_values, degenerate). The estimate is degenerate
    when the second-smallest singular value is below eps_rank * sigma_1, i.e.
    the null direction is not unique.
    """
    b = schur.b
    if not np.all(np.isfinite(b)):
        raise InvalidInputError("reduced matrix contains non-finite entries")
    _, s, vt = np.linalg.svd(b)
    v_hat = vt[-1]
    degenerate = bool(s[-2] < eps_rank * s[0])
    return v_hat, s, degenerate


def solve_points(
    blocks: Sequence[TrackBlocks], v_hat: np.ndarray, shift: float = 0.0
) -> List[np.ndarray]:
    """Back-substitute P_i = -(F^T F - shift I)^-1 F^T G v_hat per track."""
    v_hat = np.asarray(v_hat, dtype=float)
    if shift == 0.0:
        return [-(blk.ftf_inverse() @ (blk.ftg_flat() @ v_hat)) for blk in blocks]
    eye = shift * np.eye(3)
    return [
        -np.linalg.solve(blk.ftf - eye, blk.ftg_flat() @ v_hat) for blk in blocks
    ]


def _b_shifted(blocks: Sequence[TrackBlocks], lam: float) -> np.ndarray:
    """B(lam) = M_D - lam I - sum_i C_i^T (F_i^T F_i - lam I)^-1 C_i."""
    order = blocks[0].order
    b = -lam * np.eye(3 * order)
    eye3 = lam * np.eye(3)
    for blk in blocks:
        c = blk.ftg_flat()
        b += blk.gtg_flat() - c.T @ np.linalg.solve(blk.ftf - eye3, c)
    return 0.5 * (b + b.T)


def _b_shifted_derivative(
    blocks: Sequence[TrackBlocks], lam: float, v: np.ndarray
) -> float:
    """d/dlam of v^T B(lam) v, used for the Newton step of the shift search."""
    eye3 = lam * np.eye(3)
    total = -float(v @ v)
    for blk in blocks:
        y = np.linalg.solve(blk.ftf - eye3, blk.ftg_flat() @ v)
        total -= float(y @ y)
    return total


def refine_velocity_tls(
    blocks: Sequence[TrackBlocks],
    b0: np.ndarray,
    rel_tol: float = 1e-14,
    max_iter: int = 80,
) -> Tuple[np.ndarray, float]:
    """Total-least-squares null direction of the full stacked system, via Schur.

    The plain null vector of B minimizes the residual under a unit-velocity
    constraint, which profiles out the per-track points and picks up a noise
    bias that grows quadratically with the measurement noise. The joint
    normalization over points and rates (the smallest singular vector of the
    stacked system) does not. That eigenpair is recovered here without ever
    forming the dense system: lam is the smallest root of
    min-eig(B(lam)) = 0 with B(lam) the shifted Schur complement, found by a
    safeguarded Newton iteration that is O(M) per evaluation. Noiseless data
    has lam = 0 and this reduces exactly to the null vector of B.

    Returns (v_hat, lam).
    """
    vals, vecs = np.linalg.eigh(b0)
    mu0, v0 = vals[0], vecs[:, 0]
    scale = max(vals[-1], 1.0)
    if mu0 <= rel_tol * scale:
        return v0, 0.0
    # Newton on min-eig(B(lam)) = 0, clamped to (0, mu0]; the first branch
    # root is bounded above by mu0 (Rayleigh quotient at the lam=0 vector).
    # Weak per-track structure modes show up as narrow pole/notch pairs that
    # Newton steps across, which keeps the iteration on the motion-dominant
    # branch rather than near-degenerate point modes.
    lam, mu, v = 0.0, mu0, v0
    for _ in range(max_iter):
        g = _b_shifted_derivative(blocks, lam, v)
        lam = min(max(lam - mu / g, 0.0), mu0)
        vals, vecs = np.linalg.eigh(_b_shifted(blocks, lam))
        mu, v = vals[0], vecs[:, 0]
        if abs(mu) <= 1e-13 * scale:
            return v, lam
    # no convergence: fall back to the unshifted null direction
    return v0, 0.0


def point_for_track(blocks: TrackBlocks, v_hat: np.ndarray) -> np.ndarray:
    return solve_points([blocks], v_hat)[0]


def disambiguate_sign(
    points: Sequence[np.ndarray], v_hat: np.ndarray
) -> Tuple[List[np.ndarray], np.ndarray, bool]:
    """Resolve the +-v pair by majority vote over point depths.

    Flips everything when most depths are negative; an exact tie (including
    all points on the camera plane) raises AmbiguousSignError.
    """
    if not len(points):
        raise InvalidInputError("need at least one point for the depth vote")
    z = np.array([p[2] for p in points])
    n_pos = int(np.sum(z > 0))
    n_neg = int(np.sum(z < 0))
    if n_pos == n_neg:
        raise AmbiguousSignError("depth vote is an exact tie")
    if n_neg > n_pos:
        return [-p for p in points], -np.asarray(v_hat), True
    return list(points), np.asarray(v_hat), False


def _prepare_tracks(
    tracks: Sequence[Track],
    omegas: Sequence[np.ndarray],
    intr: CameraIntrinsics,
    order: int,
    eps_rank: float,
    t_ref: Optional[float],
) -> Tuple[List[TrackBlocks], List[int], float]:
    usable = [t for t in tracks if len(t) >= 2]
    if not usable:
        raise NoSolutionError("no track has two or more observations")
    if t_ref is None:
        t_ref = reference_time(usable)
    blocks, dropped = [], [t.id for t in tracks if len(t) < 2]
    for trk in usable:
        bearings = compensate(trk, omegas, t_ref, intr)
        blk = track_blocks(bearings, order=order, track_id=trk.id)
        if rank_check_F(blk, eps_rank).ok:
            blocks.append(blk)
        else:
            dropped.append(trk.id)
    if not blocks:
        raise NoSolutionError("all tracks failed the rank check")
    return blocks, dropped, t_ref


def solve_order_s(
    tracks: Sequence[Track],
    inputs: OrderSInputs,
    intr: CameraIntrinsics,
    model: Optional[TimestampModel] = None,
    eps_rank: float = DEFAULT_EPS_RANK,
    t_ref: Optional[float] = None,
) -> MotionEstimate:
    """Homogeneous order-S solve: unit-normalized stack (v^(1), ..., v^(S)).

    The pipeline is: rotation compensation, per-track blocks and rank checks,
    Schur accumulation, SVD null direction, point back-substitution, depth
    vote. ``model`` is accepted for interface symmetry; timestamp assignment
    is applied when tracks are ingested from files.
    """
    order = inputs.order
    usable = [t for t in tracks if len(t) >= 2]
    if not usable:
        raise NoSolutionError("no track has two or more observations")
    counting = classify_minimality(len(usable), [len(t) for t in usable], order)
    if counting.classification is Minimality.UNDERCONSTRAINED:
        raise UnderconstrainedError(
            f"{sum(len(t) for t in usable)} observations over {len(usable)} tracks "
            f"cannot determine an order-{order} motion"
        )
    blocks, dropped, t_ref = _prepare_tracks(
        tracks, inputs.omegas, intr, order, eps_rank, t_ref
    )
    schur = accumulate_schur(blocks)
    v_flat, svals, degenerate = solve_velocity(schur, eps_rank)
    shift = 0.0
    if not degenerate:
        v_flat, shift = refine_velocity_tls(blocks, schur.b)
    points = solve_points(blocks, v_flat, shift)
    reason = "null direction of B is not unique" if degenerate else None
    sign_flipped = False
    if not degenerate:
        try:
            points, v_flat, sign_flipped = disambiguate_sign(points, v_flat)
        except AmbiguousSignError as exc:
            degenerate, reason = True, str(exc)
    return MotionEstimate(
        v=v_flat.reshape(order, 3),
        points={blk.track_id: p for blk, p in zip(blocks, points)},
        singular_values=svals,
        t_ref=t_ref,
        degenerate=degenerate,
        degenerate_reason=reason,
        sign_flipped=sign_flipped,
        dropped_tracks=dropped,
    )


def solve(
    tracks: Sequence[Track],
    omega: AngularRate,
    intr: CameraIntrinsics,
    model: Optional[TimestampModel] = None,
    eps_rank: float = DEFAULT_EPS_RANK,
    t_ref: Optional[float] = None,
) -> MotionEstimate:
    """Constant-velocity (order-1) structure and motion solve."""
    return solve_order_s(
        tracks,
        OrderSInputs(order=1, omegas=[omega.omega]),
        intr,
        model,
        eps_rank=eps_rank,
        t_ref=t_ref,
    )


def solve_with_known_accel(
    tracks: Sequence[Track],
    omega: AngularRate,
    accel: np.ndarray,
    intr: CameraIntrinsics,
    model: Optional[TimestampModel] = None,
    eps_rank: float = DEFAULT_EPS_RANK,
    t_ref: Optional[float] = None,
    pivot_rtol: float = 1e-12,
) -> MotionEstimate:
    """Metric velocity and points with the linear acceleration given.

    Moving the (1/2) t'^2 [f']_x a terms to the right-hand side turns the
    system inhomogeneous: B v = d with
    d = sum_i G_i^T b_i - G_i^T F_i (F^T F)^-1 F_i^T b_i. Scale becomes
    observable and the solution is unique, so no depth vote is performed.
    """
    a = np.asarray(accel, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise InvalidInputError("acceleration must be a finite 3-vector")
    if np.linalg.norm(a) == 0.0:
        raise ScaleUnobservableError(
            "zero acceleration: right-hand side vanishes and scale is unobservable"
        )
    # order-2 blocks provide the t'^2 and t'^3 weighted sums:
    #   F^T b_i = -F^T G^(2) a,  G^T b_i = -(G^(1)T G^(2)) a
    blocks, dropped, t_ref = _prepare_tracks(
        tracks, [omega.omega], intr, 2, eps_rank, t_ref
    )
    b_mat = np.zeros((3, 3))
    d = np.zeros(3)
    ftb = {}
    for blk in blocks:
        ftf_inv = blk.ftf_inverse()
        c = blk.ftg[0]  # F^T G^(1)
        b_mat += blk.gtg[0, 0] - c.T @ ftf_inv @ c
        fb = -(blk.ftg[1] @ a)
        gb = -(blk.gtg[0, 1] @ a)
        d += gb - c.T @ (ftf_inv @ fb)
        ftb[blk.track_id] = (fb, c, ftf_inv)
    b_mat = 0.5 * (b_mat + b_mat.T)
    svals = np.linalg.svd(b_mat, compute_uv=False)
    if svals[-1] < pivot_rtol * svals[0]:
        raise DegenerateTrackError("reduced matrix B is singular")
    v_hat = np.linalg.solve(b_mat, d)
    points = {
        tid: ftf_inv @ (fb - c @ v_hat) for tid, (fb, c, ftf_inv) in ftb.items()
    }
    return MotionEstimate(
        v=v_hat.reshape(1, 3),
        points=points,
        singular_values=svals,
        t_ref=t_ref,
        metric=True,
        dropped_tracks=dropped,
    )


def full_svd_reference(
    tracks: Sequence[Track],
    omegas: Sequence[np.ndarray],
    intr: CameraIntrinsics,
    model: Optional[TimestampModel] = None,
    order: int = 1,
    t_ref: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Dense reference solve on the explicitly stacked system (test oracle).

    Builds the full 3N x (3M + 3S) matrix with rows [f']_x for the point
    columns and -(t'^s/s!) [f']_x for the rate columns, and returns the right
    singular vector of the smallest singular value together with the full
    singular value spectrum.
    """
    usable = [t for t in tracks if len(t) >= 2]
    if not usable:
        raise NoSolutionError("no track has two or more observations")
    if t_ref is None:
        t_ref = reference_time(usable)
    m = len(usable)
    n = sum(len(t) for t in usable)
    cols = 3 * m + 3 * order
    if 3 * n * cols > _ORACLE_MAX_ENTRIES:
        raise OracleTooLargeError(f"dense system of {3 * n}x{cols} exceeds the guard")
    a = np.zeros((3 * n, cols))
    row = 0
    for i, trk in enumerate(usable):
        for obs in compensate(trk, omegas, t_ref, intr):
            fx = skew(obs.f_prime)
            a[row : row + 3, 3 * i : 3 * i + 3] = fx
            fact = 1.0
            for s in range(1, order + 1):
                fact *= s
                a[row : row + 3, 3 * m + 3 * (s - 1) : 3 * m + 3 * s] = (
                    -(obs.t_prime**s / fact) * fx
                )
            row += 3
    _, svals, vt = np.linalg.svd(a)
    return vt[-1], svals


def angle_between(u: np.ndarray, v: np.ndarray) -> float:
    """Unsigned angle in radians between two nonzero vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise InvalidInputError("angle undefined for zero vectors")
    # half-angle form stays accurate near 0 and pi where arccos loses
    # precision, and works in any dimension
    uh, vh = u / nu, v / nv
    return 2.0 * math.atan2(
        np.linalg.norm(uh - vh), np.linalg.norm(uh + vh)
    )

"""Per-track constraint blocks and the accumulated reduced normal equations.

Each track contributes a stacked constraint [F_i  G_i^(1) ... G_i^(S)]
(P_i, v^(1..S)) = 0, with rows -(t'^s/s!) [f']_x for the velocity columns.
Only the 3x3 products of those stacks are ever materialized here; the dense
stacked matrix exists solely in the test oracles. The reduced system in the
motion rates is

    B = sum_i G_i^T G_i - G_i^T F_i (F_i^T F_i)^-1 F_i^T G_i

accumulated track by track, which keeps the cost linear in the number of
tracks. All products are linear combinations of ff^T - I per observation.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegenerateTrackError
from .geometry import BearingObservation

DEFAULT_EPS_RANK = 1e-9


def skew_squared(f: np.ndarray) -> np.ndarray:
    """[f]_x^2 = f f^T - ||f||^2 I, the only matrix primitive of the system."""
    f = np.asarray(f, dtype=float)
    return np.outer(f, f) - float(f @ f) * np.eye(3)


@dataclass
class TrackBlocks:
    """Cached 3x3 products of one track's stacked constraint matrices.

    ftf  = F^T F                 (3, 3)
    ftg  = [F^T G^(s)]_s         (S, 3, 3)
    gtg  = [G^(s)T G^(r)]_{s,r}  (S, S, 3, 3)
    """

    track_id: int
    ftf: np.ndarray
    ftg: np.ndarray
    gtg: np.ndarray
    n_obs: int
    _ftf_inv: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def order(self) -> int:
        return self.ftg.shape[0]

    def ftg_flat(self) -> np.ndarray:
        """F^T [G^(1) ... G^(S)] as a (3, 3S) matrix."""
        return np.concatenate(list(self.ftg), axis=1)

    def gtg_flat(self) -> np.ndarray:
        """The full (3S, 3S) grid of G^(s)T G^(r) blocks."""
        s = self.order
        return self.gtg.transpose(0, 2, 1, 3).reshape(3 * s, 3 * s)

    def ftf_inverse(self) -> np.ndarray:
        """(F^T F)^-1 via symmetric eigendecomposition, cached."""
        if self._ftf_inv is None:
            vals, vecs = np.linalg.eigh(self.ftf)
            if vals[0] <= 0 or vals[0] < 1e-14 * vals[-1]:
                raise DegenerateTrackError(
                    f"track {self.track_id}: F^T F is singular"
                )
            self._ftf_inv = (vecs / vals) @ vecs.T
        return self._ftf_inv

    def schur_term(self) -> np.ndarray:
        """This track's contribution to B, a (3S, 3S) matrix."""
        c = self.ftg_flat()
        return self.gtg_flat() - c.T @ self.ftf_inverse() @ c


class RankCheck(NamedTuple):
    ok: bool
    smallest: float
    largest: float


@dataclass
class SchurMatrix:
    b: np.ndarray  # (3S, 3S), symmetric PSD
    n_tracks: int

    @property
    def order(self) -> int:
        return self.b.shape[0] // 3


def track_blocks(
    bearings: Sequence[BearingObservation], order: int = 1, track_id: int = -1
) -> TrackBlocks:
    """Accumulate F^T F, F^T G^(s) and G^(s)T G^(r) for one track."""
    if len(bearings) < 2:
        raise DegenerateTrackError(f"track {track_id}: need at least 2 observations")
    if order < 1:
        raise ValueError("expansion order must be >= 1")
    f = np.array([b.f_prime for b in bearings])
    tp = np.array([b.t_prime for b in bearings])
    # W_j = f_j f_j^T - ||f_j||^2 I per observation
    norms = np.sum(f * f, axis=1)
    W = np.einsum("ni,nj->nij", f, f) - norms[:, None, None] * np.eye(3)
    inv_fact = 1.0 / np.cumprod(np.arange(1, order + 1))
    weights = tp[None, :] ** np.arange(1, order + 1)[:, None] * inv_fact[:, None]
    ftf = -W.sum(axis=0)
    ftg = np.einsum("sn,nij->sij", weights, W)
    gtg = -np.einsum("sn,rn,nij->srij", weights, weights, W)
    return TrackBlocks(
        track_id=track_id, ftf=ftf, ftg=ftg, gtg=gtg, n_obs=len(bearings)
    )


def rank_check_F(blocks: TrackBlocks, eps_rank: float = DEFAULT_EPS_RANK) -> RankCheck:
    """Full-rank test of F^T F: smallest eigenvalue relative to the largest."""
    vals = np.linalg.eigvalsh(blocks.ftf)
    smallest, largest = float(vals[0]), float(vals[-1])
    return RankCheck(ok=smallest > eps_rank * largest, smallest=smallest, largest=largest)


def accumulate_schur(all_blocks: List[TrackBlocks]) -> SchurMatrix:
    """Sum the per-track Schur terms into the reduced (3S, 3S) system."""
    if not all_blocks:
        raise DegenerateTrackError("no tracks to accumulate")
    order = all_blocks[0].order
    b = np.zeros((3 * order, 3 * order))
    for blk in all_blocks:
        if blk.order != order:
            raise ValueError("mixed expansion orders in accumulation")
        b += blk.schur_term()
    b = 0.5 * (b + b.T)
    return SchurMatrix(b=b, n_tracks=len(all_blocks))

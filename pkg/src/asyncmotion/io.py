"""CSV ingestion/serialization for tracks, IMU samples and intrinsics files."""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError
from .geometry import (
    CameraIntrinsics,
    Track,
    TrackObservation,
    TimestampModel,
    assign_timestamp,
)

_FLOAT_FMT = "%.17g"  # round-trips doubles exactly


def read_tracks_csv(path) -> List[Track]:
    """Read `track_id,t,u,v` rows into per-id tracks, sorted by time."""
    groups: Dict[int, List[Tuple[float, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"track_id", "t", "u", "v"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InvalidInputError(f"{path}: expected header track_id,t,u,v")
        for row in reader:
            groups.setdefault(int(row["track_id"]), []).append(
                (float(row["t"]), float(row["u"]), float(row["v"]))
            )
    tracks = []
    for tid in sorted(groups):
        rows = sorted(groups[tid])
        tracks.append(
            Track(
                id=tid,
                observations=[
                    TrackObservation(x=np.array([u, v]), t=t) for t, u, v in rows
                ],
            )
        )
    return tracks


def write_tracks_csv(tracks: Sequence[Track], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("track_id,t,u,v\n")
        for trk in tracks:
            for obs in trk.observations:
                fh.write(
                    f"{trk.id},{_FLOAT_FMT % obs.t},"
                    f"{_FLOAT_FMT % obs.x[0]},{_FLOAT_FMT % obs.x[1]}\n"
                )


@dataclass
class ImuData:
    t: np.ndarray  # (N,)
    w: np.ndarray  # (N, 3) rad/s
    a: Optional[np.ndarray]  # (N, 3) m/s^2 when present

    def window_mean_omega(self, t0: float, t1: float) -> np.ndarray:
        """Average angular rate over [t0, t1]; falls back to the full series."""
        mask = (self.t >= t0) & (self.t <= t1)
        return self.w[mask].mean(axis=0) if mask.any() else self.w.mean(axis=0)

    def window_mean_accel(self, t0: float, t1: float) -> Optional[np.ndarray]:
        if self.a is None:
            return None
        mask = (self.t >= t0) & (self.t <= t1)
        return self.a[mask].mean(axis=0) if mask.any() else self.a.mean(axis=0)


def read_imu_csv(path) -> ImuData:
    """Read `t,wx,wy,wz[,ax,ay,az]` with strictly increasing timestamps."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if not {"t", "wx", "wy", "wz"}.issubset(cols):
            raise InvalidInputError(f"{path}: expected header t,wx,wy,wz[,ax,ay,az]")
        has_a = {"ax", "ay", "az"}.issubset(cols)
        t, w, a = [], [], []
        for row in reader:
            t.append(float(row["t"]))
            w.append([float(row["wx"]), float(row["wy"]), float(row["wz"])])
            if has_a:
                a.append([float(row["ax"]), float(row["ay"]), float(row["az"])])
    t_arr = np.array(t)
    if np.any(np.diff(t_arr) <= 0):
        raise InvalidInputError(f"{path}: IMU timestamps must be strictly increasing")
    return ImuData(t=t_arr, w=np.array(w), a=np.array(a) if has_a else None)


def write_imu_csv(path, t, w, a=None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,wx,wy,wz" + (",ax,ay,az\n" if a is not None else "\n"))
        for i in range(len(t)):
            row = [_FLOAT_FMT % t[i]] + [_FLOAT_FMT % x for x in w[i]]
            if a is not None:
                row += [_FLOAT_FMT % x for x in a[i]]
            fh.write(",".join(row) + "\n")


def read_intrinsics_file(path) -> CameraIntrinsics:
    """key=value file with fx, fy, cx, cy, width, height."""
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    try:
        return CameraIntrinsics(
            fx=float(values["fx"]),
            fy=float(values["fy"]),
            cx=float(values["cx"]),
            cy=float(values["cy"]),
            width=int(values["width"]),
            height=int(values["height"]),
        )
    except KeyError as exc:
        raise InvalidInputError(f"{path}: missing intrinsics key {exc}") from None


def write_intrinsics_file(path, intr: CameraIntrinsics) -> None:
    Path(path).write_text(
        f"fx={_FLOAT_FMT % intr.fx}\nfy={_FLOAT_FMT % intr.fy}\n"
        f"cx={_FLOAT_FMT % intr.cx}\ncy={_FLOAT_FMT % intr.cy}\n"
        f"width={intr.width}\nheight={intr.height}\n"
    )


def apply_timestamp_model(
    tracks: Sequence[Track], model: TimestampModel, height: int
) -> List[Track]:
    """Rewrite observation timestamps according to the shutter model."""
    out = []
    for trk in tracks:
        obs = [
            TrackObservation(x=o.x, t=assign_timestamp(model, o.t, o.x, height))
            for o in trk.observations
        ]
        obs.sort(key=lambda o: o.t)
        out.append(Track(id=trk.id, observations=obs))
    return out


def track_length_px(track: Track) -> float:
    """Endpoint displacement of a track in pixels."""
    if len(track) < 2:
        return 0.0
    return float(
        np.linalg.norm(track.observations[-1].x - track.observations[0].x)
    )


def window_tracks(
    tracks: Sequence[Track], t0: float, t1: float
) -> List[Track]:
    """Restrict tracks to observations with t in [t0, t1)."""
    out = []
    for trk in tracks:
        obs = [o for o in trk.observations if t0 <= o.t < t1]
        if len(obs) >= 2:
            out.append(Track(id=trk.id, observations=obs))
    return out

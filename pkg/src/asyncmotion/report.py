"""Matplotlib rendering of simulation sweep results next to the CSV output."""

from typing import Dict, List, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sim import SimConfig, TrialStats  # noqa: E402

# one sweep cell: (preset name, config, stats)
SweepRow = Tuple[str, SimConfig, TrialStats]

_AXES = [
    ("pixel_sigma_px", lambda c: c.noise.pixel_sigma, "pixel noise [px]"),
    ("timestamp_jitter_s", lambda c: c.noise.timestamp_jitter, "timestamp jitter [s]"),
    ("omega_noise_dps", lambda c: c.noise.omega_noise_dps, "angular rate noise [deg/s]"),
]


def _varying_axis(rows: List[SweepRow]):
    for key, getter, label in _AXES:
        if len({getter(cfg) for _, cfg, _ in rows}) > 1:
            return getter, label
    # constant sweep: fall back to the first axis
    return _AXES[0][1], _AXES[0][2]


def render_sweep_figure(rows: List[SweepRow], path: str) -> None:
    """Median velocity error vs the varying noise parameter, one line per preset."""
    getter, xlabel = _varying_axis(rows)
    by_preset: Dict[str, List[SweepRow]] = {}
    for row in rows:
        by_preset.setdefault(row[0], []).append(row)
    fig, ax = plt.subplots(figsize=(6, 4))
    for preset, cells in by_preset.items():
        cells = sorted(cells, key=lambda r: getter(r[1]))
        x = [getter(cfg) for _, cfg, _ in cells]
        med = [st.median for _, _, st in cells]
        lo = [st.p25 for _, _, st in cells]
        hi = [st.p75 for _, _, st in cells]
        ax.plot(x, med, marker="o", label=preset)
        ax.fill_between(x, lo, hi, alpha=0.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("velocity error [deg]")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

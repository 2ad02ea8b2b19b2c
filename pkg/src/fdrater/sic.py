"""Measured isolation traces and evaluation calibration.

Trace files are plain CSV with two columns, ``freq_hz,isolation_db``.
Lines starting with ``#`` are comments; a comment of the form
``# interface: circulator`` tags the antenna interface. An optional header
row naming the two columns is skipped.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import nnls

from .model import (
    FlatSic,
    LinkInstance,
    QuadraticSic,
    StationParams,
    TabulatedSic,
    db_to_linear,
)

__all__ = [
    "TraceFormatError",
    "IsolationTrace",
    "load_trace",
    "write_trace",
    "to_profile",
    "fit_gm",
    "fit_quadratic_isolation",
    "calibrate_evaluation",
    "EDGE_XINR",
    "NOISE_BELOW_TX_DB",
    "DIGITAL_SIC_DB",
    "CHANNEL_WIDTH_HZ",
    "sample_trace_path",
    "synthetic_trace",
]

# Edge-channel XINR at equal split with the canceller centered, per K.
EDGE_XINR = {33: 35.0, 17: 8.5, 9: 2.5}
NOISE_BELOW_TX_DB = 110.0
DIGITAL_SIC_DB = 50.0
# One trace sample spacing per OFDM channel.
CHANNEL_WIDTH_HZ = 600e3

_DATA = os.path.join(os.path.dirname(__file__), "data")


def sample_trace_path(name: str = "circulator") -> str:
    """Path of a bundled synthetic trace (``circulator`` or ``antenna_pair``)."""
    return os.path.join(_DATA, f"{name}_synthetic.csv")


class TraceFormatError(ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class IsolationTrace:
    freq_hz: np.ndarray
    isolation_db: np.ndarray
    interface: str = "circulator"

    def __post_init__(self):
        f = np.asarray(self.freq_hz, dtype=float)
        iso = np.asarray(self.isolation_db, dtype=float)
        if f.ndim != 1 or f.shape != iso.shape:
            raise ValueError("frequency and isolation columns must match")
        if f.size < 3:
            raise ValueError("a trace needs at least 3 rows")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "freq_hz", f)
        object.__setattr__(self, "isolation_db", iso)

    @property
    def notch_hz(self) -> float:
        """Frequency of deepest isolation."""
        return float(self.freq_hz[np.argmin(self.isolation_db)])

    def width_below(self, level_db: float) -> float:
        """Contiguous bandwidth around the notch where isolation <= ``level_db``."""
        i0 = int(np.argmin(self.isolation_db))
        f, iso = self.freq_hz, self.isolation_db
        if iso[i0] > level_db:
            return 0.0

        def crossing(step):
            i = i0
            while 0 <= i + step < f.size and iso[i + step] <= level_db:
                i += step
            j = i + step
            if not 0 <= j < f.size:
                return f[i]
            t = (level_db - iso[i]) / (iso[j] - iso[i])
            return f[i] + t * (f[j] - f[i])

        return float(crossing(1) - crossing(-1))


def load_trace(path) -> IsolationTrace:
    """Read and validate a ``freq_hz,isolation_db`` CSV trace."""
    freqs, isos = [], []
    interface = "circulator"
    with open(path, newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            first = row[0].strip()
            if first.startswith("#"):
                text = ",".join(row).lstrip("#").strip()
                if text.lower().startswith("interface:"):
                    interface = text.split(":", 1)[1].strip()
                continue
            if len(row) != 2:
                raise TraceFormatError(f"expected 2 columns, got {len(row)}", row_no)
            if not freqs and first.lower() == "freq_hz":
                continue
            try:
                f, iso = float(row[0]), float(row[1])
            except ValueError:
                raise TraceFormatError(f"non-numeric value in {row!r}", row_no) from None
            if not (math.isfinite(f) and math.isfinite(iso)):
                raise TraceFormatError("non-finite value", row_no)
            if freqs and f <= freqs[-1]:
                raise TraceFormatError(
                    f"frequency {f:g} Hz does not increase (previous {freqs[-1]:g} Hz)",
                    row_no,
                )
            freqs.append(f)
            isos.append(iso)
    if len(freqs) < 3:
        raise TraceFormatError(f"need at least 3 data rows, found {len(freqs)}")
    if interface not in ("pair", "circulator"):
        raise TraceFormatError(f"unknown antenna interface {interface!r}")
    return IsolationTrace(np.array(freqs), np.array(isos), interface)


def write_trace(path, trace: IsolationTrace, comment: str = "") -> None:
    with open(path, "w", newline="") as fh:
        for line in comment.splitlines():
            fh.write(f"# {line}\n")
        fh.write(f"# interface: {trace.interface}\n")
        fh.write("freq_hz,isolation_db\n")
        for f, iso in zip(trace.freq_hz, trace.isolation_db):
            fh.write(f"{f:.1f},{iso:.6f}\n")


def to_profile(
    trace: IsolationTrace,
    center_freq: Optional[float] = None,
    digital_sic_db: float = DIGITAL_SIC_DB,
    channel_width_hz: float = CHANNEL_WIDTH_HZ,
) -> TabulatedSic:
    """Re-express a trace as isolation versus offset from the canceller center.

    The measured shape is assumed to move rigidly with the canceller, so the
    same table serves every canceller position. ``center_freq`` defaults to
    the notch of the trace.
    """
    if center_freq is None:
        center_freq = trace.notch_hz
    if not trace.freq_hz[0] <= center_freq <= trace.freq_hz[-1]:
        raise ValueError("center frequency lies outside the trace span")
    return TabulatedSic(
        offsets_hz=trace.freq_hz - center_freq,
        isolation_db=trace.isolation_db,
        digital_sic_db=digital_sic_db,
        channel_width_hz=channel_width_hz,
    )


def fit_quadratic_isolation(
    trace: IsolationTrace,
    band: Tuple[float, float],
    k: int,
    center_freq: Optional[float] = None,
    digital_sic_db: float = 0.0,
) -> Tuple[float, float]:
    """Nonnegative least-squares fit of ``g_m * x**2 + floor`` to a trace.

    ``x`` is the offset from ``center_freq`` in channel units, with a channel
    being ``(band[1] - band[0]) / k`` wide. Returns ``(g_m, floor)`` as linear
    fractions of transmitted power, including ``digital_sic_db``.
    """
    f_lo, f_hi = band
    if not f_hi > f_lo:
        raise ValueError("band must have positive width")
    if center_freq is None:
        center_freq = trace.notch_hz
    sel = (trace.freq_hz >= f_lo) & (trace.freq_hz <= f_hi)
    if sel.sum() < 3:
        raise ValueError("need at least 3 trace samples inside the band")
    x = (trace.freq_hz[sel] - center_freq) * k / (f_hi - f_lo)
    if np.allclose(x, 0.0):
        raise ValueError("degenerate fit: all offsets are zero")
    y = db_to_linear(trace.isolation_db[sel] - digital_sic_db)
    # Rescale columns so NNLS works on O(1) numbers.
    x2 = x**2
    s2, s1 = x2.max(), y.max()
    design = np.column_stack([x2 / s2, np.ones_like(x2)])
    coef, _ = nnls(design, y / s1)
    return float(coef[0] * s1 / s2), float(coef[1] * s1)


def fit_gm(
    trace: IsolationTrace,
    band: Tuple[float, float],
    k: int,
    center_freq: Optional[float] = None,
    digital_sic_db: float = 0.0,
) -> float:
    """Least-squares estimate of the quadratic residual-SI coefficient."""
    return fit_quadratic_isolation(trace, band, k, center_freq, digital_sic_db)[0]


def synthetic_trace(
    width_hz: float,
    level_db: float = -60.0,
    floor_db: float = -75.0,
    f_lo: float = 2110e6,
    f_hi: float = 2170e6,
    step_hz: float = 100e3,
    interface: str = "circulator",
) -> IsolationTrace:
    """Quadratic-plus-floor isolation notch centered in ``[f_lo, f_hi]``.

    The notch is ``width_hz`` wide at ``level_db``. Used to build the
    bundled sample traces, which stand in for unpublished measurements.
    """
    if not level_db > floor_db:
        raise ValueError("level must lie above the floor")
    f = np.arange(f_lo, f_hi + step_hz / 2, step_hz)
    f0 = 0.5 * (f_lo + f_hi)
    floor = db_to_linear(floor_db)
    a = (db_to_linear(level_db) - floor) / (width_hz / 2) ** 2
    iso = 10.0 * np.log10(a * (f - f0) ** 2 + floor)
    return IsolationTrace(f, iso, interface)


def calibrate_evaluation(
    k: int,
    gamma_avg_db: float,
    edge_xinr: Optional[float] = None,
    ms_sic=None,
) -> LinkInstance:
    """Channel-flat evaluation link with unit budgets.

    Noise per channel sits 110 dB under the equal-split transmit power, BS
    residual SI equals the noise at equal split, and both directions see an
    average per-channel SNR of ``gamma_avg_db`` at equal split. The MS
    profile is quadratic with ``g_m`` chosen so that the edge channel has
    XINR ``edge_xinr`` at equal split with the canceller centered; the
    default comes from `EDGE_XINR`, and for other K it keeps the K = 33
    per-channel coefficient. Pass ``ms_sic`` to substitute another profile.
    """
    if k < 1:
        raise ValueError("K must be positive")
    noise = 10.0 ** (-NOISE_BELOW_TX_DB / 10.0) / k
    g_b = noise * k
    gamma = 10.0 ** (gamma_avg_db / 10.0)
    h = gamma * k * noise
    half = (k - 1) / 2.0
    if ms_sic is None:
        if edge_xinr is None and k in EDGE_XINR:
            edge_xinr = EDGE_XINR[k]
        if edge_xinr is None or half == 0:
            # noise * k is the same for every K, so this is the K = 33 value.
            g_m = EDGE_XINR[33] * noise * k / 16.0**2
        else:
            g_m = edge_xinr * noise * k / half**2
        ms_sic = QuadraticSic(g_m)
    bs = StationParams(noise=noise, sic=FlatSic(g_b), p_max=1.0)
    ms = StationParams(noise=noise, sic=ms_sic, p_max=1.0)
    return LinkInstance(np.full(k, h), np.full(k, h), bs, ms)

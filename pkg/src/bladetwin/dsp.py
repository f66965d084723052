"""Signal conditioning, accelerance FRFs, peak picking and half-power damping."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.signal

from .hammer import TrialRecord


class SignalError(ValueError):
    pass


# --- truncation --------------------------------------------------------------

def detect_onset(force: np.ndarray, threshold: float = 0.05) -> int:
    """Index of the first force sample above ``threshold`` times the peak force."""
    force = np.asarray(force, dtype=float)
    peak = float(np.max(force)) if force.size else 0.0
    if not peak > 0:
        raise SignalError("no impact found")
    above = np.flatnonzero(force > threshold * peak)
    return int(above[0])


def truncate_post_impact(trial: TrialRecord, window: float = 2.0, threshold: float = 0.05) -> TrialRecord:
    """Keep ``window`` seconds starting at the detected impact; time restarts at 0."""
    onset = detect_onset(trial.force, threshold)
    n = int(round(window * trial.sample_rate))
    available = len(trial.force) - onset
    if n > available:
        raise SignalError(
            f"window of {window} s needs {n} samples but only {available} "
            f"({available / trial.sample_rate:.4f} s) follow the impact"
        )
    return replace(
        trial,
        time=np.arange(n) / trial.sample_rate,
        force=trial.force[onset:onset + n].copy(),
        acceleration=trial.acceleration[onset:onset + n].copy(),
    )


# --- Butterworth low-pass ----------------------------------------------------

@dataclass(frozen=True)
class FilterCoeffs:
    order: int
    cutoff: float
    sample_rate: float
    numerator: np.ndarray
    denominator: np.ndarray

    @property
    def poles(self) -> np.ndarray:
        return np.roots(self.denominator)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0))

    def response(self, freqs_hz) -> np.ndarray:
        """Complex H(e^{jw}) at the given frequencies."""
        z = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=float) / self.sample_rate)
        num = np.polyval(self.numerator[::-1], z)
        den = np.polyval(self.denominator[::-1], z)
        return num / den


def design_butterworth_lowpass(order: int = 4, cutoff: float = 1000.0, sample_rate: float = 10_000.0) -> FilterCoeffs:
    """Digital Butterworth low-pass via the bilinear transform with pre-warping.

    The analog prototype poles sit on the left half of the circle of radius
    2 fs tan(pi fc / fs); each maps to z = (2 fs + s) / (2 fs - s) and the
    N zeros at infinity map to z = -1.  The gain is set for |H(1)| = 1.
    """
    if order < 1:
        raise SignalError("filter order must be >= 1")
    if not 0 < cutoff < sample_rate / 2:
        raise SignalError(f"cutoff {cutoff} Hz must lie in (0, {sample_rate / 2}) Hz")
    fs2 = 2.0 * sample_rate
    wc = fs2 * math.tan(math.pi * cutoff / sample_rate)
    k = np.arange(1, order + 1)
    s_poles = wc * np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    z_poles = (fs2 + s_poles) / (fs2 - s_poles)
    den = np.real(np.poly(z_poles))
    num = np.array([math.comb(order, i) for i in range(order + 1)], dtype=float)
    num *= np.sum(den) / np.sum(num)
    return FilterCoeffs(order=order, cutoff=cutoff, sample_rate=sample_rate, numerator=num, denominator=den)


def filter_signal(coeffs: FilterCoeffs, series) -> np.ndarray:
    """Causal single pass, zero initial state."""
    x = np.asarray(series, dtype=float)
    if x.size <= 3 * coeffs.order:
        raise SignalError(f"series of {x.size} samples is too short for order {coeffs.order}")
    if not coeffs.is_stable():
        raise SignalError("filter has poles on or outside the unit circle")
    return scipy.signal.lfilter(coeffs.numerator, coeffs.denominator, x)


def preprocess_trial(
    trial: TrialRecord,
    window: float = 2.0,
    cutoff: float = 1000.0,
    order: int = 4,
    threshold: float = 0.05,
) -> TrialRecord:
    """Truncate after the impact, then low-pass both channels with the same filter."""
    cut = truncate_post_impact(trial, window, threshold)
    coeffs = design_butterworth_lowpass(order, cutoff, trial.sample_rate)
    return replace(
        cut,
        force=filter_signal(coeffs, cut.force),
        acceleration=filter_signal(coeffs, cut.acceleration),
    )


# --- spectra and FRFs --------------------------------------------------------

@dataclass(frozen=True)
class Spectrum:
    frequencies: np.ndarray
    values: np.ndarray
    n_fft: int
    sample_rate: float


def spectrum(series, sample_rate: float, n_fft: int | None = None, onesided: bool = True) -> Spectrum:
    """Unscaled DFT X[k] = sum_n x[n] e^{-2 pi i k n / N}; the inverse carries 1/N.

    ``n_fft`` larger than the series zero-pads.  One-sided output keeps bins
    0..N/2 (0..Nyquist).
    """
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise SignalError("empty series")
    n = x.size if n_fft is None else int(n_fft)
    if n < x.size:
        raise SignalError("n_fft shorter than the series")
    if onesided:
        return Spectrum(np.fft.rfftfreq(n, 1.0 / sample_rate), np.fft.rfft(x, n), n, sample_rate)
    return Spectrum(np.fft.fftfreq(n, 1.0 / sample_rate), np.fft.fft(x, n), n, sample_rate)


@dataclass(frozen=True)
class FrfResult:
    frequencies: np.ndarray
    accelerance: np.ndarray
    resolution: float
    source: str = ""

    def __post_init__(self):
        if len(self.frequencies) != len(self.accelerance):
            raise SignalError("frequency grid and accelerance differ in length")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.accelerance)

    def band(self, max_hz: float) -> "FrfResult":
        keep = self.frequencies <= max_hz + 1e-9 * self.resolution
        return replace(self, frequencies=self.frequencies[keep], accelerance=self.accelerance[keep])


def frf_accelerance(
    force,
    acceleration,
    sample_rate: float,
    n_fft: int | None = None,
    max_hz: float | None = None,
    source: str = "",
) -> FrfResult:
    """Single-hit H1 accelerance A conj(F) / (|F|^2 + eps), eps = 1e-12 max|F|^2."""
    force = np.asarray(force, dtype=float)
    acceleration = np.asarray(acceleration, dtype=float)
    if force.shape != acceleration.shape:
        raise SignalError("force and acceleration differ in length")
    F = spectrum(force, sample_rate, n_fft)
    A = spectrum(acceleration, sample_rate, n_fft)
    power = np.abs(F.values) ** 2
    pmax = float(np.max(power))
    band = F.frequencies <= (max_hz if max_hz is not None else sample_rate / 2)
    if not pmax > 0 or not np.any(power[band] > 1e-24 * max(pmax, 1e-300)):
        raise SignalError("no excitation")
    H = A.values * np.conj(F.values) / (power + 1e-12 * pmax)
    frf = FrfResult(F.frequencies, H, sample_rate / F.n_fft, source)
    return frf.band(max_hz) if max_hz is not None else frf


def average_frfs(frfs: Sequence[FrfResult], source: str = "average") -> FrfResult:
    """Complex mean over FRFs that share one grid."""
    frfs = list(frfs)
    if not frfs:
        raise SignalError("nothing to average")
    grid = frfs[0].frequencies
    for f in frfs[1:]:
        if f.frequencies.shape != grid.shape or not np.array_equal(f.frequencies, grid):
            raise SignalError("FRFs do not share a frequency grid")
    mean = np.mean(np.stack([f.accelerance for f in frfs]), axis=0)
    return FrfResult(grid, mean, frfs[0].resolution, source)


# --- modal peaks -------------------------------------------------------------

@dataclass(frozen=True)
class ModalPeak:
    mode_index: int
    frequency: float  # Hz, nan when not found
    amplitude: float
    damping_ratio: float  # nan when the bandwidth could not be resolved
    band: tuple[float, float]
    found: bool = True
    damping_resolved: bool = True


def _quadratic_peak(mag: np.ndarray, k: int) -> tuple[float, float]:
    """Sub-bin offset and height of a parabola through log|H| at k-1, k, k+1."""
    ym1, y0, yp1 = np.log(mag[k - 1:k + 2])
    denom = ym1 - 2.0 * y0 + yp1
    if denom >= 0:
        return 0.0, float(mag[k])
    p = 0.5 * (ym1 - yp1) / denom
    return float(p), float(np.exp(y0 - 0.25 * (ym1 - yp1) * p))


def estimate_damping_halfpower(
    frf: FrfResult,
    peak_frequency: float,
    peak_amplitude: float | None = None,
    band: tuple[float, float] | None = None,
) -> float:
    """zeta = (f2 - f1) / (2 f_peak) from the half-power crossings around the peak.

    The crossings of peak/sqrt(2) are linearly interpolated and must both lie
    inside ``band`` (default: the whole grid).
    """
    f = frf.frequencies
    mag = frf.magnitude
    lo, hi = band if band is not None else (f[0], f[-1])
    k = int(np.argmin(np.abs(f - peak_frequency)))
    if peak_amplitude is None:
        if 0 < k < len(f) - 1:
            peak_amplitude = _quadratic_peak(mag, k)[1]
        else:
            peak_amplitude = float(mag[k])
    level = peak_amplitude / math.sqrt(2.0)

    i = k
    while i > 0 and f[i - 1] >= lo and mag[i - 1] >= level:
        i -= 1
    if i == 0 or f[i - 1] < lo:
        raise SignalError("bandwidth unresolved")
    f1 = f[i - 1] + (level - mag[i - 1]) * (f[i] - f[i - 1]) / (mag[i] - mag[i - 1])

    j = k
    while j < len(f) - 1 and f[j + 1] <= hi and mag[j + 1] >= level:
        j += 1
    if j == len(f) - 1 or f[j + 1] > hi:
        raise SignalError("bandwidth unresolved")
    f2 = f[j] + (mag[j] - level) * (f[j + 1] - f[j]) / (mag[j] - mag[j + 1])
    return float((f2 - f1) / (2.0 * peak_frequency))


def find_modal_peaks(
    frf: FrfResult, reference_frequencies: Sequence[float], half_band: float = 15.0
) -> list[ModalPeak]:
    """One peak per reference band ref +/- half_band, refined in log-magnitude.

    The highest interior local maximum of |H| in the band is taken, so a
    neighbouring mode's skirt rising at the band edge is ignored.  A band with
    no interior local maximum gives ``found=False`` and NaN values.
    """
    refs = np.asarray(reference_frequencies, dtype=float)
    if np.any(np.diff(refs) <= 0):
        raise SignalError("reference frequencies must be strictly ascending")
    f = frf.frequencies
    mag = frf.magnitude
    df = frf.resolution
    peaks = []
    for idx, ref in enumerate(refs, 1):
        lo, hi = ref - half_band, ref + half_band
        if lo < f[0] or hi > f[-1]:
            raise SignalError(f"band [{lo:g}, {hi:g}] Hz outside the FRF grid")
        inside = np.flatnonzero((f >= lo) & (f <= hi))
        interior = inside[1:-1]
        local = interior[(mag[interior] > mag[interior - 1]) & (mag[interior] >= mag[interior + 1])]
        k = int(local[np.argmax(mag[local])]) if local.size else -1
        if k < 0 or mag[k] <= 0:
            peaks.append(ModalPeak(idx, math.nan, math.nan, math.nan, (lo, hi), found=False, damping_resolved=False))
            continue
        p, amp = _quadratic_peak(mag, k)
        freq = float(f[k] + p * df)
        try:
            zeta = estimate_damping_halfpower(frf, freq, amp, (lo, hi))
            ok = 0 < zeta < 0.2
        except SignalError:
            zeta, ok = math.nan, False
        peaks.append(ModalPeak(idx, freq, amp, zeta if ok else math.nan, (lo, hi), True, ok))
    return peaks

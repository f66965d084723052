"""Hammer-impact transients by modal superposition and synthetic test campaigns."""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg
import scipy.signal

from .fem import UX, BladeConfig, DamageSpec, ModalResult, apply_damage, modal_analysis, mode_values_at


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class ImpulseSpec:
    peak_force: float = 40.0  # N
    duration: float = 1.5e-4  # s
    onset_time: float = 0.0  # s
    shape: str = "HalfSine"

    def __post_init__(self):
        if self.peak_force < 0:
            raise SimulationError("peak_force must be >= 0")
        if not 1e-5 <= self.duration <= 1e-3:
            raise SimulationError("impulse duration must be within [1e-5, 1e-3] s")
        if self.onset_time < 0:
            raise SimulationError("onset_time must be >= 0")
        if self.shape != "HalfSine":
            raise SimulationError(f"unsupported impulse shape {self.shape!r}")


@dataclass(frozen=True)
class ProtocolSpec:
    n_units_per_class: int = 5
    n_trials_per_unit: int = 20
    pre_trigger: float = 0.5  # s
    capture: float = 5.0  # s
    sample_rate: float = 10_000.0  # Hz
    impact_peak_range: tuple[float, float] = (30.0, 50.0)  # N
    impact_duration: float = 1.5e-4  # s
    impact_position_jitter: float = 0.004  # m, stdev of the hit location about nominal
    unit_variability: float = 0.003
    noise_snr_db: float = 30.0
    n_modes: int = 8
    master_seed: int = 20250101

    def __post_init__(self):
        object.__setattr__(self, "impact_peak_range", tuple(float(v) for v in self.impact_peak_range))
        lo, hi = self.impact_peak_range
        if self.n_units_per_class < 1 or self.n_trials_per_unit < 1:
            raise SimulationError("n_units_per_class and n_trials_per_unit must be >= 1")
        if not (0 < lo <= hi):
            raise SimulationError("impact_peak_range must be a positive interval")
        if self.pre_trigger < 0 or self.capture <= 0 or self.sample_rate <= 0:
            raise SimulationError("timing parameters must be positive")
        if self.unit_variability < 0:
            raise SimulationError("unit_variability must be >= 0")
        if self.impact_position_jitter < 0:
            raise SimulationError("impact_position_jitter must be >= 0")
        if self.n_modes < 6:
            raise SimulationError("n_modes must be >= 6")

    @property
    def n_samples(self) -> int:
        return int(round((self.pre_trigger + self.capture) * self.sample_rate))


@dataclass(frozen=True, eq=False)
class TrialRecord:
    label: str
    unit_id: int
    trial_id: int
    sample_rate: float
    time: np.ndarray
    force: np.ndarray
    acceleration: np.ndarray

    def __post_init__(self):
        n = len(self.time)
        if len(self.force) != n or len(self.acceleration) != n:
            raise SimulationError("time, force and acceleration must have equal length")

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.label, self.unit_id, self.trial_id)

    def __eq__(self, other):
        if not isinstance(other, TrialRecord):
            return NotImplemented
        return (
            self.key == other.key
            and self.sample_rate == other.sample_rate
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.force, other.force)
            and np.array_equal(self.acceleration, other.acceleration)
        )


def half_sine_value(spec: ImpulseSpec, t) -> np.ndarray:
    """Continuous pulse f(t) = peak sin(pi (t - onset) / duration) on the pulse support."""
    t = np.asarray(t, dtype=float)
    tau = t - spec.onset_time
    inside = (tau >= 0) & (tau <= spec.duration)
    return np.where(inside, spec.peak_force * np.sin(np.pi * np.clip(tau, 0, spec.duration) / spec.duration), 0.0)


def _in_pulse_count(spec: ImpulseSpec, sample_rate: float) -> int:
    # samples k/fs in [onset, onset + duration), tolerant to representation error
    eps = 1e-9
    first = math.ceil(spec.onset_time * sample_rate - eps)
    last = math.ceil((spec.onset_time + spec.duration) * sample_rate - eps) - 1
    return max(0, last - first + 1)


def half_sine_impulse(
    spec: ImpulseSpec, sample_rate: float, total_duration: float, method: str = "point"
) -> np.ndarray:
    """Sampled hammer force on the grid k / sample_rate, k < total_duration * sample_rate.

    ``method="point"`` samples the pulse; ``"average"`` stores the exact mean of
    the pulse over each sample cell [t_k - dt/2, t_k + dt/2], which preserves the
    impulse when the pulse spans only a couple of samples.
    """
    if spec.onset_time + spec.duration > total_duration:
        raise SimulationError("impulse ends after the record")
    if _in_pulse_count(spec, sample_rate) < 2:
        raise SimulationError(
            f"pulse of {spec.duration:g} s holds fewer than 2 samples at {sample_rate:g} Hz"
        )
    n = int(round(total_duration * sample_rate))
    t = np.arange(n) / sample_rate
    if method == "point":
        return half_sine_value(spec, t)
    if method != "average":
        raise SimulationError(f"unknown sampling method {method!r}")
    dt = 1.0 / sample_rate
    w = np.pi / spec.duration

    def antiderivative(x):
        tau = np.clip(x - spec.onset_time, 0.0, spec.duration)
        return spec.peak_force * (1.0 - np.cos(w * tau)) / w

    return (antiderivative(t + dt / 2) - antiderivative(t - dt / 2)) / dt


def _foh_filter(omega: float, zeta: float, gain: float, dt: float):
    """lfilter (b, a) of the exact first-order-hold SDOF propagator.

    Input is modal force per unit force (``gain`` = mode-shape value at the
    impact DOF); output is the modal acceleration.
    """
    A = np.array([[0.0, 1.0], [-omega * omega, -2.0 * zeta * omega]])
    B = np.array([[0.0], [gain]])
    aug = np.zeros((4, 4))
    aug[:2, :2] = A * dt
    aug[:2, 2:3] = B * dt
    aug[2, 3] = 1.0
    E = scipy.linalg.expm(aug)
    Phi = E[:2, :2]
    g_int = E[:2, 2]  # int_0^dt e^{A tau} d tau B
    g_ramp = E[:2, 3]  # int_0^dt e^{A tau} (dt - tau)/dt d tau B
    g0 = g_int - g_ramp
    g1 = g_ramp
    c = np.array([-omega * omega, -2.0 * zeta * omega])
    d = gain
    tr = Phi[0, 0] + Phi[1, 1]
    det = Phi[0, 0] * Phi[1, 1] - Phi[0, 1] * Phi[1, 0]
    # adj(zI - Phi) @ (g0 + z g1), polynomials in z as [z^2, z, 1]
    row1 = np.array([g1[0], g0[0] - Phi[1, 1] * g1[0] + Phi[0, 1] * g1[1], -Phi[1, 1] * g0[0] + Phi[0, 1] * g0[1]])
    row2 = np.array([g1[1], g0[1] - Phi[0, 0] * g1[1] + Phi[1, 0] * g1[0], -Phi[0, 0] * g0[1] + Phi[1, 0] * g0[0]])
    a = np.array([1.0, -tr, det])
    b = c[0] * row1 + c[1] * row2 + d * a
    return b, a


def modal_response(
    frequencies: Sequence[float],
    damping_ratios: Sequence[float],
    phi_sensor: Sequence[float],
    phi_impact: Sequence[float],
    force: np.ndarray,
    sample_rate: float,
) -> np.ndarray:
    """Sensor acceleration from superposed damped SDOF modes.

    Each mode obeys q'' + 2 zeta w q' + w^2 q = phi_impact f(t) with zero
    initial state, integrated exactly for a force that is linear between
    samples.  Returns sum_i phi_sensor_i q_i''.
    """
    force = np.asarray(force, dtype=float)
    dt = 1.0 / sample_rate
    out = np.zeros_like(force)
    for f_n, z, ps, pi in zip(frequencies, damping_ratios, phi_sensor, phi_impact):
        if not 0 <= z < 1:
            raise SimulationError(f"mode at {f_n:.3f} Hz has damping ratio {z} (must be < 1)")
        if ps == 0 or pi == 0:
            continue
        b, a = _foh_filter(2.0 * np.pi * f_n, z, pi, dt)
        out += ps * scipy.signal.lfilter(b, a, force)
    return out


def modal_transient(
    modal: ModalResult,
    config: BladeConfig,
    impulse: ImpulseSpec,
    sample_rate: float,
    duration: float,
    force: np.ndarray | None = None,
    impact_position: float | None = None,
) -> np.ndarray:
    """x-direction acceleration at the sensor node for one hammer hit.

    The hit acts at the node nearest ``config.impact_position`` unless
    ``impact_position`` is given, in which case the mode shapes are
    interpolated to that exact point.
    """
    if modal.n_modes < 6:
        raise SimulationError("modal_transient needs at least 6 modes")
    if duration < 0.1:
        raise SimulationError("duration must be >= 0.1 s")
    if np.any(modal.damping_ratios >= 1):
        raise SimulationError("overdamped mode (damping ratio >= 1)")
    if sample_rate < 4.0 * float(np.max(modal.frequencies)):
        raise SimulationError(
            f"sample rate {sample_rate:g} Hz below 4x the highest retained mode "
            f"({np.max(modal.frequencies):.1f} Hz)"
        )
    if force is None:
        force = half_sine_impulse(impulse, sample_rate, duration)
    sensor = config.nearest_node(config.sensor_position)
    if impact_position is None:
        phi_hit = modal.translation(config.nearest_node(config.impact_position), UX)
    else:
        if not config.clamp_length < impact_position <= config.length:
            raise SimulationError(f"impact position {impact_position} m is not on the free span")
        phi_hit = mode_values_at(modal, config, impact_position, UX)
    return modal_response(
        modal.frequencies,
        modal.damping_ratios,
        modal.translation(sensor, UX),
        phi_hit,
        force,
        sample_rate,
    )


# ---------------------------------------------------------------------------
# synthetic campaign

def label_code(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def unit_seed(master_seed: int, label: str, unit_id: int) -> np.random.SeedSequence:
    """Seed for the frozen per-unit stiffness perturbation."""
    return np.random.SeedSequence([master_seed, label_code(label), unit_id, 0])


def trial_seed(master_seed: int, label: str, unit_id: int, trial_id: int) -> np.random.SeedSequence:
    """Seed for the per-trial impact level, hit location and measurement noise."""
    return np.random.SeedSequence([master_seed, label_code(label), unit_id, trial_id, 1])


def perturb_unit(config: BladeConfig, variability: float, rng: np.random.Generator) -> BladeConfig:
    """Scale each section's bending stiffness by an independent (1 + variability * N(0, 1))."""
    if variability == 0:
        return config
    eps = rng.standard_normal(len(config.sections))
    factors = np.clip(1.0 + variability * eps, 0.5, 1.5)
    secs = tuple(
        replace(s, i_flap=s.i_flap * f, i_edge=s.i_edge * f)
        for s, f in zip(config.sections, factors)
    )
    return config.replace(sections=secs)


@lru_cache(maxsize=256)
def unit_modal(
    config: BladeConfig, damage: DamageSpec, variability: float, master_seed: int, unit_id: int, n_modes: int
) -> ModalResult:
    rng = np.random.default_rng(unit_seed(master_seed, damage.label, unit_id))
    unit_cfg = perturb_unit(config, variability, rng)
    return modal_analysis(apply_damage(unit_cfg, damage), n_modes)


def _add_noise(signal: np.ndarray, reference: np.ndarray, snr_db: float, rng) -> np.ndarray:
    if math.isinf(snr_db) and snr_db > 0:
        return signal
    rms = float(np.sqrt(np.mean(reference ** 2)))
    sigma = rms / 10.0 ** (snr_db / 20.0)
    return signal + sigma * rng.standard_normal(signal.shape)


def synth_trial(
    config: BladeConfig, damage: DamageSpec, protocol: ProtocolSpec, unit_id: int, trial_id: int
) -> TrialRecord:
    """One emulated hammer test; deterministic in (master_seed, label, unit, trial).

    Per trial the peak force is uniform over ``impact_peak_range`` and the hit
    lands at the nominal impact position plus Gaussian jitter.  Measurement
    noise goes on the accelerometer channel; the load-cell force is kept clean.
    """
    modal = unit_modal(
        config, damage, protocol.unit_variability, protocol.master_seed, unit_id, protocol.n_modes
    )
    rng = np.random.default_rng(trial_seed(protocol.master_seed, damage.label, unit_id, trial_id))
    lo, hi = protocol.impact_peak_range
    peak = float(rng.uniform(lo, hi)) if hi > lo else lo
    hit = None
    if protocol.impact_position_jitter > 0:
        lo_z = config.clamp_length + 1e-6
        hit = float(np.clip(
            config.impact_position + protocol.impact_position_jitter * rng.standard_normal(), lo_z, config.length
        ))
    fs = protocol.sample_rate
    n = protocol.n_samples
    total = n / fs
    impulse = ImpulseSpec(peak_force=peak, duration=protocol.impact_duration, onset_time=protocol.pre_trigger)
    force = half_sine_impulse(impulse, fs, total)
    accel = modal_transient(modal, config, impulse, fs, total, force=force, impact_position=hit)
    start = int(round(protocol.pre_trigger * fs))
    accel_noisy = _add_noise(accel, accel[start:], protocol.noise_snr_db, rng)
    return TrialRecord(
        label=damage.label,
        unit_id=unit_id,
        trial_id=trial_id,
        sample_rate=fs,
        time=np.arange(n) / fs,
        force=force,
        acceleration=accel_noisy,
    )


def trial_keys(damages: Sequence[DamageSpec], protocol: ProtocolSpec):
    """All (damage, unit, trial) combinations in dataset order."""
    for d in damages:
        for u in range(1, protocol.n_units_per_class + 1):
            for t in range(1, protocol.n_trials_per_unit + 1):
                yield d, u, t


def synth_dataset(
    config: BladeConfig,
    damages: Sequence[DamageSpec],
    protocol: ProtocolSpec,
    threads: int = 1,
) -> Iterator[TrialRecord]:
    """Yield every trial of the campaign in (label, unit, trial) order.

    Trials are generated independently (optionally on a thread pool); the
    yielded sequence does not depend on ``threads``.
    """
    if not damages:
        raise SimulationError("no damage classes given")
    labels = [d.label for d in damages]
    if len(set(labels)) != len(labels):
        raise SimulationError(f"duplicate damage labels in {labels}")
    keys = list(trial_keys(damages, protocol))
    if threads <= 1:
        for d, u, t in keys:
            yield synth_trial(config, d, protocol, u, t)
        return
    batch = 4 * threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for i in range(0, len(keys), batch):
            chunk = keys[i:i + batch]
            yield from pool.map(lambda k: synth_trial(config, k[0], protocol, k[1], k[2]), chunk)

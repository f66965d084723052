"""Independent reference computations used only by the tests."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg
import scipy.optimize

from bladetwin.fem import UX, BladeConfig, MaterialProps, SectionProps, build_system, modal_analysis
from bladetwin.hammer import ImpulseSpec, half_sine_impulse, modal_transient


# --- Euler-Bernoulli cantilever ---------------------------------------------

def cantilever_roots(n: int) -> np.ndarray:
    """Roots of cos(x) cosh(x) = -1, the clamped-free eigenvalue equation."""
    f = lambda x: math.cos(x) * math.cosh(x) + 1.0
    roots = []
    for k in range(n):
        guess = (k + 0.5) * math.pi
        roots.append(scipy.optimize.brentq(f, guess - 1.0, guess + 1.0))
    return np.array(roots)


def cantilever_frequencies(E, rho, width, depth, length, n=3) -> np.ndarray:
    """Flap-plane frequencies (Hz) of a uniform rectangular cantilever."""
    A = width * depth
    I = width * depth ** 3 / 12.0
    beta = cantilever_roots(n)
    return beta ** 2 / (2.0 * math.pi) * math.sqrt(E * I / (rho * A * length ** 4))


def uniform_beam(
    width=0.060, depth=0.008, length=0.3, n_elements=64, twist=0.0, density=1124.6, E=2.55e9,
    zeta=0.015, sensor_point_mass=0.0,
) -> BladeConfig:
    """Rectangular prismatic beam with the flap axis across ``depth``."""
    sec = SectionProps(
        span_start=0.0, span_end=length, area=width * depth,
        i_flap=width * depth ** 3 / 12.0, i_edge=depth * width ** 3 / 12.0, twist=twist,
    )
    return BladeConfig(
        sections=(sec,),
        material=MaterialProps(density=density, youngs_modulus=E, modal_damping_ratio=zeta),
        length=length,
        n_elements=n_elements,
        clamp_length=0.0,
        sensor_position=length / 3.0,
        impact_position=0.065 * length / 0.3,
        sensor_point_mass=sensor_point_mass,
    )


# --- SDOF closed forms ------------------------------------------------------

def sdof_accelerance(freqs_hz, fn_hz, zeta, residue=1.0) -> np.ndarray:
    """A(w) / F(w) = -w^2 r / (wn^2 - w^2 + 2 i zeta wn w)."""
    w = 2 * np.pi * np.asarray(freqs_hz, dtype=float)
    wn = 2 * np.pi * fn_hz
    return -w ** 2 * residue / (wn ** 2 - w ** 2 + 2j * zeta * wn * w)


def accelerance_peak_hz(fn_hz, zeta) -> float:
    """Peak of |accelerance| for an SDOF: wn / sqrt(1 - 2 zeta^2)."""
    return fn_hz / math.sqrt(1.0 - 2.0 * zeta ** 2)


def receptance_peak_hz(fn_hz, zeta) -> float:
    return fn_hz * math.sqrt(1.0 - 2.0 * zeta ** 2)


# --- Newmark-beta direct integration ----------------------------------------

def newmark_acceleration(K, M, C, load_shape, force, dt, substeps=1, beta=0.25, gamma=0.5):
    """Average-acceleration Newmark integration of M a + C v + K u = load_shape f(t).

    ``force`` is sampled on the output grid; between samples it is linearly
    interpolated and the step is divided into ``substeps``.  Returns the
    acceleration vectors at the output samples (rows).
    """
    n = K.shape[0]
    h = dt / substeps
    a0 = 1.0 / (beta * h * h)
    a1 = gamma / (beta * h)
    Keff = K + a0 * M + a1 * C
    lu = scipy.linalg.lu_factor(Keff)
    u = np.zeros(n)
    v = np.zeros(n)
    acc = np.linalg.solve(M, load_shape * force[0])
    out = np.empty((len(force), n))
    out[0] = acc
    for k in range(1, len(force)):
        f0, f1 = force[k - 1], force[k]
        for s in range(1, substeps + 1):
            f = f0 + (f1 - f0) * s / substeps
            rhs = load_shape * f + M @ (a0 * u + v / (beta * h) + (0.5 / beta - 1.0) * acc) \
                + C @ (a1 * u + (gamma / beta - 1.0) * v + h * (0.5 * gamma / beta - 1.0) * acc)
            u_new = scipy.linalg.lu_solve(lu, rhs)
            acc_new = a0 * (u_new - u) - v / (beta * h) - (0.5 / beta - 1.0) * acc
            v = v + h * ((1.0 - gamma) * acc + gamma * acc_new)
            u, acc = u_new, acc_new
        out[k] = acc
    return out


# --- F distribution via a continued fraction --------------------------------

def _betacf(a, b, x, max_iter=10_000, eps=1e-16):
    """Modified Lentz evaluation of the incomplete-beta continued fraction."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError("continued fraction did not converge")


def reg_incomplete_beta(a, b, x):
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(F, d1, d2):
    """P(X > F) for X ~ F(d1, d2)."""
    return reg_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * F))


def newmark_reference(blade, n_modes=6, duration=0.5, substeps=32, sample_rate=10_000.0):
    """(modal superposition, Newmark) sensor accelerations for one 40 N hit.

    The direct model carries modal damping on the first ``n_modes`` modes and
    a load projected onto them, so both routes solve the same problem.
    """
    system = build_system(blade)
    modal = modal_analysis(blade, n_modes)
    free = system.free_dofs
    phi = modal.mode_shapes[free]
    M, K = system.M, system.K
    Mphi = M @ phi
    C = Mphi @ np.diag(2 * modal.damping_ratios * modal.omegas) @ Mphi.T
    hit = np.searchsorted(free, system.dof(blade.nearest_node(blade.impact_position), UX))
    sensor = np.searchsorted(free, system.dof(blade.nearest_node(blade.sensor_position), UX))
    unit = np.zeros(len(free))
    unit[hit] = 1.0
    load = Mphi @ (phi.T @ unit)  # restrict the load to the retained modes
    spec = ImpulseSpec(peak_force=40.0, onset_time=0.01)
    force = half_sine_impulse(spec, sample_rate, duration)
    acc = newmark_acceleration(K, M, C, load, force, 1 / sample_rate, substeps=substeps)[:, sensor]
    modal_acc = modal_transient(modal, blade, spec, sample_rate, duration, force=force)
    return modal_acc, acc

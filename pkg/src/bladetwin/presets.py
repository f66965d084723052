"""Reference blade planform and the Table-1 damage catalogue.

The planform follows the NREL 5 MW blade (chord, twist and relative thickness
stations) scaled to 300 mm, with solid-section coefficients for a circle at
the root blending into a generic airfoil outboard.  ``scripts/calibrate_reference.py``
fits the thickness/chord/twist scales and the clamp length so the healthy
modes approximate the measured frequencies; its output is the shipped
``data/reference_blade.json``.
"""

from __future__ import annotations

import json
import math
from importlib import resources

import numpy as np

from .fem import BladeConfig, DamageKind, DamageSpec, MaterialProps, SectionProps

FULL_SCALE_LENGTH = 61.5  # m
HEALTHY_REFERENCE_HZ = (35.4, 93.0, 111.1, 207.5, 267.0, 372.3)
SENSOR_MASS_FRACTION = 0.136

# full-scale stations: span from root (m), chord (m), twist (deg), t/c
_STATIONS = np.array([
    0.0, 1.37, 4.1, 6.83, 10.25, 14.35, 18.45, 22.55, 26.65, 30.75,
    34.85, 38.95, 43.05, 47.15, 51.25, 54.67, 57.4, 60.13, 61.5,
])
_CHORD = np.array([
    3.542, 3.542, 3.854, 4.167, 4.557, 4.652, 4.458, 4.249, 4.007, 3.748,
    3.502, 3.256, 3.010, 2.764, 2.518, 2.313, 2.086, 1.419, 1.0,
])
_TWIST_DEG = np.array([
    13.308, 13.308, 13.308, 13.308, 13.308, 11.480, 10.162, 9.011, 7.795, 6.544,
    5.361, 4.188, 3.125, 2.319, 1.526, 0.863, 0.370, 0.106, 0.0,
])
_REL_THICKNESS = np.array([
    1.0, 1.0, 0.9, 0.6, 0.42, 0.36, 0.32, 0.28, 0.25, 0.22,
    0.21, 0.21, 0.19, 0.18, 0.18, 0.18, 0.18, 0.18, 0.18,
])

# solid airfoil section coefficients: A = kA c t, I_flap = kf c t^3, I_edge = ke t c^3
_AIRFOIL_K = (0.70, 0.036, 0.040)
_CIRCLE_K = (math.pi / 4, math.pi / 64, math.pi / 64)

# Table 1 (mm): position, length, thickness, depth; None = through-thickness
TABLE1 = {
    "D1": ("TransverseCrack", 15.0, 15.0, 2.0, 5.0),
    "D2": ("TrailingEdgeCrack", 70.0, 8.0, 1.0, None),
    "D3": ("TransverseCrack", 70.0, 16.0, 2.0, 1.0),
    "D4": ("TransverseCrack", 50.0, 10.0, 2.0, 2.5),
    "D5": ("LeadingEdgeLongitudinal", 65.0, 20.0, 2.0, 8.0),
}
D5_MASS_FRACTION = 0.02


def planform_geometry(
    z,
    *,
    length: float = 0.300,
    thickness_scale: float = 1.0,
    chord_scale: float = 1.0,
    twist_scale: float = 1.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Chord (m), maximum thickness (m) and twist (rad) at span positions ``z``."""
    scale = length / FULL_SCALE_LENGTH
    zs = np.asarray(z, dtype=float) / scale
    chord = np.interp(zs, _STATIONS, _CHORD) * scale * chord_scale
    thick = np.interp(zs, _STATIONS, _REL_THICKNESS * _CHORD) * scale * thickness_scale
    twist = np.radians(np.interp(zs, _STATIONS, _TWIST_DEG)) * twist_scale
    return chord, thick, twist


def scaled_planform(
    *,
    length: float = 0.300,
    n_elements: int = 60,
    thickness_scale: float = 1.0,
    chord_scale: float = 1.0,
    twist_scale: float = 1.0,
    clamp_length: float = 0.012,
    sensor_mass_fraction: float = 0.0,
    material: MaterialProps | None = None,
) -> BladeConfig:
    """One section per element from the scaled NREL 5 MW stations."""
    z = np.linspace(0.0, length, n_elements + 1)
    zm = 0.5 * (z[1:] + z[:-1])
    chord, thick, twist = planform_geometry(
        zm, length=length, thickness_scale=thickness_scale,
        chord_scale=chord_scale, twist_scale=twist_scale,
    )
    # 1 for the cylindrical root, 0 once the profile is a proper airfoil
    rel = np.interp(zm * FULL_SCALE_LENGTH / length, _STATIONS, _REL_THICKNESS)
    w = np.clip((rel - 0.4) / 0.6, 0.0, 1.0)
    ka, kf, ke = (w * c + (1 - w) * a for c, a in zip(_CIRCLE_K, _AIRFOIL_K))
    sections = tuple(
        SectionProps(
            span_start=float(z[i]),
            span_end=float(z[i + 1]),
            area=float(ka[i] * chord[i] * thick[i]),
            i_flap=float(kf[i] * chord[i] * thick[i] ** 3),
            i_edge=float(ke[i] * thick[i] * chord[i] ** 3),
            twist=float(twist[i]),
        )
        for i in range(n_elements)
    )
    cfg = BladeConfig(
        sections=sections,
        material=material or MaterialProps(),
        length=length,
        n_elements=n_elements,
        clamp_length=clamp_length,
    )
    if sensor_mass_fraction:
        cfg = cfg.replace(sensor_point_mass=sensor_mass_fraction * cfg.blade_mass())
    return cfg


def _zone_mean(config: BladeConfig, lo: float, hi: float, attr: str) -> float:
    vals = [
        getattr(s, attr)
        for s in config.sections
        if lo <= 0.5 * (s.span_start + s.span_end) <= hi
    ]
    if not vals:
        vals = [getattr(s, attr) for s in config.sections if s.span_start <= lo < s.span_end]
    return float(np.mean(vals))


def table1_damages(config: BladeConfig, geometry=None) -> list[DamageSpec]:
    """Healthy plus D1-D5 mapped onto local section sizes.

    ``geometry`` maps span positions to (chord, thickness, ...) arrays, as
    :func:`planform_geometry` does; without it the rectangle-equivalent depth
    and chord of ``config``'s sections are used.  A surface crack's ratio is
    depth over the local thickness.  The trailing-edge through crack removes
    ``length`` of chord, which for a rectangular section keeps
    (1 - length/chord) of the flap inertia.
    """
    out = [DamageSpec.healthy()]
    for label, (kind, pos, length, thick, depth) in TABLE1.items():
        lo, hi = pos * 1e-3, (pos + length) * 1e-3
        if label == "D5":
            out.append(DamageSpec(
                label=label, kind=DamageKind.MASS_REMOVAL, position=lo,
                length=length * 1e-3, thickness=thick * 1e-3, mass_fraction=D5_MASS_FRACTION,
            ))
            continue
        if geometry is not None:
            zz = np.linspace(lo, hi, 21)
            chord_m, thick_m = (float(np.mean(v)) for v in geometry(zz)[:2])
        else:
            chord_m = _zone_mean(config, lo, hi, "equivalent_chord")
            thick_m = _zone_mean(config, lo, hi, "equivalent_depth")
        if depth is None:
            ratio = 1.0 - (1.0 - min(length * 1e-3 / chord_m, 0.9)) ** (1.0 / 3.0)
        else:
            ratio = depth * 1e-3 / thick_m
        out.append(DamageSpec(
            label=label, kind=DamageKind.TRANSVERSE_CRACK, position=lo,
            length=length * 1e-3, thickness=thick * 1e-3, depth_ratio=round(ratio, 4),
        ))
    return out


def reference_config_path():
    return resources.files("bladetwin") / "data" / "reference_blade.json"


def load_reference() -> tuple[BladeConfig, list[DamageSpec]]:
    """The shipped calibrated blade and its damage catalogue."""
    from .config import blade_study_from_dict

    with resources.as_file(reference_config_path()) as p:
        data = json.loads(p.read_text(encoding="utf-8"))
    return blade_study_from_dict(data)


def reference_blade() -> BladeConfig:
    return load_reference()[0]

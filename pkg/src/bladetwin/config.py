"""JSON (de)serialisation of blade, damage, protocol and pipeline settings.

Field names carry their units (``length_m``, ``area_m2`` ...).  A *study*
file holds one blade plus its damage catalogue::

    {"schema_version": 1, "blade": {...}, "damages": [{...}, ...]}
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

from .fem import BladeConfig, DamageKind, DamageSpec, MaterialProps, SectionProps
from .hammer import ProtocolSpec

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _req(d: dict, key: str, where: str):
    try:
        return d[key]
    except KeyError:
        raise ConfigError(f"{where}: missing key {key!r}") from None


def material_to_dict(m: MaterialProps) -> dict:
    return {
        "density_kg_m3": m.density,
        "youngs_modulus_pa": m.youngs_modulus,
        "poisson_ratio": m.poisson_ratio,
        "modal_damping_ratio": m.modal_damping_ratio,
    }


def material_from_dict(d: dict) -> MaterialProps:
    return MaterialProps(
        density=float(_req(d, "density_kg_m3", "material")),
        youngs_modulus=float(_req(d, "youngs_modulus_pa", "material")),
        poisson_ratio=float(_req(d, "poisson_ratio", "material")),
        modal_damping_ratio=float(_req(d, "modal_damping_ratio", "material")),
    )


def blade_to_dict(c: BladeConfig) -> dict:
    return {
        "length_m": c.length,
        "n_elements": c.n_elements,
        "clamp_length_m": c.clamp_length,
        "sensor_position_m": c.sensor_position,
        "impact_position_m": c.impact_position,
        "sensor_point_mass_kg": c.sensor_point_mass,
        "material": material_to_dict(c.material),
        "sections": [
            {
                "span_start_m": s.span_start,
                "span_end_m": s.span_end,
                "area_m2": s.area,
                "i_flap_m4": s.i_flap,
                "i_edge_m4": s.i_edge,
                "twist_rad": s.twist,
            }
            for s in c.sections
        ],
    }


def blade_from_dict(d: dict) -> BladeConfig:
    secs = tuple(
        SectionProps(
            span_start=float(_req(s, "span_start_m", f"sections[{i}]")),
            span_end=float(_req(s, "span_end_m", f"sections[{i}]")),
            area=float(_req(s, "area_m2", f"sections[{i}]")),
            i_flap=float(_req(s, "i_flap_m4", f"sections[{i}]")),
            i_edge=float(_req(s, "i_edge_m4", f"sections[{i}]")),
            twist=float(s.get("twist_rad", 0.0)),
        )
        for i, s in enumerate(_req(d, "sections", "blade"))
    )
    return BladeConfig(
        sections=secs,
        material=material_from_dict(_req(d, "material", "blade")),
        length=float(_req(d, "length_m", "blade")),
        n_elements=int(_req(d, "n_elements", "blade")),
        clamp_length=float(d.get("clamp_length_m", 0.0)),
        sensor_position=float(_req(d, "sensor_position_m", "blade")),
        impact_position=float(_req(d, "impact_position_m", "blade")),
        sensor_point_mass=float(d.get("sensor_point_mass_kg", 0.0)),
    )


def damage_to_dict(s: DamageSpec) -> dict:
    return {
        "label": s.label,
        "kind": s.kind.value,
        "position_m": s.position,
        "length_m": s.length,
        "thickness_m": s.thickness,
        "depth_ratio": s.depth_ratio,
        "mass_fraction": s.mass_fraction,
    }


def damage_from_dict(d: dict) -> DamageSpec:
    return DamageSpec(
        label=str(_req(d, "label", "damage")),
        kind=DamageKind(d.get("kind", DamageKind.TRANSVERSE_CRACK.value)),
        position=float(d.get("position_m", 0.0)),
        length=float(d.get("length_m", 0.0)),
        thickness=float(d.get("thickness_m", 0.0)),
        depth_ratio=float(d.get("depth_ratio", 0.0)),
        mass_fraction=float(d.get("mass_fraction", 0.0)),
    )


def blade_study_to_dict(blade: BladeConfig, damages) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "blade": blade_to_dict(blade),
        "damages": [damage_to_dict(s) for s in damages],
    }


def blade_study_from_dict(d: dict) -> tuple[BladeConfig, list[DamageSpec]]:
    if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {d.get('schema_version')}")
    if "blade" not in d:
        # a bare blade file
        return blade_from_dict(d), [DamageSpec.healthy()]
    damages = [damage_from_dict(x) for x in d.get("damages", [])] or [DamageSpec.healthy()]
    return blade_from_dict(d["blade"]), damages


_PROTOCOL_KEYS = {
    "n_units_per_class": "n_units_per_class",
    "n_trials_per_unit": "n_trials_per_unit",
    "pre_trigger_s": "pre_trigger",
    "capture_s": "capture",
    "sample_rate_hz": "sample_rate",
    "impact_peak_range_n": "impact_peak_range",
    "impact_duration_s": "impact_duration",
    "impact_position_jitter_m": "impact_position_jitter",
    "unit_variability": "unit_variability",
    "noise_snr_db": "noise_snr_db",
    "n_modes": "n_modes",
    "master_seed": "master_seed",
}


def protocol_to_dict(p: ProtocolSpec) -> dict:
    out = {}
    for key, attr in _PROTOCOL_KEYS.items():
        v = getattr(p, attr)
        if isinstance(v, tuple):
            v = list(v)
        if isinstance(v, float) and math.isinf(v):
            v = "inf"
        out[key] = v
    return out


def protocol_from_dict(d: dict) -> ProtocolSpec:
    unknown = set(d) - set(_PROTOCOL_KEYS) - {"schema_version"}
    if unknown:
        raise ConfigError(f"protocol: unknown keys {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, attr in _PROTOCOL_KEYS.items():
        if key in d:
            v = d[key]
            if attr == "noise_snr_db":
                v = float(v)
            kwargs[attr] = v
    return ProtocolSpec(**kwargs)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def digest(obj) -> str:
    """sha256 of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def load_blade_study(path) -> tuple[BladeConfig, list[DamageSpec]]:
    return blade_study_from_dict(read_json(path))


def load_protocol(path) -> ProtocolSpec:
    return protocol_from_dict(read_json(path))


@dataclass(frozen=True)
class PipelineParams:
    """Preprocessing and feature settings shared by the CLI stages."""

    window_s: float = 2.0
    cutoff_hz: float = 1000.0
    filter_order: int = 4
    onset_threshold: float = 0.05
    zero_pad: int = 4
    half_band_hz: float = 15.0
    band_max_hz: float = 1000.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

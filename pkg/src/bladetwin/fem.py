"""Two-plane Euler-Bernoulli beam surrogate of the scaled blade.

Each node carries four DOFs in the order (u_x, theta_y, u_y, theta_x), where
theta_y = du_x/dz and theta_x = du_y/dz are the bending slopes of the x (flap)
and y (edge) planes.  A per-element twist rotates the principal section
inertias into the global frame, which couples the two planes.  Torsion and
axial motion are not modelled.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

DOFS_PER_NODE = 4
DOF_NAMES = ("u_x", "theta_y", "u_y", "theta_x")
UX, TY, UY, TX = range(4)

DAMAGE_LABELS = ("Healthy", "D1", "D2", "D3", "D4", "D5", "Custom")


class FemError(ValueError):
    """Invalid model input or a failed modal solve."""


class DamageKind(str, Enum):
    TRANSVERSE_CRACK = "TransverseCrack"
    MASS_REMOVAL = "MassRemoval"


@dataclass(frozen=True)
class MaterialProps:
    density: float = 1124.6  # kg/m^3
    youngs_modulus: float = 2.55e9  # Pa
    # stored for completeness; Euler-Bernoulli kinematics do not use it
    poisson_ratio: float = 0.35
    modal_damping_ratio: float = 0.015

    def __post_init__(self):
        for name in ("density", "youngs_modulus", "poisson_ratio", "modal_damping_ratio"):
            if not getattr(self, name) > 0:
                raise FemError(f"material {name} must be > 0")
        if self.poisson_ratio >= 0.5:
            raise FemError("poisson_ratio must be < 0.5")
        if self.modal_damping_ratio >= 1:
            raise FemError("modal_damping_ratio must be < 1 (underdamped)")


@dataclass(frozen=True)
class SectionProps:
    span_start: float  # m
    span_end: float  # m
    area: float  # m^2
    i_flap: float  # m^4, resists x-direction bending
    i_edge: float  # m^4, resists y-direction bending
    twist: float = 0.0  # rad

    def __post_init__(self):
        if not self.span_end > self.span_start:
            raise FemError(f"section [{self.span_start}, {self.span_end}] has non-positive extent")

    @property
    def equivalent_depth(self) -> float:
        """Thickness of the rectangle with the same area and flap inertia."""
        return math.sqrt(12.0 * self.i_flap / self.area)

    @property
    def equivalent_chord(self) -> float:
        return self.area / self.equivalent_depth


@dataclass(frozen=True)
class BladeConfig:
    sections: tuple[SectionProps, ...]
    material: MaterialProps = field(default_factory=MaterialProps)
    length: float = 0.300
    n_elements: int = 60
    clamp_length: float = 0.0
    sensor_position: float = 0.100
    impact_position: float = 0.065
    sensor_point_mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        if self.length <= 0:
            raise FemError("length must be > 0")
        if self.n_elements < 8:
            raise FemError("n_elements must be >= 8")
        if self.sensor_point_mass < 0:
            raise FemError("sensor_point_mass must be >= 0")
        if self.clamp_length < 0 or self.clamp_length >= self.length:
            raise FemError("clamp zone covers the whole blade")
        for name in ("impact_position", "sensor_position"):
            pos = getattr(self, name)
            if not 0 < pos < self.length:
                raise FemError(f"{name} {pos} outside (0, {self.length})")
            if pos <= self.clamp_length:
                raise FemError(f"{name} {pos} inside clamp zone")
        if not self.sections:
            raise FemError("no sections")
        tol = 1e-9 * self.length
        secs = sorted(self.sections, key=lambda s: s.span_start)
        if abs(secs[0].span_start) > tol or abs(secs[-1].span_end - self.length) > tol:
            raise FemError("sections do not cover [0, length]")
        for a, b in zip(secs, secs[1:]):
            if abs(a.span_end - b.span_start) > tol:
                raise FemError(f"gap or overlap between sections at {a.span_end} / {b.span_start}")
        object.__setattr__(self, "sections", tuple(secs))

    @property
    def node_positions(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_elements + 1)

    def nearest_node(self, position: float) -> int:
        return int(np.argmin(np.abs(self.node_positions - position)))

    def element_sections(self) -> list[SectionProps]:
        """Section governing each element, chosen at the element midpoint."""
        z = self.node_positions
        mids = 0.5 * (z[:-1] + z[1:])
        starts = np.array([s.span_start for s in self.sections])
        idx = np.clip(np.searchsorted(starts, mids, side="right") - 1, 0, len(self.sections) - 1)
        return [self.sections[i] for i in idx]

    def blade_mass(self) -> float:
        """Structural mass, without the sensor point mass."""
        z = self.node_positions
        le = np.diff(z)
        areas = np.array([s.area for s in self.element_sections()])
        return float(self.material.density * np.sum(areas * le))

    def replace(self, **changes) -> "BladeConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DamageSpec:
    label: str
    kind: DamageKind = DamageKind.TRANSVERSE_CRACK
    position: float = 0.0  # m from root
    length: float = 0.0  # m, spanwise extent of the affected zone
    thickness: float = 0.0  # m, informational (crack opening)
    depth_ratio: float = 0.0
    mass_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DamageKind(self.kind))
        if self.label not in DAMAGE_LABELS:
            raise FemError(f"unknown damage label {self.label!r}")
        if self.position < 0 or self.length < 0 or self.thickness < 0:
            raise FemError("damage geometry must be non-negative")
        if self.kind is DamageKind.TRANSVERSE_CRACK:
            if self.depth_ratio >= 1:
                raise FemError("depth_ratio = 1 (fully severed section) is not modelled")
            if self.depth_ratio < 0:
                raise FemError("depth_ratio must be in [0, 1)")
        elif not 0 <= self.mass_fraction <= 0.1:
            raise FemError("mass_fraction must be in [0, 0.1]")

    @classmethod
    def healthy(cls) -> "DamageSpec":
        return cls(label="Healthy")


@dataclass(frozen=True)
class AssembledSystem:
    """Global matrices, restricted to the free DOFs in ``K`` and ``M``.

    ``K_full`` / ``M_full`` are the unconstrained assemblies (point mass
    included); ``free_dofs`` indexes the full DOF vector.
    """

    K: np.ndarray
    M: np.ndarray
    K_full: np.ndarray
    M_full: np.ndarray
    free_dofs: np.ndarray
    n_nodes: int
    modal_damping_ratio: float

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * DOFS_PER_NODE

    def dof(self, node: int, component: int) -> int:
        return node * DOFS_PER_NODE + component


@dataclass(frozen=True)
class ModalResult:
    frequencies: np.ndarray  # Hz, ascending
    damping_ratios: np.ndarray
    mode_shapes: np.ndarray  # full DOF vector x modes, zeros at clamped DOFs
    free_dofs: np.ndarray
    dof_layout: str = "node-major; per node (u_x, theta_y, u_y, theta_x)"

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    @property
    def omegas(self) -> np.ndarray:
        return 2.0 * np.pi * self.frequencies

    def translation(self, node: int, component: int = UX) -> np.ndarray:
        """Mode-shape entries of one nodal translation, one per mode."""
        return self.mode_shapes[node * DOFS_PER_NODE + component]

    def truncate(self, n_modes: int) -> "ModalResult":
        return dataclasses.replace(
            self,
            frequencies=self.frequencies[:n_modes],
            damping_ratios=self.damping_ratios[:n_modes],
            mode_shapes=self.mode_shapes[:, :n_modes],
        )


def hermite_stiffness(le: float) -> np.ndarray:
    """Cubic Hermite bending stiffness for unit EI, DOFs (w1, s1, w2, s2)."""
    l2 = le * le
    return np.array([
        [12.0, 6.0 * le, -12.0, 6.0 * le],
        [6.0 * le, 4.0 * l2, -6.0 * le, 2.0 * l2],
        [-12.0, -6.0 * le, 12.0, -6.0 * le],
        [6.0 * le, 2.0 * l2, -6.0 * le, 4.0 * l2],
    ]) / (le ** 3)


def hermite_mass(le: float) -> np.ndarray:
    """Consistent translational mass for unit rho*A."""
    l2 = le * le
    return np.array([
        [156.0, 22.0 * le, 54.0, -13.0 * le],
        [22.0 * le, 4.0 * l2, 13.0 * le, -3.0 * l2],
        [54.0, 13.0 * le, 156.0, -22.0 * le],
        [-13.0 * le, -3.0 * l2, -22.0 * le, 4.0 * l2],
    ]) * (le / 420.0)


# element DOF positions of each bending plane inside the 8x8 element matrix
_PLANE_X = np.array([0, 1, 4, 5])
_PLANE_Y = np.array([2, 3, 6, 7])


def element_matrices(section: SectionProps, material: MaterialProps, le: float):
    """8x8 stiffness and mass of one twisted two-plane element."""
    c, s = math.cos(section.twist), math.sin(section.twist)
    E = material.youngs_modulus
    dxx = E * (section.i_flap * c * c + section.i_edge * s * s)
    dyy = E * (section.i_flap * s * s + section.i_edge * c * c)
    dxy = E * (section.i_flap - section.i_edge) * c * s
    kb = hermite_stiffness(le)
    mb = hermite_mass(le)
    ke = np.zeros((8, 8))
    me = np.zeros((8, 8))
    ke[np.ix_(_PLANE_X, _PLANE_X)] = dxx * kb
    ke[np.ix_(_PLANE_Y, _PLANE_Y)] = dyy * kb
    coupling = dxy * kb
    ke[np.ix_(_PLANE_X, _PLANE_Y)] = coupling
    ke[np.ix_(_PLANE_Y, _PLANE_X)] = coupling
    rho_a = material.density * section.area
    me[np.ix_(_PLANE_X, _PLANE_X)] = rho_a * mb
    me[np.ix_(_PLANE_Y, _PLANE_Y)] = rho_a * mb
    return ke, me


def build_system(config: BladeConfig) -> AssembledSystem:
    """Assemble K and M and apply the clamped-root boundary condition."""
    n_nodes = config.n_elements + 1
    ndof = n_nodes * DOFS_PER_NODE
    z = config.node_positions
    K = np.zeros((ndof, ndof))
    M = np.zeros((ndof, ndof))
    for e, sec in enumerate(config.element_sections()):
        if not (sec.area > 0 and sec.i_flap > 0 and sec.i_edge > 0):
            raise FemError(f"element {e}: non-physical section (area/inertia must be > 0)")
        ke, me = element_matrices(sec, config.material, z[e + 1] - z[e])
        dofs = np.arange(e * DOFS_PER_NODE, e * DOFS_PER_NODE + 8)
        K[np.ix_(dofs, dofs)] += ke
        M[np.ix_(dofs, dofs)] += me
    if config.sensor_point_mass > 0:
        node = config.nearest_node(config.sensor_position)
        for comp in (UX, UY):
            d = node * DOFS_PER_NODE + comp
            M[d, d] += config.sensor_point_mass

    clamped = np.flatnonzero(z <= config.clamp_length + 1e-12 * config.length)
    if clamped.size == 0:
        clamped = np.array([0])
    if clamped.size >= n_nodes:
        raise FemError("clamp zone covers the whole blade")
    fixed = np.zeros(ndof, dtype=bool)
    for node in clamped:
        fixed[node * DOFS_PER_NODE:(node + 1) * DOFS_PER_NODE] = True
    free = np.flatnonzero(~fixed)
    return AssembledSystem(
        K=K[np.ix_(free, free)],
        M=M[np.ix_(free, free)],
        K_full=K,
        M_full=M,
        free_dofs=free,
        n_nodes=n_nodes,
        modal_damping_ratio=config.material.modal_damping_ratio,
    )


def _split_sections(sections: Sequence[SectionProps], cuts: Sequence[float]) -> list[SectionProps]:
    out = []
    for sec in sections:
        inner = sorted(c for c in cuts if sec.span_start < c < sec.span_end)
        bounds = [sec.span_start, *inner, sec.span_end]
        for a, b in zip(bounds, bounds[1:]):
            out.append(dataclasses.replace(sec, span_start=a, span_end=b))
    return out


def damaged_element_range(config: BladeConfig, damage: DamageSpec) -> tuple[int, int]:
    """Half-open range of free elements overlapped by the damage zone."""
    z = config.node_positions
    lo, hi = damage.position, damage.position + damage.length
    eps = 1e-12 * config.length
    hit = [e for e in range(config.n_elements) if z[e] < hi - eps and z[e + 1] > lo + eps]
    if damage.length == 0:
        e = min(int(np.searchsorted(z, lo, side="right")) - 1, config.n_elements - 1)
        hit = [max(e, 0)]
    clamp_nodes = np.flatnonzero(z <= config.clamp_length + eps)
    first_free = int(clamp_nodes[-1]) if clamp_nodes.size else 0
    free_hit = [e for e in hit if e >= first_free]
    if len(free_hit) < len(hit):
        logger.warning("damage %s overlaps the clamp zone; applied to the free portion only", damage.label)
    if not free_hit:
        return (0, 0)
    return (free_hit[0], free_hit[-1] + 1)


def apply_damage(config: BladeConfig, damage: DamageSpec) -> BladeConfig:
    """Return a copy of ``config`` with the damage folded into its sections.

    A transverse crack scales i_flap by (1 - depth_ratio)**3 and i_edge by
    (1 - depth_ratio) over every element it overlaps.  Mass removal scales the
    area of the overlapped elements so the blade loses ``mass_fraction`` of
    its total mass; stiffness is left alone.
    """
    if damage.label == "Healthy":
        return config
    if not 0 <= damage.position <= config.length:
        raise FemError(f"damage position {damage.position} outside blade span")
    if damage.kind is DamageKind.TRANSVERSE_CRACK and damage.depth_ratio == 0:
        return config
    if damage.kind is DamageKind.MASS_REMOVAL and damage.mass_fraction == 0:
        return config
    e0, e1 = damaged_element_range(config, damage)
    if e0 == e1:
        return config
    z = config.node_positions
    z0, z1 = float(z[e0]), float(z[e1])
    secs = _split_sections(config.sections, [z0, z1])
    mid = lambda s: 0.5 * (s.span_start + s.span_end)

    if damage.kind is DamageKind.TRANSVERSE_CRACK:
        keep = 1.0 - damage.depth_ratio
        secs = [
            dataclasses.replace(s, i_flap=s.i_flap * keep ** 3, i_edge=s.i_edge * keep)
            if z0 < mid(s) < z1 else s
            for s in secs
        ]
    else:
        removed = damage.mass_fraction * config.blade_mass()
        le = np.diff(z)
        areas = np.array([s.area for s in config.element_sections()])
        zone_mass = float(config.material.density * np.sum(areas[e0:e1] * le[e0:e1]))
        scale = 1.0 - removed / zone_mass
        if scale <= 0:
            raise FemError(
                f"cannot remove {damage.mass_fraction:.3g} of blade mass from "
                f"[{z0:.4f}, {z1:.4f}] m (zone holds {zone_mass / config.blade_mass():.3g})"
            )
        secs = [dataclasses.replace(s, area=s.area * scale) if z0 < mid(s) < z1 else s for s in secs]
    return config.replace(sections=tuple(secs))


def solve_modes(system: AssembledSystem, n_modes: int) -> ModalResult:
    """Lowest ``n_modes`` eigenpairs of K phi = w^2 M phi, mass-normalised.

    Works on the inverted problem: with K = R R^T, the matrix
    C = R^-1 M R^-T has eigenvalues 1/w^2, so the wanted modes are the largest
    of C and keep full relative precision even though the stiff rotational
    DOFs push the top of the spectrum many decades higher.
    """
    n_free = system.K.shape[0]
    if not 1 <= n_modes <= n_free:
        raise FemError(f"n_modes={n_modes} must be in [1, {n_free}]")
    try:
        scipy.linalg.cholesky(system.M, lower=True)
    except np.linalg.LinAlgError as exc:
        w = np.linalg.eigvalsh(system.M)
        raise FemError(f"mass matrix not positive definite (min eigenvalue {w.min():.3e})") from exc
    try:
        R = scipy.linalg.cholesky(system.K, lower=True)
    except np.linalg.LinAlgError as exc:
        w = np.linalg.eigvalsh(system.K)
        raise FemError(f"stiffness not positive definite after constraints (lambda_min={w.min():.3e})") from exc
    Rinv_M = scipy.linalg.solve_triangular(R, system.M, lower=True)
    C = scipy.linalg.solve_triangular(R, Rinv_M.T, lower=True)
    C = 0.5 * (C + C.T)
    try:
        mu, Y = scipy.linalg.eigh(C, subset_by_index=[n_free - n_modes, n_free - 1])
    except np.linalg.LinAlgError as exc:
        raise FemError("eigen solve did not converge") from exc
    mu, Y = mu[::-1], Y[:, ::-1]
    if mu[-1] <= 0:
        raise FemError(f"non-positive inverse eigenvalue {mu[-1]:.3e}")
    lam = 1.0 / mu
    phi_free = scipy.linalg.solve_triangular(R.T, Y, lower=False)
    phi_free /= np.sqrt(np.einsum("ij,ik,kj->j", phi_free, system.M, phi_free))
    for j in range(phi_free.shape[1]):
        k = np.argmax(np.abs(phi_free[:, j]))
        if phi_free[k, j] < 0:
            phi_free[:, j] = -phi_free[:, j]
    shapes = np.zeros((system.n_dofs, n_modes))
    shapes[system.free_dofs] = phi_free
    freqs = np.sqrt(lam) / (2.0 * np.pi)
    return ModalResult(
        frequencies=freqs,
        damping_ratios=np.full(n_modes, system.modal_damping_ratio),
        mode_shapes=shapes,
        free_dofs=system.free_dofs,
    )


def modal_analysis(config: BladeConfig, n_modes: int = 6) -> ModalResult:
    return solve_modes(build_system(config), n_modes)


def mode_values_at(modal: ModalResult, config: BladeConfig, position: float, component: int = UX) -> np.ndarray:
    """Translation of every mode at an arbitrary span position.

    Uses the element's cubic Hermite interpolation of displacement and slope,
    so it equals the nodal value on a node and is the exact consistent load
    vector of a point force anywhere else.
    """
    if component not in (UX, UY):
        raise FemError("component must be UX or UY")
    if not 0 <= position <= config.length:
        raise FemError(f"position {position} outside [0, {config.length}]")
    z = config.node_positions
    e = min(int(np.searchsorted(z, position, side="right")) - 1, config.n_elements - 1)
    le = z[e + 1] - z[e]
    xi = (position - z[e]) / le
    n1 = 1 - 3 * xi ** 2 + 2 * xi ** 3
    n2 = le * (xi - 2 * xi ** 2 + xi ** 3)
    n3 = 3 * xi ** 2 - 2 * xi ** 3
    n4 = le * (-xi ** 2 + xi ** 3)
    slope = component + 1
    a, b = e * DOFS_PER_NODE, (e + 1) * DOFS_PER_NODE
    S = modal.mode_shapes
    return n1 * S[a + component] + n2 * S[a + slope] + n3 * S[b + component] + n4 * S[b + slope]


def sample_mode_shape(modal: ModalResult, config: BladeConfig, positions) -> np.ndarray:
    """Translations (u_x, u_y) of every mode at ``positions``.

    Returns an array of shape (n_modes, len(positions), 2).  Each mode is
    scaled so that the largest nodal translation over both axes is 1, which
    keeps the weaker axis on a scale relative to the dominant one.
    """
    pos = np.atleast_1d(np.asarray(positions, dtype=float))
    if np.any(pos < 0) or np.any(pos > config.length):
        raise FemError(f"positions must lie within [0, {config.length}]")
    z = config.node_positions
    shapes = modal.mode_shapes.reshape(len(z), DOFS_PER_NODE, modal.n_modes)
    ux, uy = shapes[:, UX, :], shapes[:, UY, :]
    scale = np.maximum(np.abs(ux).max(axis=0), np.abs(uy).max(axis=0))
    scale[scale == 0] = 1.0
    out = np.empty((modal.n_modes, len(pos), 2))
    for j in range(modal.n_modes):
        out[j, :, 0] = np.interp(pos, z, ux[:, j]) / scale[j]
        out[j, :, 1] = np.interp(pos, z, uy[:, j]) / scale[j]
    return out

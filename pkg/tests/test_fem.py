import dataclasses
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bladetwin.fem import (
    DOFS_PER_NODE,
    TX,
    TY,
    UX,
    UY,
    BladeConfig,
    DamageKind,
    DamageSpec,
    FemError,
    MaterialProps,
    SectionProps,
    apply_damage,
    build_system,
    damaged_element_range,
    hermite_mass,
    hermite_stiffness,
    modal_analysis,
    mode_values_at,
    sample_mode_shape,
    solve_modes,
)
from oracles import cantilever_frequencies, cantilever_roots, uniform_beam


def flap_modes(modal):
    """Indices of modes whose x-translation dominates."""
    S = modal.mode_shapes.reshape(-1, DOFS_PER_NODE, modal.n_modes)
    ex = np.sum(S[:, UX] ** 2, axis=0)
    ey = np.sum(S[:, UY] ** 2, axis=0)
    return np.flatnonzero(ex > ey)


# --- element matrices ----------------------------------------------------------

def test_cantilever_roots_match_tabulated():
    np.testing.assert_allclose(cantilever_roots(3), [1.875104, 4.694091, 7.854757], atol=1e-6)


def test_hermite_element_matrices_symmetric_and_rigid_body():
    le = 0.0123
    k = hermite_stiffness(le)
    m = hermite_mass(le)
    np.testing.assert_allclose(k, k.T)
    np.testing.assert_allclose(m, m.T)
    # translation and rotation are strain-free
    np.testing.assert_allclose(k @ np.array([1, 0, 1, 0]), 0, atol=1e-9)
    np.testing.assert_allclose(k @ np.array([0, 1, le, 1]), 0, atol=1e-6)
    # consistent mass integrates to the element mass (unit rho A)
    assert np.array([1, 0, 1, 0]) @ m @ np.array([1, 0, 1, 0]) == pytest.approx(le)
    assert np.all(np.linalg.eigvalsh(m) > 0)


# --- analytic checks -----------------------------------------------------------

def test_uniform_cantilever_matches_euler_bernoulli():
    cfg = uniform_beam()
    t0 = time.perf_counter()
    modal = modal_analysis(cfg, 8)
    elapsed = time.perf_counter() - t0
    flap = modal.frequencies[flap_modes(modal)][:3]
    exact = cantilever_frequencies(2.55e9, 1124.6, 0.060, 0.008, 0.3)
    np.testing.assert_allclose(flap, exact, rtol=5e-3)
    assert exact[0] == pytest.approx(21.62, abs=0.01)
    assert flap[1] / flap[0] == pytest.approx(6.267, rel=5e-3)
    assert elapsed < 1.0


def test_edge_plane_scales_with_width():
    cfg = uniform_beam()
    modal = modal_analysis(cfg, 8)
    edge = np.setdiff1d(np.arange(modal.n_modes), flap_modes(modal))
    exact_edge = cantilever_frequencies(2.55e9, 1124.6, 0.008, 0.060, 0.3, n=1)[0]
    assert modal.frequencies[edge[0]] == pytest.approx(exact_edge, rel=5e-3)


def test_mesh_convergence_is_monotone_from_above():
    exact = cantilever_frequencies(2.55e9, 1124.6, 0.060, 0.008, 0.3)[1]
    errs = []
    for n in (8, 16, 32, 64):
        modal = modal_analysis(uniform_beam(n_elements=n), 6)
        f2 = modal.frequencies[flap_modes(modal)][1]
        errs.append(f2 - exact)
    assert all(e > 0 for e in errs)
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_untwisted_planes_decouple():
    system = build_system(uniform_beam())
    n = system.K_full.shape[0]
    xs = np.r_[np.arange(UX, n, DOFS_PER_NODE), np.arange(TY, n, DOFS_PER_NODE)]
    ys = np.r_[np.arange(UY, n, DOFS_PER_NODE), np.arange(TX, n, DOFS_PER_NODE)]
    assert np.all(system.K_full[np.ix_(xs, ys)] == 0)
    assert np.all(system.M_full[np.ix_(xs, ys)] == 0)
    modal = modal_analysis(uniform_beam(), 8)
    S = modal.mode_shapes.reshape(-1, DOFS_PER_NODE, modal.n_modes)
    for j in range(modal.n_modes):
        x = np.abs(S[:, [UX, TY], j]).max()
        y = np.abs(S[:, [UY, TX], j]).max()
        assert min(x, y) < 1e-6 * max(x, y)


def test_twist_couples_planes():
    modal = modal_analysis(uniform_beam(twist=0.5), 6)
    S = modal.mode_shapes.reshape(-1, DOFS_PER_NODE, modal.n_modes)
    x = np.abs(S[:, UX, 0]).max()
    y = np.abs(S[:, UY, 0]).max()
    assert y > 1e-3 * x


def test_doubling_density_scales_frequencies():
    a = modal_analysis(uniform_beam(), 6).frequencies
    b = modal_analysis(uniform_beam(density=2 * 1124.6), 6).frequencies
    np.testing.assert_allclose(b, a / np.sqrt(2), rtol=1e-6)


# --- reference blade -----------------------------------------------------------

def test_reference_orthonormality(reference):
    blade, _ = reference
    system = build_system(blade)
    modal = solve_modes(system, 6)
    phi = modal.mode_shapes[system.free_dofs]
    np.testing.assert_allclose(phi.T @ system.M @ phi, np.eye(6), atol=1e-8)
    kk = phi.T @ system.K @ phi
    w2 = modal.omegas ** 2
    np.testing.assert_allclose(kk / w2[:, None] ** 0.5 / w2[None, :] ** 0.5, np.eye(6), atol=1e-6)


def test_reference_matrices_symmetric(reference):
    blade, _ = reference
    system = build_system(blade)
    np.testing.assert_allclose(system.K, system.K.T, atol=1e-9 * np.abs(system.K).max())
    np.testing.assert_allclose(system.M, system.M.T, atol=1e-12 * np.abs(system.M).max())


def test_root_is_clamped(reference):
    blade, _ = reference
    modal = modal_analysis(blade, 6)
    shapes = sample_mode_shape(modal, blade, [0.0])
    np.testing.assert_allclose(shapes[:, 0, :], 0.0, atol=1e-15)
    clamped = np.flatnonzero(blade.node_positions <= blade.clamp_length + 1e-12)
    for node in clamped:
        assert np.all(modal.mode_shapes[node * DOFS_PER_NODE:(node + 1) * DOFS_PER_NODE] == 0)


def test_sample_mode_shape_normalised(reference):
    blade, _ = reference
    modal = modal_analysis(blade, 6)
    shapes = sample_mode_shape(modal, blade, blade.node_positions)
    assert shapes.shape == (6, blade.n_elements + 1, 2)
    np.testing.assert_allclose(np.abs(shapes).max(axis=(1, 2)), 1.0)
    # first mode: tip moves most in x
    assert abs(shapes[0, -1, 0]) == pytest.approx(1.0)


def test_mode_values_at_nodes_and_between(reference):
    blade, _ = reference
    modal = modal_analysis(blade, 6)
    z = blade.node_positions
    for node in (5, 20, len(z) - 1):
        np.testing.assert_allclose(mode_values_at(modal, blade, z[node]), modal.translation(node), atol=1e-14)
    # interpolation agrees with a mesh twice as fine at its extra node
    fine = blade.replace(n_elements=2 * blade.n_elements)
    fm = modal_analysis(fine, 6)
    mid = 0.5 * (z[20] + z[21])
    coarse_val = mode_values_at(modal, blade, mid)
    fine_val = fm.translation(fine.nearest_node(mid))
    scale = np.abs(modal.mode_shapes[0::DOFS_PER_NODE]).max(axis=0)
    np.testing.assert_allclose(coarse_val / scale, fine_val / scale, atol=2e-3)


# --- damage --------------------------------------------------------------------

def _crack(ratio, position=0.1, length=0.005, label="D1"):
    return DamageSpec(label=label, kind=DamageKind.TRANSVERSE_CRACK, position=position, length=length, depth_ratio=ratio)


def test_zero_depth_crack_is_identity(reference):
    blade, _ = reference
    assert apply_damage(blade, _crack(0.0)) == blade
    np.testing.assert_array_equal(
        modal_analysis(apply_damage(blade, _crack(0.0)), 6).frequencies, modal_analysis(blade, 6).frequencies
    )


def test_half_depth_crack_scales_inertia():
    cfg = uniform_beam(n_elements=60)
    dmg = _crack(0.5, position=0.1, length=0.01)
    out = apply_damage(cfg, dmg)
    e0, e1 = damaged_element_range(cfg, dmg)
    secs = out.element_sections()
    base = cfg.sections[0]
    for e, s in enumerate(secs):
        if e0 <= e < e1:
            assert s.i_flap == pytest.approx(base.i_flap * 0.125)
            assert s.i_edge == pytest.approx(base.i_edge * 0.5)
        else:
            assert s.i_flap == base.i_flap
    assert e1 - e0 == 2


def test_mass_removal_drops_mass_trace_by_fraction():
    cfg = uniform_beam(sensor_point_mass=0.0)
    dmg = DamageSpec(label="D5", kind=DamageKind.MASS_REMOVAL, position=0.25, length=0.03, mass_fraction=0.02)
    m0 = build_system(cfg).M_full
    m1 = build_system(apply_damage(cfg, dmg)).M_full
    # translational diagonal of a consistent mass sums to 156/420 of the element masses per node pair;
    # the ratio of the full trace responds exactly in proportion for a uniform beam
    trans = np.r_[np.arange(UX, m0.shape[0], DOFS_PER_NODE), np.arange(UY, m0.shape[0], DOFS_PER_NODE)]
    drop = 1.0 - np.trace(m1[np.ix_(trans, trans)]) / np.trace(m0[np.ix_(trans, trans)])
    assert drop == pytest.approx(0.02, abs=0.001)
    assert apply_damage(cfg, dmg).blade_mass() == pytest.approx(0.98 * cfg.blade_mass())


def test_mass_removal_leaves_stiffness(reference):
    blade, damages = reference
    d5 = next(d for d in damages if d.label == "D5")
    np.testing.assert_array_equal(build_system(apply_damage(blade, d5)).K, build_system(blade).K)


@settings(max_examples=25, deadline=None)
@given(ratio=st.floats(0.0, 0.9), pos=st.floats(0.02, 0.27))
def test_crack_never_raises_frequencies(ratio, pos):
    cfg = uniform_beam(n_elements=24, twist=0.2)
    base = modal_analysis(cfg, 6).frequencies
    cracked = modal_analysis(apply_damage(cfg, _crack(ratio, position=pos, length=0.01)), 6).frequencies
    assert np.all(cracked <= base * (1 + 1e-9))


@settings(max_examples=20, deadline=None)
@given(r1=st.floats(0.0, 0.8), dr=st.floats(0.01, 0.15))
def test_deeper_crack_lowers_frequencies_monotonically(r1, dr):
    cfg = uniform_beam(n_elements=24)
    a = modal_analysis(apply_damage(cfg, _crack(r1, length=0.02)), 6).frequencies
    b = modal_analysis(apply_damage(cfg, _crack(r1 + dr, length=0.02)), 6).frequencies
    assert np.all(b <= a * (1 + 1e-9))


@settings(max_examples=20, deadline=None)
@given(scale=st.floats(0.5, 2.0))
def test_rayleigh_quotient_bounds_first_mode(scale):
    cfg = uniform_beam(n_elements=24, twist=0.3)
    system = build_system(cfg)
    modal = solve_modes(system, 1)
    rng = np.random.default_rng(int(scale * 1000))
    v = modal.mode_shapes[system.free_dofs, 0] + 0.05 * scale * rng.standard_normal(system.K.shape[0])
    rq = (v @ system.K @ v) / (v @ system.M @ v)
    assert rq >= modal.omegas[0] ** 2 * (1 - 1e-10)


def test_reference_damage_shift_signs(reference):
    blade, damages = reference
    base = modal_analysis(blade, 6).frequencies
    for d in damages:
        if d.label == "Healthy":
            continue
        shifted = modal_analysis(apply_damage(blade, d), 6).frequencies - base
        if d.kind is DamageKind.MASS_REMOVAL:
            assert np.all(shifted > 0)
        else:
            assert np.all(shifted[[2, 3, 5]] < 0)


# --- errors --------------------------------------------------------------------

def test_invalid_inputs_rejected():
    sec = SectionProps(0.0, 0.3, 1e-4, 1e-9, 1e-8)
    with pytest.raises(FemError):
        BladeConfig(sections=(sec,), n_elements=4)
    with pytest.raises(FemError):
        BladeConfig(sections=(SectionProps(0.0, 0.2, 1e-4, 1e-9, 1e-8),))
    with pytest.raises(FemError):
        BladeConfig(sections=(sec,), clamp_length=0.3)
    with pytest.raises(FemError):
        BladeConfig(sections=(sec,), clamp_length=0.07, impact_position=0.065)
    with pytest.raises(FemError):
        MaterialProps(modal_damping_ratio=1.0)
    with pytest.raises(FemError):
        DamageSpec(label="D1", depth_ratio=1.0)
    with pytest.raises(FemError):
        DamageSpec(label="D9")
    with pytest.raises(FemError):
        DamageSpec(label="D5", kind=DamageKind.MASS_REMOVAL, mass_fraction=0.2)
    bad = BladeConfig(sections=(dataclasses.replace(sec, area=0.0),))
    with pytest.raises(FemError):
        build_system(bad)
    with pytest.raises(FemError):
        solve_modes(build_system(uniform_beam(n_elements=8)), 1000)

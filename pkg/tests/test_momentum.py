import numpy as np
import pytest

from oracles import poiseuille, taylor_green
from varbingham.errors import CompatibilityError, ConfigError, ParameterError
from varbingham.mesh import (
    BoundarySpec,
    Grid,
    SideBC,
    SiteTensors,
    StaggeredVelocity,
    SymTensorField,
    divergence,
    gradient_p,
    site_tensors,
    sym_gradient,
    tensor_norm,
    velocity_inner,
)
from varbingham.momentum import (
    Inflow,
    MomentumState,
    MomentumStepper,
    Projection,
    Regularized,
    VelocityBoundarySpec,
    ab2_convection,
    apply_velocity_bc,
    bingham_update_projection,
    bingham_update_regularized,
    boundary_net_outflux,
    convection,
    kinetic_energy,
    load_state,
    save_state,
    stress_from_multiplier,
)
from varbingham.rheology import PhysicalParams

SLIP = VelocityBoundarySpec("slip", "slip", "slip", "slip")
CAVITY = VelocityBoundarySpec()


def random_velocity(g, seed, bc=None):
    rng = np.random.default_rng(seed)
    vel = StaggeredVelocity(rng.standard_normal(g.u_shape), rng.standard_normal(g.v_shape), g)
    return apply_velocity_bc(vel, bc or CAVITY)


def solenoidal(g, seed=0):
    """Divergence-free no-slip-compatible field from a corner streamfunction."""
    a = np.random.default_rng(seed).uniform(0.5, 1.5, 2)
    X, Y = np.meshgrid(g.xf / g.Lx, g.yf / g.Ly, indexing="ij")
    s = a[0] * np.sin(np.pi * X) ** 2 * np.sin(np.pi * Y) ** 2 * (1 + a[1] * X * Y)
    return StaggeredVelocity(np.diff(s, axis=1) / g.hy, -np.diff(s, axis=0) / g.hx, g)


def zeros_pf(g):
    return np.zeros(g.cell_shape)


def test_boundary_spec_validation():
    with pytest.raises(ConfigError):
        VelocityBoundarySpec(bottom="outflow")
    with pytest.raises(ConfigError):
        VelocityBoundarySpec(left="outflow", right="outflow")
    with pytest.raises(ConfigError):
        VelocityBoundarySpec(left="sticky")
    ch = VelocityBoundarySpec.channel(2.0)
    assert ch.outflow_side == "right" and ch.kind("left") == "inflow"
    t = ch.tangential()
    assert t.right.kind == "neumann" and t.left.kind == "dirichlet" and t.top.kind == "dirichlet"
    assert ch.pressure_bc().right.kind == "dirichlet" and ch.pressure_bc().left.kind == "neumann"


def test_outflow_flux_balanced():
    g = Grid(16, 12, 2.0, 1.0)
    vel = random_velocity(g, 1, VelocityBoundarySpec.channel(1.5))
    assert abs(boundary_net_outflux(vel)) < 1e-13
    np.testing.assert_allclose(vel.u[0], poiseuille(g.yc, 1.0, 1.5))
    assert np.all(vel.v[:, [0, -1]] == 0)


def test_convection_examples():
    g = Grid(12, 10)
    tbc = VelocityBoundarySpec.channel().tangential()
    z = StaggeredVelocity.zeros(g)
    assert ab2_convection(z, z, tbc).max_abs() == 0
    w = random_velocity(g, 2)
    np.testing.assert_allclose(ab2_convection(w, w, tbc).u, convection(w, tbc).u, atol=1e-13)
    np.testing.assert_allclose(ab2_convection(w, w, tbc).v, convection(w, tbc).v, atol=1e-13)
    stream = StaggeredVelocity(np.ones(g.u_shape), np.zeros(g.v_shape), g)
    assert convection(stream, tbc).max_abs() == 0


def test_convection_is_energy_neutral():
    # skew-symmetry of the divergence form for solenoidal fields with no-slip walls
    g = Grid(32, 24)
    w = solenoidal(g, 3)
    assert np.abs(divergence(w)).max() < 1e-12
    val = velocity_inner(convection(w, CAVITY.tangential()), w)
    assert abs(val) < 1e-12 * velocity_inner(w, w) * 100


def test_zero_is_fixed_point():
    g = Grid(10, 8)
    for mode in (Regularized(), Projection()):
        st = MomentumStepper(g, PhysicalParams(), CAVITY, 1e-2, mode=mode)
        s = MomentumState.initial(StaggeredVelocity.zeros(g))
        assert st.predict_velocity(s, SymTensorField.zeros(g)).max_abs() == 0
        s = st.bootstrap_first_step(s, zeros_pf(g))
        for _ in range(3):
            s = st.step(s, zeros_pf(g))
        assert s.v.max_abs() == 0 and np.all(s.p == 0) and s.step_index == 4
    with pytest.raises(ParameterError):
        st.bootstrap_first_step(s, zeros_pf(g))


def test_stokes_mode_decay():
    g = Grid(128, 128)
    u, v = taylor_green(g)
    v0 = StaggeredVelocity(u, v, g)
    st = MomentumStepper(g, PhysicalParams(q0=0.0), SLIP, 1e-3, convection=False)
    s = MomentumState.initial(v0)
    for _ in range(100):
        s = st.step(s, zeros_pf(g))
        assert s.info.div_max <= 1e-8
    amp = velocity_inner(s.v, v0) / velocity_inner(v0, v0)
    assert abs(amp / np.exp(-2 * np.pi**2 * s.t) - 1) < 0.02


def test_newtonian_channel_steady():
    g = Grid(64, 32, 2.0, 1.0)
    st = MomentumStepper(g, PhysicalParams(q0=0.0), VelocityBoundarySpec.channel(), 1e-2)
    s = MomentumState.initial(apply_velocity_bc(StaggeredVelocity.zeros(g), st.bc))
    for _ in range(400):
        s = st.step(s, zeros_pf(g))
    prof = s.v.u[48]
    exact = poiseuille(g.yc)
    assert np.abs(prof - exact).max() <= 0.01 * exact.max()


def test_pressure_correct_examples():
    g = Grid(24, 20)
    st = MomentumStepper(g, PhysicalParams(), CAVITY, 1e-2)
    s = MomentumState.initial(StaggeredVelocity.zeros(g))
    w = solenoidal(g, 4)
    v_new, p_new = st.pressure_correct(w, s)
    assert (v_new - w).max_abs() < 1e-10
    assert np.ptp(p_new) < 1e-10 * max(1.0, np.abs(p_new).max())

    X, Y = np.meshgrid(g.xc, g.yc, indexing="ij")
    psi = np.sin(np.pi * X) ** 2 * np.sin(np.pi * Y) ** 2
    v_new, _ = st.pressure_correct(gradient_p(psi, g), s)
    assert v_new.max_abs() < 1e-10

    for seed in range(3):
        v_new, _ = st.pressure_correct(random_velocity(g, seed), s)
        assert np.abs(divergence(v_new)).max() <= 1e-8


def test_pressure_correct_channel_and_incompatibility():
    g = Grid(32, 16, 2.0, 1.0)
    st = MomentumStepper(g, PhysicalParams(), VelocityBoundarySpec.channel(), 1e-2)
    s = MomentumState.initial(StaggeredVelocity.zeros(g))
    v_new, _ = st.pressure_correct(random_velocity(g, 5, st.bc), s)
    assert np.abs(divergence(v_new)).max() <= 1e-8
    np.testing.assert_allclose(v_new.u[0], poiseuille(g.yc))

    cav = MomentumStepper(g, PhysicalParams(), CAVITY, 1e-2)
    bad = StaggeredVelocity.zeros(g)
    bad.u[0] = 1.0
    with pytest.raises(CompatibilityError):
        cav.pressure_correct(bad, s)


def test_regularized_update_examples():
    g = Grid(10, 10)
    q = np.full(g.cell_shape, 0.3)
    assert bingham_update_regularized(q, StaggeredVelocity.zeros(g), 1e-2).d12.max() == 0
    gamma, eps = 2.0, 0.05
    u = np.broadcast_to(gamma * g.yc, g.u_shape).copy()
    vel = StaggeredVelocity(u, np.zeros(g.v_shape), g)
    tbc = BoundarySpec(SideBC("neumann"), SideBC("neumann"), SideBC("dirichlet", 0.0), SideBC("dirichlet", gamma))
    sig = bingham_update_regularized(q, vel, eps, tbc)
    nD = gamma / np.sqrt(2)
    expected = 0.3 * nD / (nD + eps) / np.sqrt(2)
    np.testing.assert_allclose(sig.d12, expected, rtol=1e-12)
    assert np.all(sig.d11 == 0) and np.all(sig.d22 == 0)


def test_projection_update_examples():
    g = Grid(8, 8)
    rng = np.random.default_rng(7)
    lam = SiteTensors.zeros(g)
    lam.center[..., 0, 0] = rng.uniform(-0.5, 0.5, g.cell_shape)
    lam.center[..., 1, 1] = -lam.center[..., 0, 0]
    q = np.full(g.cell_shape, 0.4)
    _, new = bingham_update_projection(q, StaggeredVelocity.zeros(g), lam, 1.0)
    assert new.max_abs_diff(lam) == 0

    small = StaggeredVelocity(1e-3 * rng.standard_normal(g.u_shape), 1e-3 * rng.standard_normal(g.v_shape), g)
    apply_velocity_bc(small, CAVITY)
    sig, new = bingham_update_projection(q, small, lam, 1.0)
    D = site_tensors(sym_gradient(small))
    np.testing.assert_array_equal(new.center, lam.center + D.center)
    np.testing.assert_array_equal(new.corner, lam.corner + D.corner)

    big = 1e3 * small
    sig, new = bingham_update_projection(q, big, lam, 1.0)
    assert tensor_norm(new.center).max() <= 1 + 1e-15 and tensor_norm(new.corner).max() <= 1 + 1e-15
    ref = stress_from_multiplier(q, new, g)
    np.testing.assert_array_equal(sig.d12, ref.d12)


def test_q0_zero_matches_disabled_rheology():
    g = Grid(16, 12)
    v0 = solenoidal(g, 8)
    runs = []
    for kwargs in (dict(params=PhysicalParams(q0=0.0)), dict(params=PhysicalParams(q0=0.5), rheology=False)):
        st = MomentumStepper(g, bc=CAVITY, dt=1e-2, **kwargs)
        s = MomentumState.initial(v0)
        for _ in range(5):
            s = st.step(s, zeros_pf(g))
        runs.append(s)
    np.testing.assert_array_equal(runs[0].v.u, runs[1].v.u)
    np.testing.assert_array_equal(runs[0].p, runs[1].p)


def test_energy_decreases_and_yield_bound():
    g = Grid(24, 24)
    v0 = solenoidal(g, 9)
    params = PhysicalParams(q0=0.5)
    for mode in (Regularized(1e-2), Projection()):
        st = MomentumStepper(g, params, CAVITY, 5e-3, mode=mode)
        s = MomentumState.initial(v0)
        E0 = E = kinetic_energy(s.v, 1.0)
        for _ in range(30):
            s = st.step(s, zeros_pf(g))
            E_new = kinetic_energy(s.v, 1.0)
            assert E_new <= E + 1e-8 * E0
            assert s.info.plastic_rate >= -1e-12 * (g.nx * g.ny + (g.nx + 1) * (g.ny + 1))
            E = E_new
        if isinstance(mode, Projection):
            assert s.info.converged
            q = 0.5
            assert tensor_norm(site_tensors(s.sigma).center).max() - q <= 1e-12
            assert tensor_norm(site_tensors(s.sigma).corner).max() - q <= 1e-12


def _stokes_run(dt, t_end=0.2):
    g = Grid(32, 32)
    u, v = taylor_green(g)
    st = MomentumStepper(g, PhysicalParams(q0=0.0), SLIP, dt, convection=False)
    s = MomentumState.initial(StaggeredVelocity(u, v, g))
    for _ in range(round(t_end / dt)):
        s = st.step(s, zeros_pf(g))
    return s.v


def test_bdf2_temporal_order():
    ref = _stokes_run(2.5e-4)
    errs = [np.sqrt(velocity_inner(_stokes_run(dt) - ref, _stokes_run(dt) - ref)) for dt in (4e-3, 2e-3, 1e-3)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.8


def test_bitwise_restart(tmp_path):
    g = Grid(20, 10, 2.0, 1.0)
    st = MomentumStepper(g, PhysicalParams(q0=0.3), VelocityBoundarySpec.channel(), 1e-2, mode=Projection(max_iters=20))
    s = MomentumState.initial(apply_velocity_bc(StaggeredVelocity.zeros(g), st.bc))
    pf = np.random.default_rng(10).uniform(0, 1, g.cell_shape)
    for _ in range(4):
        s = st.step(s, pf)
    save_state(s, tmp_path / "state.npz")
    r = load_state(tmp_path / "state.npz")
    for _ in range(3):
        s = st.step(s, pf)
        r = st.step(r, pf)
    for a, b in ((s.v.u, r.v.u), (s.v.v, r.v.v), (s.p, r.p), (s.lam.corner, r.lam.corner)):
        assert np.array_equal(a, b)
    assert r.step_index == s.step_index == 7

import numpy as np
import pytest

from varbingham.errors import ConfigError, ParameterError, StepSizeError
from varbingham.mesh import BoundarySpec, Grid, SideBC, StaggeredVelocity, divergence
from varbingham.rheology import PhysicalParams
from varbingham.transport import PfTransport, advance_pf, advective_cfl, truncate_initial


def streamfunction_velocity(g, psi):
    """Exactly divergence-free MAC field from a corner streamfunction."""
    X, Y = np.meshgrid(g.xf, g.yf, indexing="ij")
    s = psi(X, Y)
    return StaggeredVelocity(np.diff(s, axis=1) / g.hy, -np.diff(s, axis=0) / g.hx, g)


def test_truncate():
    p = np.array([[0.2, 0.5], [0.9, 0.1]])
    np.testing.assert_array_equal(truncate_initial(p, 0.0, 1.0), p)
    assert truncate_initial(np.array([-0.5, 0.3]), 0.0, 1.0)[0] == 0.0
    r = np.random.default_rng(0).normal(0.5, 1.0, (20, 20))
    t = truncate_initial(r, 0.0, 1.0)
    assert t.min() >= 0 and t.max() <= 1
    with pytest.raises(ParameterError):
        truncate_initial(p, 1.0, 0.0)


def test_cfl_examples():
    g = Grid(10, 10)
    assert advective_cfl(StaggeredVelocity.zeros(g), 0.05) == 0
    vel = StaggeredVelocity(np.ones(g.u_shape), np.zeros(g.v_shape), g)
    assert advective_cfl(vel, 0.05) == pytest.approx(0.5)
    vel = StaggeredVelocity(2 * np.ones(g.u_shape), 2 * np.ones(g.v_shape), g)
    assert advective_cfl(vel, 0.05) == pytest.approx(2.0)
    with pytest.raises(StepSizeError):
        advance_pf(np.zeros(g.cell_shape), vel, 0.05, PhysicalParams(), BoundarySpec())


def test_negative_dirichlet_rejected():
    with pytest.raises(ConfigError):
        PfTransport(Grid(8, 8), 0.1, BoundarySpec.uniform("dirichlet", -1.0))


def test_uniform_state_is_fixed():
    g = Grid(12, 8)
    c = 0.7
    out = advance_pf(np.full(g.cell_shape, c), StaggeredVelocity.zeros(g), 0.01, PhysicalParams(),
                     BoundarySpec.uniform("dirichlet", c))
    np.testing.assert_allclose(out, c, atol=1e-13)


def test_diffusion_decay_matches_analytic():
    g = Grid(128, 128)
    X, Y = np.meshgrid(g.xc, g.yc, indexing="ij")
    mode = np.sin(np.pi * X) * np.sin(np.pi * Y)
    tr = PfTransport(g, 0.1, BoundarySpec())
    vel = StaggeredVelocity.zeros(g)
    p, dt, t_end = mode.copy(), 1e-3, 0.5
    for _ in range(round(t_end / dt)):
        p = tr.advance(p, vel, dt)
    amp = np.sum(p * mode) / np.sum(mode * mode)
    exact = np.exp(-0.1 * 2 * np.pi**2 * t_end)
    assert abs(amp / exact - 1) < 0.02


def test_maximum_principle_random_flows():
    rng = np.random.default_rng(5)
    for trial in range(20):
        g = Grid(24, 16, 1.5, 1.0)
        a, b = rng.uniform(0.5, 2.0, 2)
        vel = streamfunction_velocity(g, lambda x, y: a * np.sin(np.pi * x / 1.5 * b) * np.sin(np.pi * y) ** 2)
        assert np.abs(divergence(vel)).max() < 1e-10
        hi_bc = rng.uniform(0, 1)
        bc = BoundarySpec(SideBC("dirichlet", hi_bc), SideBC("dirichlet", 0.0),
                          SideBC("neumann"), SideBC(rng.choice(["dirichlet", "neumann"]), 0.0))
        p = rng.uniform(0.2, 0.8, g.cell_shape)
        dt = 0.9 / (vel.max_abs() * (1 / g.hx + 1 / g.hy))
        tr = PfTransport(g, rng.uniform(1e-3, 0.2), bc)
        for _ in range(30):
            lo = min(p.min(), 0.0, hi_bc)
            hi = max(p.max(), hi_bc)
            p = tr.advance(p, vel, dt)
            assert p.min() >= lo - 1e-12 and p.max() <= hi + 1e-12


def test_mass_conserved_under_zero_flux():
    g = Grid(20, 14)
    rng = np.random.default_rng(6)
    p = rng.uniform(0, 1, g.cell_shape)
    tr = PfTransport(g, 0.3, BoundarySpec.uniform("neumann"))
    vel = StaggeredVelocity.zeros(g)
    m0 = p.sum() * g.cell_area
    for _ in range(10):
        p = tr.advance(p, vel, 0.01)
        assert abs(p.sum() * g.cell_area - m0) < 1e-10


def test_upwind_first_order():
    errs = []
    for n in (64, 128, 256):
        g = Grid(n, 4)
        X, _ = np.meshgrid(g.xc, g.yc, indexing="ij")
        bump = lambda x: np.exp(-((x - 0.3) / 0.08) ** 2)
        p = bump(X)
        vel = StaggeredVelocity(np.ones(g.u_shape), np.zeros(g.v_shape), g)
        tr = PfTransport(g, 1.0, BoundarySpec(SideBC("dirichlet", 0.0), SideBC("neumann"),
                                              SideBC("neumann"), SideBC("neumann")))
        dt = 0.5 * g.hx
        steps = round(0.3 / dt)
        for _ in range(steps):
            p = tr.advect(p, vel, dt)
        errs.append(np.sum(np.abs(p - bump(X - steps * dt))) * g.cell_area)
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 0.8


def test_diffusion_second_order_in_space():
    errs = []
    K, t_end = 0.1, 0.2
    for n in (16, 32, 64):
        g = Grid(n, n)
        X, Y = np.meshgrid(g.xc, g.yc, indexing="ij")
        mode = np.sin(np.pi * X) * np.sin(np.pi * Y)
        dt = t_end / round(t_end / (0.5 * g.hx**2))
        tr = PfTransport(g, K, BoundarySpec())
        vel = StaggeredVelocity.zeros(g)
        p = mode.copy()
        for _ in range(round(t_end / dt)):
            p = tr.advance(p, vel, dt)
        exact = np.exp(-K * 2 * np.pi**2 * t_end) * mode
        errs.append(np.sqrt(g.cell_area * np.sum((p - exact) ** 2)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.9

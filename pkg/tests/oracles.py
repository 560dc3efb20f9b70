"""Independent reference solutions used by the tests.

None of these call into the package's solvers.
"""

import numpy as np
from scipy.optimize import brentq


def poiseuille(y, Ly=1.0, umax=1.0):
    return 4.0 * umax * y * (Ly - y) / Ly**2


def bingham_channel_analytic(Ly, flux, eta, tau_y):
    """Plane Bingham-Poiseuille profile carrying ``flux`` per unit depth.

    ``tau_y`` is the shear yield stress. Returns ``(profile(y), G, y0)`` with
    ``G = -dp/dx`` and ``y0`` the plug half-width.
    """
    h = Ly / 2

    def q_of(G):
        y0 = min(tau_y / G, h)
        # closed-form flux of the sheared layer plus the rigid plug
        sheared = 0.5 * G * (h**2 * (h - y0) - (h**3 - y0**3) / 3) - 0.5 * tau_y * (h - y0) ** 2
        plug = y0 * (0.5 * G * (h**2 - y0**2) - tau_y * (h - y0))
        return 2 * (sheared + plug) / eta

    G = brentq(lambda G: q_of(G) - flux, tau_y / h * (1 + 1e-12), 1e4)
    y0 = tau_y / G

    def profile(y):
        s = np.maximum(np.abs(np.asarray(y) - h), y0)
        return (0.5 * G * (h**2 - s**2) - tau_y * (h - s)) / eta

    return profile, G, y0


def bingham_channel_bruteforce(Ly, flux, eta, tau_y, n=4000):
    """Minimize ``int eta/2 u'^2 + tau_y |u'|`` with u(0)=u(Ly)=0 and fixed flux.

    Solved directly as a convex program on ``n`` nodes; returns nodes, values.
    """
    import cvxpy as cp

    h = Ly / n
    y = np.linspace(0, Ly, n + 1)
    u = cp.Variable(n + 1)
    du = cp.diff(u) / h
    w = np.full(n + 1, h)
    w[[0, -1]] = h / 2
    obj = cp.Minimize(h * cp.sum(0.5 * eta * cp.square(du) + tau_y * cp.abs(du)))
    prob = cp.Problem(obj, [u[0] == 0, u[-1] == 0, w @ u == flux])
    prob.solve(solver=cp.CLARABEL)
    return y, np.asarray(u.value)


def taylor_green(grid, amp=1.0):
    """Divergence-free slip-wall eigenmode of the Stokes operator."""
    X, Y = np.meshgrid(grid.xf, grid.yc, indexing="ij")
    u = amp * np.sin(np.pi * X / grid.Lx) * np.cos(np.pi * Y / grid.Ly)
    X, Y = np.meshgrid(grid.xc, grid.yf, indexing="ij")
    v = -amp * (grid.Ly / grid.Lx) * np.cos(np.pi * X / grid.Lx) * np.sin(np.pi * Y / grid.Ly)
    return u, v

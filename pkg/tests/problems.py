"""Small problem builders shared by the tests."""

from __future__ import annotations

from simex_trt.integrators import TRTContext
from simex_trt.physics import (ConstantOpacity, MaterialModel, Mesh1D, PowerLawOpacity,
                               build_quadrature, equilibrium_state)
from simex_trt.transport import planck_inflow


def equilibrium_context(M=20, T0=100.0, thick=True, **kw):
    """Uniform slab bathed on both sides in Planckian radiation at its own temperature."""
    mesh = Mesh1D.uniform(M, 0.25)
    quad = build_quadrature(8)
    law = PowerLawOpacity(1e12, 3.0) if thick else ConstantOpacity(0.5)
    mat = MaterialModel.uniform(law, 3e12 if thick else 1e10, M)
    ctx = TRTContext(mesh, quad, mat, planck_inflow(quad, T0, T0), **kw)
    ho, lo = equilibrium_state(mesh, quad, T0)
    return ctx, ctx.pack(ho, lo)


def driven_context(M=20, T0=10.0, T_left=60.0, sigma=20.0, rho_cv=1e9, length=0.5, **kw):
    """Constant-opacity slab heated from the left, vacuum on the right."""
    mesh = Mesh1D.uniform(M, length)
    quad = build_quadrature(8)
    mat = MaterialModel.uniform(ConstantOpacity(sigma), rho_cv, M)
    ctx = TRTContext(mesh, quad, mat, planck_inflow(quad, T_left, 0.0), **kw)
    ho, lo = equilibrium_state(mesh, quad, T0)
    return ctx, ctx.pack(ho, lo)


def small_marshak(M=100, **kw):
    """The Marshak wave physics on a coarse mesh."""
    mesh = Mesh1D.uniform(M, 0.25)
    quad = build_quadrature(8)
    mat = MaterialModel.uniform(PowerLawOpacity(1e12, 3.0), 3e12, M)
    kw.setdefault("emission_per_subcell", False)
    ctx = TRTContext(mesh, quad, mat, planck_inflow(quad, 1000.0, 0.0), fixup=True, **kw)
    ho, lo = equilibrium_state(mesh, quad, 0.025)
    return ctx, ctx.pack(ho, lo)

"""Quadrature-level evaluators for the analytically solvable families.

These serve both as fast paths and as oracles for the discrete solver:

* ``brown_york``: half the integrated mean-curvature deficit between
  the flat background boundary and the domain boundary;
* ``conformal_energy``: for metrics e^{2 phi} x flat with phi = 0 on
  the boundary, the energy in two equivalent forms (a boundary integral
  of the inward normal derivative of phi, and an interior curvature
  integral), or -inf when the normal derivative is negative somewhere;
* ``rotsym_energy``: rotationally symmetric metrics in any dimension;
* ``rotsym_to_conformal``: rewrites a 2D rotationally symmetric metric
  as a conformally flat disk spec by integrating the conformal-radius
  ODE, enabling cross-checks between the two evaluators and feeding the
  discrete solver.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import OutOfHypothesisError, ValidationError
from .geometry import (ConformalFlat, FlatDisk, RotSym, sphere_volume)

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ClosedFormResult:
    energy: float
    formula: str
    quadrature_error: float
    details: dict


def brown_york(bgeo, C=None):
    """Half the integral of (H_background - H_domain) over selected circles.

    bgeo: BoundaryGeometry; C: iterable of component names (default all).
    """
    total = 0.0
    matched = False
    for name, _nodes, H_N, H_M, _A, measure in bgeo.components:
        if C is not None and name not in C:
            continue
        matched = True
        total += 0.5 * float(np.sum(measure * (H_M - H_N)))
    if not matched:
        raise ValidationError(f"no boundary component matches selector {C!r}")
    return total


def _phi_boundary_data(spec):
    """(radius, inward normal derivative of phi) per boundary circle."""
    if spec.topology == "disk":
        R = spec.radii[-1]
        return [(R, -float(np.asarray(spec.phi.deriv(R))))]
    r_in, r_out = spec.radii
    return [(r_in, +float(np.asarray(spec.phi.deriv(r_in)))),
            (r_out, -float(np.asarray(spec.phi.deriv(r_out))))]


def conformal_energy(spec):
    """Energy of a conformally flat 2D metric with phi = 0 on the boundary.

    Returns the boundary form (1/2) * integral of e_n phi over the
    boundary; also evaluates the interior form -(1/2) * integral of
    (Laplacian phi) dx dy and checks they agree.  If e_n phi < 0 on any
    boundary circle the energy is -inf.
    """
    if not isinstance(spec, ConformalFlat):
        raise ValidationError("conformal_energy requires a ConformalFlat spec")
    spec.validate()
    bdata = _phi_boundary_data(spec)
    if any(enphi < -1e-12 for _r, enphi in bdata):
        return ClosedFormResult(
            energy=NEG_INF, formula="conformal_boundary",
            quadrature_error=0.0,
            details={"e_n_phi": {f"r={r:g}": enphi for r, enphi in bdata}})
    e_boundary = sum(0.5 * (2.0 * math.pi * r) * enphi for r, enphi in bdata)

    def lap_phi_r(r):
        return (np.asarray(spec.phi.deriv2(r))
                + np.asarray(spec.phi.deriv(r)) / r) * r

    lo = 0.0 if spec.topology == "disk" else spec.radii[0]
    val, err = quad(lap_phi_r, lo, spec.radii[-1],
                    epsabs=1e-13, epsrel=1e-13, limit=400)
    e_interior = -0.5 * (2.0 * math.pi) * val
    mismatch = abs(e_boundary - e_interior)
    return ClosedFormResult(
        energy=e_boundary, formula="conformal_boundary",
        quadrature_error=max(err * math.pi, mismatch),
        details={"interior_form": e_interior,
                 "boundary_form": e_boundary,
                 "e_n_phi": {f"r={r:g}": enphi for r, enphi in bdata}})


def rotsym_energy(spec):
    """Energy of d rho^2 + s(rho)^2 g_{S^{n-1}} against a flat ball.

    E = (1/2) Vol(bdry) ((n-1)/k - H) with k = s(rho_max) and
    H = (n-1) s'(rho_max)/k; requires H > 0.
    """
    if not isinstance(spec, RotSym):
        raise ValidationError("rotsym_energy requires a RotSym spec")
    spec.validate()
    n = spec.n
    k = float(np.asarray(spec.profile(spec.rho_max)))
    sp_b = float(np.asarray(spec.profile.deriv(spec.rho_max)))
    H = (n - 1) * sp_b / k
    if H <= 0:
        raise OutOfHypothesisError(
            f"boundary mean curvature H = {H:.6g} must be positive")
    vol = sphere_volume(n - 1) * k ** (n - 1)
    energy = 0.5 * vol * ((n - 1) / k - H)
    return ClosedFormResult(
        energy=energy, formula="rotsym", quadrature_error=0.0,
        details={"k": k, "H": H, "boundary_volume": vol})


class _RotSymConformalProfile:
    """phi(r) = log(s(rho(r)) / r) with rho(r) from the radius ODE.

    The conformal radius r satisfies d rho / d log r = s(rho) with
    rho(k) = rho_max, k = s(rho_max), mapping the rotationally
    symmetric disk onto the flat disk of radius k with phi = 0 on the
    boundary.  First and second derivatives come from the exact
    relations phi_r = (s'(rho) - 1)/r and
    phi_rr = (s''(rho) s(rho)/r - (s'(rho) - 1)) / r^2.
    """

    name = "rotsym_conformal"

    def __init__(self, spec, r_floor=1e-8):
        self._spec = spec
        self._k = float(np.asarray(spec.profile(spec.rho_max)))
        self._r_floor = r_floor * self._k
        tau_min = math.log(self._r_floor / self._k)
        sol = solve_ivp(
            lambda tau, rho: [float(np.asarray(spec.profile(rho[0])))],
            (0.0, tau_min), [spec.rho_max], dense_output=True,
            rtol=1e-12, atol=1e-14, method="DOP853")
        if not sol.success:
            raise ValidationError(
                f"conformal-radius ODE failed: {sol.message}")
        self._sol = sol

    @property
    def flat_radius(self):
        return self._k

    def _rho(self, r):
        r = np.asarray(r, dtype=float)
        rc = np.clip(r, self._r_floor, self._k)
        rho = self._sol.sol(np.log(rc / self._k))[0]
        # below the floor the map is linear to high accuracy
        small = r < self._r_floor
        if np.any(small):
            rho = np.where(small, rho * r / self._r_floor, rho)
        return rho

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        rho = self._rho(r)
        s = np.asarray(self._spec.profile(rho), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, np.log(np.where(r > 0, s, 1.0)
                                         / np.where(r > 0, r, 1.0)), 0.0)
        # at r -> 0, phi -> log(rho'(0) scaling); extend continuously
        tiny = r <= self._r_floor
        if np.any(tiny):
            rho_f = self._sol.sol(math.log(self._r_floor / self._k))[0]
            s_f = float(np.asarray(self._spec.profile(rho_f)))
            out = np.where(tiny, math.log(s_f / self._r_floor), out)
        return out

    def deriv(self, r):
        r = np.asarray(r, dtype=float)
        rho = self._rho(r)
        sp = np.asarray(self._spec.profile.deriv(rho), dtype=float)
        rsafe = np.maximum(r, self._r_floor)
        return np.where(r > self._r_floor, (sp - 1.0) / rsafe,
                        (sp - 1.0) / rsafe * (r / self._r_floor))

    def deriv2(self, r):
        r = np.asarray(r, dtype=float)
        rho = self._rho(r)
        s = np.asarray(self._spec.profile(rho), dtype=float)
        sp = np.asarray(self._spec.profile.deriv(rho), dtype=float)
        spp = np.asarray(self._spec.profile.deriv2(rho), dtype=float)
        rsafe = np.maximum(r, self._r_floor)
        return (spp * s / rsafe - (sp - 1.0)) / rsafe ** 2

    def serialize(self):
        return {"kind": self.name, "rho_max": self._spec.rho_max}


def rotsym_to_conformal(spec):
    """ConformalFlat disk spec equivalent to a 2D rotationally symmetric one."""
    if not isinstance(spec, RotSym):
        raise ValidationError("rotsym_to_conformal requires a RotSym spec")
    if spec.n != 2:
        raise ValidationError(
            "the conformal rewriting is only available in dimension 2")
    spec.validate()
    prof = _RotSymConformalProfile(spec)
    return ConformalFlat(phi=prof, topology="disk",
                         radii=(prof.flat_radius,))

"""Geometry checks: quadrature, curvature, boundary data, validation."""

import math

import numpy as np
import pytest

from spinql import (FlatDisk, ConformalFlat, RotSym, General2D,
                    PolyBumpProfile, SinProfile, LinearProfile,
                    traceless_bump_metric, identity_metric,
                    build_domain, boundary_geometry, scalar_curvature,
                    lambda2_distortion, ValidationError)


def test_flat_disk_area():
    domain = build_domain(FlatDisk(1.0), (32, 64))
    assert abs(domain.quad.sum() - math.pi) <= 1e-3


def test_flat_annulus_area():
    spec = ConformalFlat(phi=PolyBumpProfile((0.0,)), topology="annulus",
                         radii=(0.5, 1.0))
    domain = build_domain(spec, (32, 64))
    assert abs(domain.quad.sum() - math.pi * (1.0 - 0.25)) <= 1e-3


def test_conformal_boundary_length():
    # phi vanishes on the boundary, so the boundary circle is isometric
    # to the flat unit circle: length 2*pi to rounding.
    spec = ConformalFlat(phi=PolyBumpProfile((0.5,)))
    domain = build_domain(spec, (32, 64))
    (comp,) = domain.boundary
    assert abs(comp.measure.sum() - 2 * math.pi) <= 1e-10


def test_general2d_identity_matches_flat_disk():
    dom_g = build_domain(identity_metric(), (16, 32))
    dom_f = build_domain(FlatDisk(1.0), (16, 32))
    assert np.allclose(dom_g.frame, dom_f.frame, atol=1e-8)
    assert np.allclose(dom_g.omega, dom_f.omega, atol=1e-6)
    assert np.allclose(dom_g.scalarR, 0.0, atol=1e-5)
    assert np.allclose(dom_g.quad, dom_f.quad, atol=1e-10)


def test_scalar_curvature_flat_zero():
    domain = build_domain(FlatDisk(1.0), (24, 48))
    assert np.max(np.abs(scalar_curvature(domain))) <= 1e-12


def test_scalar_curvature_conformal_center():
    # For g = e^{2 phi} flat with phi = 0.5 (1 - r^2):
    # R = -2 e^{-2 phi} lap(phi), lap(phi) = -2, so R(0) = 4 e^{-1}.
    spec = ConformalFlat(phi=PolyBumpProfile((0.5,)))
    domain = build_domain(spec, (64, 128))
    center = np.argmin(domain.r.repeat(domain.ntheta))
    R = scalar_curvature(domain)
    assert abs(R[center] - 4.0 * math.exp(-1.0)) <= 2e-3


def test_rotsym_sphere_curvature():
    # The n = 3 round-sphere profile has constant scalar curvature
    # n (n - 1) = 6.
    spec = RotSym(n=3, profile=SinProfile(), rho_max=math.pi / 3)
    domain = build_domain(spec, (64,))
    assert np.max(np.abs(domain.scalarR - 6.0)) <= 1e-6


def test_flat_disk_boundary_H():
    domain = build_domain(FlatDisk(1.0), (32, 64))
    (comp,) = domain.boundary
    assert np.max(np.abs(comp.H - 1.0)) <= 1e-10


def test_conformal_boundary_H():
    # phi = c (1 - r^2): d(phi)/dn at r = 1 for the inward normal is 2c,
    # so the physical mean curvature is 1 - 2c; with c = 0.5 it vanishes.
    spec = ConformalFlat(phi=PolyBumpProfile((0.5,)))
    domain = build_domain(spec, (32, 64))
    (comp,) = domain.boundary
    assert np.max(np.abs(comp.H)) <= 1e-8


def test_rotsym_cap_boundary_H():
    spec = RotSym(n=3, profile=SinProfile(), rho_max=math.pi / 3)
    domain = build_domain(spec, (64,))
    assert abs(domain.boundary_H - 2.0 / math.sqrt(3.0)) <= 1e-10


def test_general2d_traceless_bump_H():
    # The traceless bump keeps the flat boundary circle isometric and
    # leaves its flat mean curvature: H = 1 on the unit circle.
    domain = build_domain(traceless_bump_metric(eps=0.1), (24, 48))
    (comp,) = domain.boundary
    assert np.max(np.abs(comp.H - 1.0)) <= 1e-10


def test_boundary_geometry_flat_reference():
    domain = build_domain(FlatDisk(1.0), (16, 32))
    bgeo = boundary_geometry(domain)
    (name, nodes, H_N, H_M, A_hat, measure) = bgeo.components[0]
    assert np.allclose(H_M, 1.0)
    assert np.allclose(A_hat, 1.0)
    assert abs(measure.sum() - 2 * math.pi) <= 1e-10


def test_lambda2_distortion_values():
    spec = ConformalFlat(phi=PolyBumpProfile((0.5,)))
    domain = build_domain(spec, (16, 32))
    lam = lambda2_distortion(domain)
    rr = np.repeat(domain.r, domain.ntheta)
    expect = np.exp(-2 * 0.5 * (1 - rr ** 2))
    assert np.allclose(lam, expect, atol=1e-12)
    assert np.allclose(lambda2_distortion(build_domain(FlatDisk(1.0),
                                                       (8, 16))), 1.0)


def test_validation_rejects_bad_specs():
    with pytest.raises(ValidationError):
        FlatDisk(-1.0).validate()
    with pytest.raises(ValidationError):
        # conformal factor must vanish on the boundary
        ConformalFlat(phi=lambda r: np.full_like(np.asarray(r, float),
                                                 0.3)).validate()
    with pytest.raises(ValidationError):
        ConformalFlat(phi=PolyBumpProfile((0.0,)), topology="annulus",
                      radii=(1.0, 0.5)).validate()
    with pytest.raises(ValidationError):
        # rotsym profile must close smoothly at the pole: s'(0) = 1
        RotSym(n=3, profile=PolyBumpProfile((1.0,)),
               rho_max=1.0).validate()


def test_build_domain_rejects_tiny_resolution():
    with pytest.raises(ValidationError):
        build_domain(FlatDisk(1.0), (2, 4))

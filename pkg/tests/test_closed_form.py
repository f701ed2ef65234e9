"""Exact-value checks for the quadrature-level energy evaluators."""

import math

import numpy as np
import pytest

from spinql import (FlatDisk, ConformalFlat, RotSym, PolyBumpProfile,
                    SinProfile, LinearProfile, build_domain,
                    boundary_geometry, brown_york, conformal_energy,
                    rotsym_energy, rotsym_to_conformal, NEG_INF,
                    ValidationError, OutOfHypothesisError)


def test_conformal_disk_exact_pi():
    # phi = 0.5 (1 - r^2): inward normal derivative on r = 1 is 1, so
    # E = (1/2) * 2 pi * 1 * ... = pi; both closed forms must agree.
    res = conformal_energy(ConformalFlat(phi=PolyBumpProfile((0.5,))))
    assert abs(res.energy - math.pi) <= 1e-8
    assert abs(res.details["interior_form"] - math.pi) <= 1e-8
    assert res.quadrature_error <= 1e-8


def test_conformal_flat_profile_zero():
    res = conformal_energy(ConformalFlat(phi=PolyBumpProfile((0.0,))))
    assert abs(res.energy) <= 1e-12


def test_conformal_quadratic_bump_zero():
    # phi = c (1 - r^2)^2 has vanishing boundary normal derivative, so
    # the boundary form gives 0; the interior form must agree.
    res = conformal_energy(ConformalFlat(phi=PolyBumpProfile((0.0, 0.3))))
    assert abs(res.energy) <= 1e-10
    assert abs(res.details["interior_form"]) <= 1e-8


def test_conformal_neg_inf():
    res = conformal_energy(ConformalFlat(phi=PolyBumpProfile((-0.5,))))
    assert res.energy == NEG_INF


def test_rotsym_sphere_cap():
    spec = RotSym(n=3, profile=SinProfile(), rho_max=math.pi / 3)
    res = rotsym_energy(spec)
    assert abs(res.energy - math.sqrt(3.0) * math.pi) <= 1e-8


def test_rotsym_flat_profile_zero():
    for rho0 in (0.5, 1.0, 2.0):
        spec = RotSym(n=2, profile=LinearProfile(), rho_max=rho0)
        assert abs(rotsym_energy(spec).energy) <= 1e-12


def test_rotsym_negative_H_out_of_hypothesis():
    spec = RotSym(n=3, profile=SinProfile(), rho_max=2 * math.pi / 3)
    with pytest.raises(OutOfHypothesisError):
        rotsym_energy(spec)


def test_rotsym_matches_conformal_rewriting():
    spec = RotSym(n=2, profile=SinProfile(), rho_max=math.pi / 3)
    direct = rotsym_energy(spec).energy
    spec2d = rotsym_to_conformal(spec)
    spec2d.validate()
    rewritten = conformal_energy(spec2d).energy
    assert abs(direct - rewritten) <= 1e-8


def test_rotsym_to_conformal_requires_n2():
    spec = RotSym(n=4, profile=SinProfile(), rho_max=math.pi / 3)
    with pytest.raises(ValidationError):
        rotsym_to_conformal(spec)


def test_brown_york_flat_disk_zero():
    domain = build_domain(FlatDisk(1.0), (16, 32))
    assert abs(brown_york(boundary_geometry(domain))) <= 1e-10


def test_brown_york_matches_conformal_closed_form():
    # For any admissible conformal disk the Brown-York value computed
    # from the discrete boundary geometry equals the closed form.
    for coeffs in ((0.5,), (0.3, -0.1)):
        spec = ConformalFlat(phi=PolyBumpProfile(coeffs))
        domain = build_domain(spec, (64, 128))
        by = brown_york(boundary_geometry(domain, spec))
        exact = conformal_energy(spec).energy
        assert abs(by - exact) <= 1e-8


def test_brown_york_component_selector():
    spec = ConformalFlat(phi=PolyBumpProfile((0.0,)), topology="annulus",
                         radii=(0.5, 1.0))
    domain = build_domain(spec, (16, 32))
    bgeo = boundary_geometry(domain, spec)
    names = [c[0] for c in bgeo.components]
    assert brown_york(bgeo, (names[0],)) is not None
    with pytest.raises(ValidationError):
        brown_york(bgeo, ("nonexistent",))


def test_rotsym_cap_brown_york_consistency():
    # Closed-form energy for rotsym metrics is exactly the Brown-York
    # deficit of the boundary sphere.
    spec = RotSym(n=3, profile=SinProfile(), rho_max=math.pi / 3)
    domain = build_domain(spec, (64,))
    by = brown_york(boundary_geometry(domain, spec))
    assert abs(by - rotsym_energy(spec).energy) <= 1e-10


def test_type_checks():
    with pytest.raises(ValidationError):
        conformal_energy(FlatDisk(1.0))
    with pytest.raises(ValidationError):
        rotsym_energy(FlatDisk(1.0))

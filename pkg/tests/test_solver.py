"""Constrained-solve checks: kernel detection, boundary data handling,
particular solves, energy evaluators, and kernel minimization."""

import math

import numpy as np
import pytest

from spinql import (FlatDisk, ConformalFlat, PolyBumpProfile, build_domain,
                    build_twisted_rep, SpinorField, NEG_INF,
                    build_system, kernel_basis, boundary_ones,
                    project_boundary_data, solve_bvp, energy_bulk,
                    energy_normal_derivative, energy_boundary,
                    BulkEnergyForm, minimize_energy, quasilocal_energy)
from spinql.solver import _l2_inner, _solve_raw


REP = build_twisted_rep(2)


def _annulus(radius_in=0.5):
    return ConformalFlat(phi=PolyBumpProfile((0.0,)), topology="annulus",
                         radii=(radius_in, 1.0))


def test_flat_disk_solution_is_constant():
    domain = build_domain(FlatDisk(1.0), (24, 48))
    system = build_system(domain, REP)
    kernel = kernel_basis(system)
    assert kernel.dim == 1
    data = project_boundary_data(system, boundary_ones(system), kernel)
    assert not data.modified
    psi = solve_bvp(system, data, kernel)
    spread = np.max(np.abs(psi.values - psi.values.mean(axis=0)))
    assert spread <= 1e-8
    assert energy_bulk(domain, REP, psi) <= 1e-12


def test_kernel_dimensions():
    dom_d = build_domain(FlatDisk(1.0), (16, 32))
    assert kernel_basis(build_system(dom_d, REP)).dim == 1
    dom_a = build_domain(_annulus(), (16, 32))
    kern = kernel_basis(build_system(dom_a, REP))
    assert kern.dim == 2
    # kernel fields satisfy the homogeneous constraint: orthonormal
    for i in range(kern.dim):
        for j in range(kern.dim):
            ip = _l2_inner(dom_a, kern.basis[i].flat, kern.basis[j].flat)
            assert abs(ip - (1.0 if i == j else 0.0)) <= 1e-8


def test_flat_disk_kernel_is_volume_form():
    domain = build_domain(FlatDisk(1.0), (16, 32))
    kern = kernel_basis(build_system(domain, REP))
    dvol = np.zeros((domain.num_nodes, REP.dim), dtype=complex)
    dvol[:, 3] = 1.0
    dv = SpinorField(dvol, REP.dim)
    nrm = math.sqrt(_l2_inner(domain, dv.flat, dv.flat).real)
    cosine = abs(_l2_inner(domain, dv.flat, kern.basis[0].flat)) / nrm
    assert cosine >= 0.99


def test_fourier_and_direct_backends_agree():
    spec = ConformalFlat(phi=PolyBumpProfile((0.4,)))
    domain = build_domain(spec, (16, 32))
    sys_f = build_system(domain, REP)
    kern_f = kernel_basis(sys_f)
    data = project_boundary_data(sys_f, boundary_ones(sys_f), kern_f)
    x_f, res_f = _solve_raw(sys_f, data)

    sys_d = build_system(domain, REP)
    sys_d._fourier = False  # force the sparse-factorization backend
    kern_d = kernel_basis(sys_d)
    x_d, res_d = _solve_raw(sys_d, data)

    assert kern_f.dim == kern_d.dim == 1
    # compare modulo the kernel direction
    b = kern_f.basis[0].flat
    x_f = x_f - _l2_inner(domain, b, x_f) * b
    b = kern_d.basis[0].flat
    x_d = x_d - _l2_inner(domain, b, x_d) * b
    scale = np.linalg.norm(x_f)
    assert np.linalg.norm(x_f - x_d) <= 1e-6 * scale


def test_project_boundary_data_annulus_single_component():
    # Driving only the outer circle of an annulus conflicts with the
    # kernel traces; the projection must modify the datum and leave it
    # orthogonal to gammaN * (kernel traces).
    domain = build_domain(_annulus(), (16, 32))
    system = build_system(domain, REP)
    kernel = kernel_basis(system)
    raw = boundary_ones(system, ("outer",))
    data = project_boundary_data(system, raw, kernel)
    assert data.modified
    node_pos = {p: q for q, p in enumerate(system.boundary_nodes)}
    for b in kernel.basis:
        acc = 0.0 + 0.0j
        for comp in domain.boundary:
            for q, p in enumerate(comp.nodes):
                t = REP.gamma_dir(comp.normal[q]) @ b.values[p]
                acc += comp.measure[q] * np.vdot(t, data.values[node_pos[p]])
        assert abs(acc) <= 1e-8


def test_minimize_energy_dim0_identity():
    domain = build_domain(FlatDisk(1.0), (16, 32))
    form = BulkEnergyForm(domain, REP)
    vals = np.zeros((domain.num_nodes, REP.dim), dtype=complex)
    vals[:, 0] = 1.0
    psi = SpinorField(vals, REP.dim)

    class _Empty:
        dim = 0
        basis = ()

    minimizer, energy = minimize_energy(psi, _Empty(), form)
    assert minimizer is psi
    assert abs(energy) <= 1e-12


def test_energy_quadratic_scaling():
    spec = ConformalFlat(phi=PolyBumpProfile((0.5,)))
    domain = build_domain(spec, (16, 32))
    rng = np.random.default_rng(11)
    vals = (rng.normal(size=(domain.num_nodes, REP.dim))
            + 1j * rng.normal(size=(domain.num_nodes, REP.dim)))
    psi = SpinorField(vals, REP.dim)
    psi2 = SpinorField(2.0 * vals, REP.dim)
    e1 = energy_bulk(domain, REP, psi)
    e2 = energy_bulk(domain, REP, psi2)
    assert abs(e2 - 4.0 * e1) <= 1e-10 * abs(e1)
    b1 = energy_boundary(domain, REP, psi)
    b2 = energy_boundary(domain, REP, psi2)
    assert abs(b2 - 4.0 * b1) <= 1e-8 * (1 + abs(b1))


def test_energy_evaluators_flat_constant():
    domain = build_domain(FlatDisk(1.0), (24, 48))
    vals = np.zeros((domain.num_nodes, REP.dim), dtype=complex)
    vals[:, 0] = 1.0
    psi = SpinorField(vals, REP.dim)
    assert abs(energy_bulk(domain, REP, psi)) <= 1e-10
    assert abs(energy_normal_derivative(domain, REP, psi)) <= 1e-10


def test_quasilocal_energy_flat_disk():
    report = quasilocal_energy(FlatDisk(1.0), resolution=(24, 48))
    assert not report.neg_inf
    assert abs(report.energy) <= 5e-3
    assert report.kernel.dim == 1
    assert abs(report.brown_york) <= 1e-10


def test_quasilocal_energy_neg_inf():
    spec = ConformalFlat(phi=PolyBumpProfile((-0.5,)))
    report = quasilocal_energy(spec, resolution=(24, 48))
    assert report.neg_inf
    assert report.energy == NEG_INF
    assert report.closed_form == NEG_INF


def test_spinor_path_falls_back_with_note():
    spec = ConformalFlat(phi=PolyBumpProfile((0.5,)))
    r_twisted = quasilocal_energy(spec, resolution=(24, 48), path="twisted")
    r_spinor = quasilocal_energy(spec, resolution=(24, 48), path="spinor")
    assert r_spinor.path == "twisted"
    assert any("spinor" in n for n in r_spinor.notes)
    delta = abs(r_spinor.energy - r_twisted.energy)
    assert delta <= 1e-6 * (1 + abs(r_twisted.energy))


def test_boundary_ones_validation():
    domain = build_domain(FlatDisk(1.0), (16, 32))
    system = build_system(domain, REP)
    from spinql import ValidationError
    with pytest.raises(ValidationError):
        boundary_ones(system, ("no_such_component",))
    with pytest.raises(ValidationError):
        boundary_ones(system, ())

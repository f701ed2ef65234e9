"""Discrete Riemannian data on polar grids.

Metric specifications are declarative (flat disk, radially conformal
metrics, rotationally symmetric profiles, general 2D metrics given by
component functions).  ``build_domain`` turns a 2D spec into a
``DiscreteDomain``: polar nodes, a Cartesian-gauge orthonormal frame,
connection coefficients, scalar curvature, volume quadrature weights
and per-component boundary geometry.  Rotationally symmetric specs in
any even dimension get a 1-D ``RadialDomain`` used by the closed-form
evaluators.

Grid conventions
----------------
Disk topology uses a radially half-offset grid r_i = (i + 1/2) h_r with
h_r chosen so the last ring lies exactly on the boundary; no node sits
at r = 0.  Radial stencils at the innermost ring reach across the
origin via the antipodal identification f(-r, th) = f(r, th + pi),
valid for smooth Cartesian-component fields.  Annulus topology uses an
inclusive uniform radial grid with both end rings on the boundary.
The angular grid th_j = j * 2 pi / n_theta is periodic.

The orthonormal frame is a Cartesian gauge: it does not rotate with
theta, so spinor components are single-valued 2 pi-periodic functions
and no antiperiodic bookkeeping is needed.  An optional constant gauge
rotation is supported for frame-independence checks.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline

from .errors import ValidationError, UnsupportedDimensionError

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# scalar radial profiles
# ---------------------------------------------------------------------------

class PolyBumpProfile:
    """phi(r) = sum_k c_k (1 - (r/R)^2)^k, vanishing at r = R.

    The canonical family of conformal factors: smooth on the closed
    disk, zero on the boundary, with analytic first and second radial
    derivatives.
    """

    name = "poly_1mr2"

    def __init__(self, coeffs, radius=1.0):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValidationError("poly_1mr2 needs a 1-D coefficient list")
        self.coeffs = c
        self.radius = float(radius)

    def __call__(self, r):
        u = 1.0 - (np.asarray(r, dtype=float) / self.radius) ** 2
        out = np.zeros_like(u)
        for k, ck in enumerate(self.coeffs, start=1):
            out += ck * u ** k
        return out

    def deriv(self, r):
        r = np.asarray(r, dtype=float)
        u = 1.0 - (r / self.radius) ** 2
        du = -2.0 * r / self.radius ** 2
        out = np.zeros_like(u)
        for k, ck in enumerate(self.coeffs, start=1):
            out += ck * k * u ** (k - 1)
        return out * du

    def deriv2(self, r):
        r = np.asarray(r, dtype=float)
        u = 1.0 - (r / self.radius) ** 2
        du = -2.0 * r / self.radius ** 2
        d2u = -2.0 / self.radius ** 2
        f1 = np.zeros_like(u)
        f2 = np.zeros_like(u)
        for k, ck in enumerate(self.coeffs, start=1):
            f1 += ck * k * u ** (k - 1)
            if k >= 2:
                f2 += ck * k * (k - 1) * u ** (k - 2)
        return f2 * du ** 2 + f1 * d2u

    def serialize(self):
        return {"kind": self.name, "coeffs": list(map(float, self.coeffs))}


class SampledRadialProfile:
    """Radial profile given by samples, interpolated with a cubic spline."""

    name = "sampled"

    def __init__(self, r_samples, values):
        r = np.asarray(r_samples, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 4:
            raise ValidationError(
                "sampled profile needs matching 1-D arrays of length >= 4")
        if np.any(np.diff(r) <= 0):
            raise ValidationError("sample abscissae must be increasing")
        self._spline = CubicSpline(r, v)
        self._r = r
        self._v = v

    def __call__(self, r):
        return self._spline(r)

    def deriv(self, r):
        return self._spline(r, 1)

    def deriv2(self, r):
        return self._spline(r, 2)

    def serialize(self):
        return {"kind": self.name,
                "r": list(map(float, self._r)),
                "values": list(map(float, self._v))}


class SinProfile:
    """s(rho) = sin(rho): round-sphere warping profile."""

    name = "sin"

    def __call__(self, rho):
        return np.sin(rho)

    def deriv(self, rho):
        return np.cos(rho)

    def deriv2(self, rho):
        return -np.sin(rho)

    def serialize(self):
        return {"kind": self.name}


class LinearProfile:
    """s(rho) = rho: the flat-cone (actually flat-disk) profile."""

    name = "linear"

    def __call__(self, rho):
        return np.asarray(rho, dtype=float) + 0.0

    def deriv(self, rho):
        return np.ones_like(np.asarray(rho, dtype=float))

    def deriv2(self, rho):
        return np.zeros_like(np.asarray(rho, dtype=float))

    def serialize(self):
        return {"kind": self.name}


# ---------------------------------------------------------------------------
# metric specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlatDisk:
    """The flat disk of the given radius, compared against itself."""

    radius: float = 1.0
    variant: str = field(default="FlatDisk", init=False)

    def validate(self):
        if not self.radius > 0:
            raise ValidationError("FlatDisk radius must be positive")


@dataclass(frozen=True)
class ConformalFlat:
    """g = e^{2 phi} * (flat), phi a radial profile vanishing on the boundary.

    The background is the flat metric on the same disk/annulus and the
    comparison map is the identity, so the boundary-isometry hypothesis
    is exactly the requirement phi = 0 on each boundary circle.
    """

    phi: object
    topology: str = "disk"
    radii: tuple = (1.0,)
    variant: str = field(default="ConformalFlat", init=False)

    def validate(self):
        if self.topology not in ("disk", "annulus"):
            raise ValidationError(
                f"topology must be disk or annulus, got {self.topology!r}")
        radii = tuple(float(r) for r in self.radii)
        if self.topology == "disk":
            if len(radii) != 1 or radii[0] <= 0:
                raise ValidationError("disk needs one positive radius")
            bdry = radii
        else:
            if len(radii) != 2 or not 0 < radii[0] < radii[1]:
                raise ValidationError(
                    "annulus needs radii (r_in, r_out) with 0 < r_in < r_out")
            bdry = radii
        for rb in bdry:
            val = float(np.asarray(self.phi(rb)))
            if abs(val) > 1e-10:
                raise ValidationError(
                    f"conformal factor must vanish on the boundary: "
                    f"phi({rb}) = {val:.3e}")

    @property
    def outer_radius(self):
        return float(self.radii[-1])


@dataclass(frozen=True)
class RotSym:
    """Rotationally symmetric metric d rho^2 + s(rho)^2 g_{S^{n-1}}."""

    n: int
    profile: object
    rho_max: float
    variant: str = field(default="RotSym", init=False)

    def validate(self):
        if self.n < 2:
            raise ValidationError("RotSym dimension must be >= 2")
        if not 0 < self.rho_max:
            raise ValidationError("rho_max must be positive")
        s0 = float(np.asarray(self.profile(1e-7)))
        sp0 = float(np.asarray(self.profile.deriv(1e-7)))
        if abs(s0) > 1e-5 or abs(sp0 - 1.0) > 1e-5:
            raise ValidationError(
                "profile must satisfy s(0) = 0, s'(0) = 1 (smooth closure)")
        rho = np.linspace(self.rho_max * 1e-3, self.rho_max, 256)
        if np.any(np.asarray(self.profile(rho)) <= 0):
            raise ValidationError("profile must be positive on (0, rho_max]")


@dataclass(frozen=True)
class General2D:
    """2D metric given by Cartesian component functions g11, g12, g22.

    Each component is a callable of (x, y) arrays.  The induced metric
    on each boundary circle must be the unit-speed circle metric of the
    flat background (checked node-wise at build time).
    """

    g11: object
    g12: object
    g22: object
    topology: str = "disk"
    radii: tuple = (1.0,)
    name: str = "custom"
    params: dict = field(default_factory=dict)
    variant: str = field(default="General2D", init=False)

    def validate(self):
        if self.topology not in ("disk", "annulus"):
            raise ValidationError(
                f"topology must be disk or annulus, got {self.topology!r}")
        radii = tuple(float(r) for r in self.radii)
        if self.topology == "disk":
            if len(radii) != 1 or radii[0] <= 0:
                raise ValidationError("disk needs one positive radius")
        else:
            if len(radii) != 2 or not 0 < radii[0] < radii[1]:
                raise ValidationError(
                    "annulus needs radii (r_in, r_out) with 0 < r_in < r_out")

    @property
    def outer_radius(self):
        return float(self.radii[-1])


def traceless_bump_metric(eps, q=1.0, p=0.0, radius=1.0, topology="disk",
                          radii=None):
    """General2D spec g = I + eps * h with traceless h vanishing at r = R.

    h11 = -h22 = q * eta, h12 = h21 = p * eta, eta = (1 - (r/R)^2)^2.
    eta and its first derivative vanish on the boundary, so the induced
    boundary metric stays the flat unit-speed circle for all eps.
    """

    if radii is None:
        radii = (radius,)
    R2 = float(radii[-1]) ** 2

    def eta(x, y):
        return (1.0 - (x * x + y * y) / R2) ** 2

    def g11(x, y):
        return 1.0 + eps * q * eta(x, y)

    def g12(x, y):
        return eps * p * eta(x, y) + 0.0 * x

    def g22(x, y):
        return 1.0 - eps * q * eta(x, y)

    return General2D(g11=g11, g12=g12, g22=g22, topology=topology,
                     radii=tuple(radii), name="traceless_bump",
                     params={"eps": float(eps), "q": float(q),
                             "p": float(p)})


def identity_metric(topology="disk", radii=(1.0,)):
    """General2D spec for the flat metric (same output path as FlatDisk)."""

    def one(x, y):
        return np.ones_like(np.asarray(x, dtype=float))

    def zero(x, y):
        return np.zeros_like(np.asarray(x, dtype=float))

    return General2D(g11=one, g12=zero, g22=one, topology=topology,
                     radii=tuple(radii), name="identity")


# ---------------------------------------------------------------------------
# discrete domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryComponent:
    """Ordered boundary ring with its geometric data per node.

    ``normal`` and ``tangent`` hold orthonormal-frame components of the
    inward unit normal and the unit tangent (oriented with increasing
    theta on the outer circle).  ``measure`` are arclength quadrature
    weights in the domain metric; ``H`` is the mean curvature of the
    ring inside the domain with the sign normalized so the unit circle
    bounding the unit disk has H = 1.
    """

    name: str
    nodes: np.ndarray
    theta: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    measure: np.ndarray
    H: np.ndarray
    flat_radius: float


@dataclass(frozen=True)
class DiscreteDomain:
    """Polar-grid discretization of a 2D metric specification."""

    spec: object
    nr: int
    ntheta: int
    r: np.ndarray
    theta: np.ndarray
    h_r: float
    h_theta: float
    x: np.ndarray
    y: np.ndarray
    frame: np.ndarray        # (N, 2, 2): frame[p, a, k] = (e_a)^k at node p
    omega: np.ndarray        # (N, 2): omega[p, s] = w_{12}(e_s) at node p
    scalarR: np.ndarray      # (N,)
    sqrt_detg: np.ndarray    # (N,)
    quad: np.ndarray         # (N,) volume weights for dvol_g
    boundary: tuple          # BoundaryComponent tuple
    topology: str
    gauge_angle: float

    @property
    def num_nodes(self):
        return self.nr * self.ntheta

    def node_index(self, i, j):
        return i * self.ntheta + (j % self.ntheta)

    @property
    def boundary_rings(self):
        """Radial ring indices lying on the boundary."""
        if self.topology == "disk":
            return (self.nr - 1,)
        return (0, self.nr - 1)

    def boundary_node_mask(self):
        mask = np.zeros(self.num_nodes, dtype=bool)
        for comp in self.boundary:
            mask[comp.nodes] = True
        return mask


@dataclass(frozen=True)
class RadialDomain:
    """1-D grid for rotationally symmetric metrics in any even dimension."""

    spec: object
    n: int
    rho: np.ndarray
    h: float
    s: np.ndarray
    s_prime: np.ndarray
    s_second: np.ndarray
    scalarR: np.ndarray
    quad: np.ndarray          # weights for dvol including the sphere factor
    boundary_H: float
    flat_radius: float        # radius k = s(rho_max) of the comparison sphere
    sphere_volume: float      # Vol(S^{n-1})


def sphere_volume(n_minus_1):
    """Volume of the round unit sphere S^{n-1}."""
    n = n_minus_1 + 1
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _radial_grid(topology, radii, nr):
    if topology == "disk":
        R = radii[-1]
        h = R / (nr - 0.5)
        r = (np.arange(nr) + 0.5) * h
    else:
        r_in, r_out = radii
        h = (r_out - r_in) / (nr - 1)
        r = r_in + np.arange(nr) * h
    return r, h


def _radial_cell_integrals(topology, radii, r, h):
    """Exact integral of r dr over each node's radial cell."""
    if topology == "disk":
        lo = np.maximum(r - 0.5 * h, 0.0)
    else:
        lo = np.maximum(r - 0.5 * h, radii[0])
    hi = np.minimum(r + 0.5 * h, radii[-1])
    return 0.5 * (hi ** 2 - lo ** 2)


def build_scalar_derivatives(nr, ntheta, r, h_r, h_theta, topology):
    """Sparse d/dr and d/dtheta on scalar grid functions.

    Centered second order in both directions; second-order one-sided
    stencils on boundary rings; the disk's innermost ring differences
    across the origin via the antipodal identification.
    Returns (Dr, Dtheta) acting on node-ordered vectors (p = i*ntheta+j).
    """

    N = nr * ntheta
    rows, cols, vals = [], [], []

    def add(i, j, i2, j2, v):
        rows.append(i * ntheta + (j % ntheta))
        cols.append(i2 * ntheta + (j2 % ntheta))
        vals.append(v)

    for i in range(nr):
        for j in range(ntheta):
            if i == nr - 1:
                add(i, j, i - 2, j, 1.0 / (2 * h_r))
                add(i, j, i - 1, j, -4.0 / (2 * h_r))
                add(i, j, i, j, 3.0 / (2 * h_r))
            elif i == 0:
                if topology == "disk":
                    # ghost node at radius -h/2 is the antipode at +h/2
                    add(i, j, 1, j, 1.0 / (2 * h_r))
                    add(i, j, 0, j + ntheta // 2, -1.0 / (2 * h_r))
                else:
                    add(i, j, 0, j, -3.0 / (2 * h_r))
                    add(i, j, 1, j, 4.0 / (2 * h_r))
                    add(i, j, 2, j, -1.0 / (2 * h_r))
            else:
                add(i, j, i + 1, j, 1.0 / (2 * h_r))
                add(i, j, i - 1, j, -1.0 / (2 * h_r))
    Dr = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))

    rows, cols, vals = [], [], []
    for i in range(nr):
        for j in range(ntheta):
            add(i, j, i, j + 1, 1.0 / (2 * h_theta))
            add(i, j, i, j - 1, -1.0 / (2 * h_theta))
    Dtheta = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    return Dr, Dtheta


def cartesian_derivatives(domain):
    """Sparse d/dx, d/dy on scalar grid functions of the domain's grid."""
    Dr, Dth = build_scalar_derivatives(
        domain.nr, domain.ntheta, domain.r, domain.h_r, domain.h_theta,
        domain.topology)
    rr = np.repeat(domain.r, domain.ntheta)
    tt = np.tile(domain.theta, domain.nr)
    cos_t, sin_t = np.cos(tt), np.sin(tt)
    Dx = sp.diags(cos_t) @ Dr - sp.diags(sin_t / rr) @ Dth
    Dy = sp.diags(sin_t) @ Dr + sp.diags(cos_t / rr) @ Dth
    return Dx.tocsr(), Dy.tocsr()


def _sqrtm_2x2_spd(G):
    """Symmetric square root of a field of 2x2 SPD matrices, shape (N,2,2)."""
    a, b, d = G[:, 0, 0], G[:, 0, 1], G[:, 1, 1]
    det = a * d - b * b
    if np.any(det <= 0) or np.any(a <= 0):
        raise ValidationError("metric must be positive definite at all nodes")
    s = np.sqrt(det)
    t = np.sqrt(a + d + 2.0 * s)
    out = np.empty_like(G)
    out[:, 0, 0] = (a + s) / t
    out[:, 0, 1] = b / t
    out[:, 1, 0] = b / t
    out[:, 1, 1] = (d + s) / t
    return out


def _rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, s], [-s, c]])


def build_domain(spec, resolution, gauge_angle=0.0):
    """Discretize a 2D metric spec; RotSym specs get a RadialDomain.

    resolution = (n_r, n_theta) with n_r >= 8, n_theta >= 16 even.
    """

    spec.validate()
    if isinstance(spec, RotSym):
        return _build_radial_domain(spec, resolution)

    nr, ntheta = resolution
    if nr < 8 or ntheta < 16 or ntheta % 2:
        raise ValidationError(
            f"resolution must have n_r >= 8, n_theta >= 16 even, "
            f"got {(nr, ntheta)}")

    if isinstance(spec, FlatDisk):
        topology, radii = "disk", (spec.radius,)
    else:
        topology, radii = spec.topology, tuple(float(v) for v in spec.radii)

    r, h_r = _radial_grid(topology, radii, nr)
    theta = np.arange(ntheta) * (TWO_PI / ntheta)
    h_theta = TWO_PI / ntheta
    rr = np.repeat(r, ntheta)
    tt = np.tile(theta, nr)
    x, y = rr * np.cos(tt), rr * np.sin(tt)
    N = nr * ntheta
    cell_r = _radial_cell_integrals(topology, radii, r, h_r)
    area_w = np.repeat(cell_r, ntheta) * h_theta
    Rgauge = _rotation(gauge_angle)

    if isinstance(spec, FlatDisk) or (
            isinstance(spec, ConformalFlat)):
        if isinstance(spec, FlatDisk):
            phi = np.zeros(N)
            phi_r = np.zeros(N)
            lap_phi = np.zeros(N)
        else:
            phi = np.asarray(spec.phi(rr), dtype=float)
            phi_r = np.asarray(spec.phi.deriv(rr), dtype=float)
            phi_rr = np.asarray(spec.phi.deriv2(rr), dtype=float)
            lap_phi = phi_rr + phi_r / rr
        e_mphi = np.exp(-phi)
        frame = np.einsum("ak,p->pak", Rgauge, e_mphi)
        # w_12 = phi_y dx - phi_x dy; evaluated on the rotated frame
        phi_x = phi_r * np.cos(tt)
        phi_y = phi_r * np.sin(tt)
        w_frame = np.stack([e_mphi * phi_y, -e_mphi * phi_x], axis=1)
        omega = w_frame @ Rgauge.T
        scalarR = -2.0 * np.exp(-2.0 * phi) * lap_phi
        sqrt_detg = np.exp(2.0 * phi)
        quad = area_w * sqrt_detg
        boundary = _conformal_boundary(spec, topology, radii, nr, ntheta,
                                       theta, h_theta, Rgauge)
    elif isinstance(spec, General2D):
        G = np.empty((N, 2, 2))
        G[:, 0, 0] = np.asarray(spec.g11(x, y), dtype=float)
        G[:, 0, 1] = G[:, 1, 0] = np.asarray(spec.g12(x, y), dtype=float)
        G[:, 1, 1] = np.asarray(spec.g22(x, y), dtype=float)
        sqrtG = _sqrtm_2x2_spd(G)
        sqrt_detg = sqrtG[:, 0, 0] * sqrtG[:, 1, 1] - sqrtG[:, 0, 1] ** 2
        frame_sym = np.linalg.inv(sqrtG)
        frame = np.einsum("ab,pbk->pak", Rgauge, frame_sym)
        Dr, Dth = build_scalar_derivatives(nr, ntheta, r, h_r, h_theta,
                                           topology)
        cos_t, sin_t = np.cos(tt), np.sin(tt)
        Dx = sp.diags(cos_t) @ Dr - sp.diags(sin_t / rr) @ Dth
        Dy = sp.diags(sin_t) @ Dr + sp.diags(cos_t / rr) @ Dth
        # structure equations: d tau^a = -w^a_b wedge tau^b determines the
        # Cartesian components (w_x, w_y) of w_12 from a 2x2 solve per node
        tau1 = sqrtG[:, 0, :]     # tau^1 = (G^{1/2})_{1k} dx^k
        tau2 = sqrtG[:, 1, :]
        c1 = Dx @ tau1[:, 1] - Dy @ tau1[:, 0]
        c2 = Dx @ tau2[:, 1] - Dy @ tau2[:, 0]
        det = tau1[:, 0] * tau2[:, 1] - tau1[:, 1] * tau2[:, 0]
        w_x = (-tau1[:, 0] * c1 - tau2[:, 0] * c2) / det
        w_y = (-tau1[:, 1] * c1 - tau2[:, 1] * c2) / det
        w_cart = np.stack([w_x, w_y], axis=1)
        omega = np.einsum("pak,pk->pa", frame, w_cart)
        curl_w = Dx @ w_y - Dy @ w_x
        scalarR = 2.0 * curl_w / sqrt_detg
        quad = area_w * sqrt_detg
        boundary = _general_boundary(spec, topology, radii, nr, ntheta,
                                     theta, h_theta, G, sqrtG, frame,
                                     omega, r)
    else:
        raise ValidationError(f"unknown metric spec {type(spec).__name__}")

    gram = np.einsum("pak,pbl,pkl->pab", frame, frame, _metric_field(
        spec, N, x, y))
    if not np.allclose(gram, np.eye(2), atol=1e-10):
        raise ValidationError("frame failed orthonormality check")

    return DiscreteDomain(
        spec=spec, nr=nr, ntheta=ntheta, r=r, theta=theta, h_r=h_r,
        h_theta=h_theta, x=x, y=y, frame=frame, omega=omega,
        scalarR=np.asarray(scalarR, dtype=float),
        sqrt_detg=np.broadcast_to(sqrt_detg, (N,)).copy(),
        quad=quad, boundary=boundary, topology=topology,
        gauge_angle=float(gauge_angle))


def _metric_field(spec, N, x, y):
    G = np.empty((N, 2, 2))
    if isinstance(spec, FlatDisk):
        G[:] = np.eye(2)
    elif isinstance(spec, ConformalFlat):
        r = np.hypot(x, y)
        e2 = np.exp(2.0 * np.asarray(spec.phi(r), dtype=float))
        G[:, 0, 0] = e2
        G[:, 1, 1] = e2
        G[:, 0, 1] = G[:, 1, 0] = 0.0
    else:
        G[:, 0, 0] = np.asarray(spec.g11(x, y), dtype=float)
        G[:, 0, 1] = G[:, 1, 0] = np.asarray(spec.g12(x, y), dtype=float)
        G[:, 1, 1] = np.asarray(spec.g22(x, y), dtype=float)
    return G


def _ring_nodes(ring, ntheta):
    return ring * ntheta + np.arange(ntheta)


def _conformal_boundary(spec, topology, radii, nr, ntheta, theta, h_theta,
                        Rgauge):
    comps = []
    rings = [(nr - 1, "outer", radii[-1], -1.0)]
    if topology == "annulus":
        rings.insert(0, (0, "inner", radii[0], +1.0))
    for ring, name, rb, inward in rings:
        nodes = _ring_nodes(ring, ntheta)
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        # inward unit normal and unit tangent in Cartesian frame components
        # (phi = 0 on the boundary so frame = rotated Cartesian there)
        normal = np.stack([inward * cos_t, inward * sin_t], axis=1)
        tangent = np.stack([-sin_t, cos_t], axis=1)
        normal = normal @ Rgauge.T
        tangent = tangent @ Rgauge.T
        if isinstance(spec, FlatDisk):
            dphi = 0.0
        else:
            dphi = float(np.asarray(spec.phi.deriv(rb)))
        # H = 1/r + phi_r on the outer circle, -(1/r + phi_r) seen from
        # inside on the inner circle of an annulus
        H = np.full(ntheta, -inward * (1.0 / rb + dphi))
        measure = np.full(ntheta, rb * h_theta)
        comps.append(BoundaryComponent(
            name=name, nodes=nodes, theta=theta.copy(), normal=normal,
            tangent=tangent, measure=measure, H=H, flat_radius=rb))
    return tuple(comps)


def _metric_coord_derivs(spec, x, y, step=1e-6):
    """dG[p, a, i, j] = d g_ij / d x^a at the points (x_p, y_p).

    Central differences of the metric callables with a fixed small
    step: truncation O(step^2) and roundoff O(eps/step) are both far
    below any grid-level error.
    """
    funcs = ((spec.g11, (0, 0)), (spec.g12, (0, 1)), (spec.g22, (1, 1)))
    dG = np.zeros((x.size, 2, 2, 2))
    for f, (i, j) in funcs:
        dx = (np.asarray(f(x + step, y)) - np.asarray(f(x - step, y))) \
            / (2 * step)
        dy = (np.asarray(f(x, y + step)) - np.asarray(f(x, y - step))) \
            / (2 * step)
        for a, d in ((0, dx), (1, dy)):
            dG[:, a, i, j] = d
            dG[:, a, j, i] = d
    return dG


def _general_boundary(spec, topology, radii, nr, ntheta, theta, h_theta,
                      G, sqrtG, frame, omega, r):
    comps = []
    rings = [(nr - 1, "outer", radii[-1], -1.0)]
    if topology == "annulus":
        rings.insert(0, (0, "inner", radii[0], +1.0))
    for ring, name, rb, inward in rings:
        nodes = _ring_nodes(ring, ntheta)
        Gb = G[nodes]
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        t_coord = np.stack([-sin_t, cos_t], axis=1)
        speed = np.einsum("pk,pkl,pl->p", t_coord, Gb, t_coord)
        if np.max(np.abs(speed - 1.0)) > 1e-10:
            raise ValidationError(
                f"boundary circle {name!r} is not unit-speed in g "
                f"(max deviation {np.max(np.abs(speed - 1.0)):.3e}); the "
                "comparison map must restrict to a boundary isometry")
        # frame components: t^a = (G^{1/2} t)_a; inward normal from the
        # conormal -inward * dr, normalized, raised with g^{-1}
        tang = np.einsum("pak,pk->pa", sqrtG[nodes], t_coord)
        conormal = inward * np.stack([cos_t, sin_t], axis=1)
        Ginv = np.linalg.inv(Gb)
        nu_coord = np.einsum("pkl,pl->pk", Ginv, conormal)
        nu_norm = np.sqrt(np.einsum("pk,pkl,pl->p", nu_coord, Gb, nu_coord))
        nu_coord /= nu_norm[:, None]
        normal = np.einsum("pak,pk->pa", sqrtG[nodes], nu_coord)
        # frame = R_gauge @ G^{-1/2}; recover the constant gauge rotation
        # so the boundary vectors live in the same frame components
        Rg = frame[nodes[0]] @ sqrtG[nodes[0]]
        tang = tang @ Rg.T
        normal = normal @ Rg.T
        # mean curvature from the curve acceleration in coordinates:
        # H = g(nabla_T T, nu) with T the unit tangent and nu the unit
        # inward normal.  The Christoffel symbols are evaluated from
        # the metric callables with a fixed small step, so H carries no
        # grid discretization error (the Brown-York comparison needs
        # more accuracy than the grid connection provides).
        x = rb * cos_t
        y = rb * sin_t
        dG = _metric_coord_derivs(spec, x, y)
        Gamma = 0.5 * np.einsum(
            "pkl,pijl->pkij", Ginv,
            dG + dG.transpose(0, 2, 1, 3) - dG.transpose(0, 2, 3, 1))
        T = t_coord
        dT_ds = np.stack([-cos_t, -sin_t], axis=1) / rb
        acc = dT_ds + np.einsum("pkij,pi,pj->pk", Gamma, T, T)
        H = np.einsum("pk,pkl,pl->p", acc, Gb, nu_coord)
        measure = np.full(ntheta, rb * h_theta)
        comps.append(BoundaryComponent(
            name=name, nodes=nodes, theta=theta.copy(), normal=normal,
            tangent=tang, measure=measure, H=H, flat_radius=rb))
    return tuple(comps)


def _build_radial_domain(spec, resolution):
    m = resolution[0] if isinstance(resolution, (tuple, list)) \
        else int(resolution)
    if m < 8:
        raise ValidationError("radial resolution must be >= 8")
    h = spec.rho_max / (m - 0.5)
    rho = (np.arange(m) + 0.5) * h
    s = np.asarray(spec.profile(rho), dtype=float)
    sp_ = np.asarray(spec.profile.deriv(rho), dtype=float)
    spp = np.asarray(spec.profile.deriv2(rho), dtype=float)
    n = spec.n
    scalarR = (n - 1) * (-2.0 * spp / s + (n - 2) * (1.0 - sp_ ** 2) / s ** 2)
    vol_sphere = sphere_volume(n - 1)
    lo = np.maximum(rho - 0.5 * h, 0.0)
    hi = np.minimum(rho + 0.5 * h, spec.rho_max)
    quad = vol_sphere * s ** (n - 1) * (hi - lo)
    k = float(np.asarray(spec.profile(spec.rho_max)))
    sp_b = float(np.asarray(spec.profile.deriv(spec.rho_max)))
    boundary_H = (n - 1) * sp_b / k
    return RadialDomain(
        spec=spec, n=n, rho=rho, h=h, s=s, s_prime=sp_, s_second=spp,
        scalarR=scalarR, quad=quad, boundary_H=boundary_H, flat_radius=k,
        sphere_volume=vol_sphere)


# ---------------------------------------------------------------------------
# derived fields
# ---------------------------------------------------------------------------

def scalar_curvature(domain):
    """Per-node scalar curvature of the discretized metric."""
    return domain.scalarR


@dataclass(frozen=True)
class BoundaryGeometry:
    """Mean curvatures on both sides of the boundary comparison.

    Per boundary component: H_N (mean curvature inside the domain),
    H_M (mean curvature of the matching flat-background circle/sphere)
    and the background second fundamental form coefficient A_hat = 1/k.
    """

    components: tuple  # of (name, nodes, H_N, H_M, A_hat, measure)


def boundary_geometry(domain, spec=None):
    """Boundary mean curvatures and flat-background comparison data."""
    if isinstance(domain, RadialDomain):
        k = domain.flat_radius
        n = domain.n
        comp = ("boundary", None,
                np.array([domain.boundary_H]),
                np.array([(n - 1) / k]),
                np.array([1.0 / k]),
                np.array([domain.sphere_volume * k ** (n - 1)]))
        return BoundaryGeometry(components=(comp,))
    comps = []
    for bc in domain.boundary:
        k = bc.flat_radius
        comps.append((bc.name, bc.nodes, bc.H.copy(),
                      np.full(bc.H.shape, 1.0 / k),
                      np.full(bc.H.shape, 1.0 / k),
                      bc.measure.copy()))
    return BoundaryGeometry(components=tuple(comps))


def lambda2_distortion(domain):
    """Top-exterior-power distortion e^{-2 phi} of the comparison map.

    Only meaningful for conformally flat specs (and the flat disk,
    where it is identically 1).
    """
    spec = domain.spec
    if isinstance(spec, FlatDisk):
        return np.ones(domain.num_nodes)
    if not isinstance(spec, ConformalFlat):
        raise ValidationError(
            "lambda2_distortion requires a conformally flat spec")
    rr = np.repeat(domain.r, domain.ntheta)
    return np.exp(-2.0 * np.asarray(spec.phi(rr), dtype=float))

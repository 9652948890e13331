"""Discretized smooth metric measure spaces with boundary.

A space is a flat box with periodic lateral axes and one interval axis
(``t``), carrying a weight ``phi``, a dimensional parameter ``m >= 0`` and
an optional pointwise conformal factor ``sigma``.  The represented
geometry is the conformal change of the flat base by ``sigma``:

    metric   e^{2 sigma/(m+n-2)} g_flat
    volume   e^{(m+n)   sigma/(m+n-2)} e^{-phi} dV
    boundary e^{(m+n-1) sigma/(m+n-2)} e^{-phi} dsigma

Curvature of the changed metric is never materialized; energies on a
space with ``sigma != 0`` route through the transformation law of the
weighted conformal Laplacian, which maps them to base-space energies of
``e^{sigma/2} w``.

Discretization: second-order central differences for nodal operators,
staggered (midpoint) differences for the Dirichlet energy, trapezoidal
quadrature along the interval axis and uniform weights along periodic
axes.  All operations are pure functions of immutable inputs and all
reductions are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NumericRefusal

ScalarField = np.ndarray

PERIODIC = "periodic"
INTERVAL = "interval"


def conformal_coefficients(m: float, n: int) -> tuple[float, float]:
    """Interior and boundary curvature coefficients of the conformal pair.

    Returns ``(m+n-2)/(4(m+n-1))`` and ``(m+n-2)/(2(m+n-1))``.
    """
    return (m + n - 2) / (4 * (m + n - 1)), (m + n - 2) / (2 * (m + n - 1))


@dataclass(frozen=True)
class Grid:
    """Flat box grid: periodic lateral axes plus a final interval axis.

    ``node_counts``, ``spacings`` and ``topology`` are per axis; the last
    axis must be the single interval axis (the ``t`` direction).  The
    ``t = 0`` face is always a boundary face; the ``t = L`` face is one
    unless ``include_top_face`` is False (truncated half-space mode).
    """

    node_counts: tuple[int, ...]
    spacings: tuple[float, ...]
    topology: tuple[str, ...]
    include_top_face: bool = True

    def __post_init__(self):
        n = len(self.node_counts)
        if n < 3:
            raise ConfigError(f"dimension must be >= 3, got n={n}")
        if len(self.spacings) != n or len(self.topology) != n:
            raise ConfigError("node_counts, spacings and topology must have equal length")
        if any(h <= 0 for h in self.spacings):
            raise ConfigError(f"spacings must be positive, got {self.spacings}")
        if any(top not in (PERIODIC, INTERVAL) for top in self.topology):
            raise ConfigError(f"topology entries must be periodic|interval: {self.topology}")
        if self.topology[-1] != INTERVAL or any(t != PERIODIC for t in self.topology[:-1]):
            raise ConfigError(
                "supported grids have periodic lateral axes and one final interval axis"
            )
        if any(c < 4 for c in self.node_counts):
            raise ConfigError("need at least 4 nodes per axis for second-order stencils")

    @classmethod
    def half_torus(
        cls,
        n: int,
        lateral_nodes: int = 16,
        lateral_length: float = 1.0,
        t_nodes: int = 17,
        t_length: float = 1.0,
        include_top_face: bool = True,
    ) -> "Grid":
        """T^{n-1} x [0, L] with uniform lateral boxes."""
        counts = (lateral_nodes,) * (n - 1) + (t_nodes,)
        spac = (lateral_length / lateral_nodes,) * (n - 1) + (t_length / (t_nodes - 1),)
        topo = (PERIODIC,) * (n - 1) + (INTERVAL,)
        return cls(counts, spac, topo, include_top_face)

    @property
    def n(self) -> int:
        return len(self.node_counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.node_counts

    @property
    def t_length(self) -> float:
        return (self.node_counts[-1] - 1) * self.spacings[-1]

    @property
    def lateral_lengths(self) -> tuple[float, ...]:
        return tuple(c * h for c, h in zip(self.node_counts[:-1], self.spacings[:-1]))

    @property
    def max_spacing(self) -> float:
        return max(self.spacings)

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return np.arange(self.node_counts[axis]) * self.spacings[axis]

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        return list(
            np.meshgrid(*[self.axis_coordinates(a) for a in range(self.n)], indexing="ij")
        )

    def axis_weights(self, axis: int) -> np.ndarray:
        """1-D quadrature weights along one axis (trapezoid on the interval axis)."""
        cnt, h = self.node_counts[axis], self.spacings[axis]
        if self.topology[axis] == PERIODIC:
            return np.full(cnt, h)
        w = np.full(cnt, h)
        w[0] = w[-1] = h / 2
        return w

    @cached_property
    def node_weights(self) -> np.ndarray:
        """Quadrature weights for every node; sums to the flat box volume."""
        return _outer_weights([self.axis_weights(a) for a in range(self.n)])

    @cached_property
    def face_weights(self) -> np.ndarray:
        """Quadrature weights on one boundary face; sums to the flat face area."""
        return _outer_weights([self.axis_weights(a) for a in range(self.n - 1)])

    def staggered_weights(self, axis: int) -> np.ndarray:
        """Quadrature weights for midpoint gradient samples along ``axis``."""
        vectors = []
        for a in range(self.n):
            if a == axis:
                cnt = self.node_counts[a]
                if self.topology[a] == INTERVAL:
                    cnt -= 1
                vectors.append(np.full(cnt, self.spacings[a]))
            else:
                vectors.append(self.axis_weights(a))
        return _outer_weights(vectors)

    @property
    def boundary_faces(self) -> tuple[str, ...]:
        return ("bottom", "top") if self.include_top_face else ("bottom",)


def _outer_weights(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones([len(v) for v in vectors])
    for axis, v in enumerate(vectors):
        shape = [1] * len(vectors)
        shape[axis] = len(v)
        out = out * v.reshape(shape)
    return out


@dataclass
class BoundaryField:
    """Nodal values on the boundary faces (``top`` absent if excluded)."""

    bottom: np.ndarray
    top: np.ndarray | None = None

    def faces(self):
        yield "bottom", self.bottom
        if self.top is not None:
            yield "top", self.top

    def map(self, fn) -> "BoundaryField":
        return BoundaryField(fn(self.bottom), None if self.top is None else fn(self.top))


def face_slice(w: np.ndarray, face: str) -> np.ndarray:
    return w[..., 0] if face == "bottom" else w[..., -1]


class EnergyBreakdown(NamedTuple):
    """The three numerator integrals of the quotient, in divergence form."""

    dirichlet: float
    curv_interior: float
    curv_boundary: float

    @property
    def total(self) -> float:
        return self.dirichlet + self.curv_interior + self.curv_boundary


@dataclass(eq=False)
class MeasureSpace:
    """Five-tuple (box, flat metric, e^{-phi} dV, e^{-phi} dsigma, m) with an
    optional conformal factor ``sigma`` applied on top (factors add under
    composition).  Instances are treated as immutable."""

    grid: Grid
    phi: np.ndarray
    m: float
    sigma: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.sigma is None:
            self.sigma = np.zeros(self.grid.shape)
        self.sigma = np.asarray(self.sigma, dtype=float)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def is_conformally_flat(self) -> bool:
        return not np.any(self.sigma)

    @property
    def norm_exponent(self) -> float:
        """Critical trace exponent 2(m+n-1)/(m+n-2)."""
        m, n = self.m, self.n
        return 2 * (m + n - 1) / (m + n - 2)

    def base(self) -> "MeasureSpace":
        """The same space with the conformal factor stripped."""
        if self.is_conformally_flat:
            return self
        return MeasureSpace(self.grid, self.phi, self.m)

    @property
    def sigma_tilde(self) -> np.ndarray:
        return self.sigma / (self.m + self.n - 2)

    @cached_property
    def phi_hat(self) -> np.ndarray:
        """Weight of the conformally changed space: phi - m sigma/(m+n-2)."""
        return self.phi - self.m * self.sigma_tilde

    @cached_property
    def interior_measure(self) -> np.ndarray:
        """Density of v^m dV on the (possibly changed) space, per flat dV."""
        return np.exp((self.m + self.n) * self.sigma_tilde - self.phi)

    @cached_property
    def boundary_measure(self) -> BoundaryField:
        """Density of v^m dsigma per flat face measure."""
        dens = np.exp((self.m + self.n - 1) * self.sigma_tilde - self.phi)
        top = face_slice(dens, "top") if self.grid.include_top_face else None
        return BoundaryField(face_slice(dens, "bottom"), top)

    @cached_property
    def interior_norm_density(self) -> np.ndarray:
        """Density of v^{m-1} dV on the changed space (interior-norm measure)."""
        expo = (self.m + self.n - 1) * self.sigma_tilde
        if self.m > 0:
            expo = expo - (self.m - 1) / self.m * self.phi
        return np.exp(expo)

    def field(self, spec) -> np.ndarray:
        """Materialize a field from an array, a constant, or a callable of the
        coordinate arrays."""
        if callable(spec):
            out = np.asarray(spec(*self.grid.coords()), dtype=float)
            return np.broadcast_to(out, self.grid.shape).copy()
        arr = np.asarray(spec, dtype=float)
        if arr.ndim == 0:
            return np.full(self.grid.shape, float(arr))
        if arr.shape != self.grid.shape:
            raise ConfigError(f"field shape {arr.shape} does not match grid {self.grid.shape}")
        return arr

    def check_field(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != self.grid.shape:
            raise ConfigError(f"field shape {w.shape} does not match grid {self.grid.shape}")
        return w

    def integrate(self, integrand: np.ndarray) -> float:
        """Flat-measure interior quadrature (densities go in the integrand)."""
        return float(np.sum(integrand * self.grid.node_weights))

    def integrate_boundary(self, integrand: BoundaryField) -> float:
        total = 0.0
        for _, vals in integrand.faces():
            total += float(np.sum(vals * self.grid.face_weights))
        return total

    def total_boundary_measure(self) -> float:
        return self.integrate_boundary(self.boundary_measure)


def build_space(grid: Grid, phi=0.0, m: float = 0.0, sigma=0.0) -> MeasureSpace:
    """Validated constructor for a smooth metric measure space with boundary.

    Rejects ``m < 0``, ``m = 0`` with a nonzero weight, non-finite fields,
    and weights so large that the interior-norm density e^{phi/m} would be
    numerically untrustworthy (max |phi|/m above 30).
    """
    if m < 0:
        raise ConfigError(f"dimensional parameter must satisfy m >= 0, got {m}")
    probe = MeasureSpace(grid, np.zeros(grid.shape), float(m))
    phi_arr = probe.field(phi)
    sigma_arr = probe.field(sigma)
    if not (np.all(np.isfinite(phi_arr)) and np.all(np.isfinite(sigma_arr))):
        raise ConfigError("phi and sigma must be finite at every node")
    if m == 0 and np.any(phi_arr):
        raise ConfigError("m = 0 requires phi identically zero")
    if m > 0 and np.max(np.abs(phi_arr)) / m > 30:
        raise ConfigError(
            f"max |phi|/m = {np.max(np.abs(phi_arr)) / m:.1f} exceeds 30; "
            "the interior norm would be ill-conditioned"
        )
    out = MeasureSpace(grid, phi_arr, float(m), sigma_arr)
    if out.total_boundary_measure() <= 0:
        raise ConfigError("total weighted boundary measure must be positive")
    return out


def _require_flat(space: MeasureSpace, op: str) -> None:
    if not space.is_conformally_flat:
        raise NumericRefusal(
            f"{op} is defined on the flat base only; route sigma != 0 through the "
            "transformation law (conformal_energy / conformal_law_residual)"
        )


# ---------------------------------------------------------------------------
# nodal finite-difference operators (flat base)
# ---------------------------------------------------------------------------


def nodal_gradient(grid: Grid, f: np.ndarray) -> list[np.ndarray]:
    """Second-order nodal gradient; one-sided at the interval-axis ends."""
    out = []
    for axis in range(grid.n):
        h = grid.spacings[axis]
        if grid.topology[axis] == PERIODIC:
            out.append((np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2 * h))
        else:
            fm = np.moveaxis(f, axis, -1)
            d = np.empty_like(fm)
            d[..., 1:-1] = (fm[..., 2:] - fm[..., :-2]) / (2 * h)
            d[..., 0] = (-3 * fm[..., 0] + 4 * fm[..., 1] - fm[..., 2]) / (2 * h)
            d[..., -1] = (3 * fm[..., -1] - 4 * fm[..., -2] + fm[..., -3]) / (2 * h)
            out.append(np.moveaxis(d, -1, axis))
    return out


def nodal_laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Flat Laplacian, compact [1,-2,1] stencils, one-sided at interval ends."""
    out = np.zeros(grid.shape)
    for axis in range(grid.n):
        h2 = grid.spacings[axis] ** 2
        if grid.topology[axis] == PERIODIC:
            out += (np.roll(f, -1, axis=axis) - 2 * f + np.roll(f, 1, axis=axis)) / h2
        else:
            fm = np.moveaxis(f, axis, -1)
            d = np.empty_like(fm)
            d[..., 1:-1] = (fm[..., 2:] - 2 * fm[..., 1:-1] + fm[..., :-2]) / h2
            d[..., 0] = (2 * fm[..., 0] - 5 * fm[..., 1] + 4 * fm[..., 2] - fm[..., 3]) / h2
            d[..., -1] = (
                2 * fm[..., -1] - 5 * fm[..., -2] + 4 * fm[..., -3] - fm[..., -4]
            ) / h2
            out += np.moveaxis(d, -1, axis)
    return out


def outward_normal_derivative(grid: Grid, w: np.ndarray) -> BoundaryField:
    """One-sided second-order d/d(eta) on the boundary faces.

    The outer normal is -d/dt on the t=0 face and +d/dt on the t=L face.
    """
    h = grid.spacings[-1]
    bottom = -(-3 * w[..., 0] + 4 * w[..., 1] - w[..., 2]) / (2 * h)
    top = None
    if grid.include_top_face:
        top = (3 * w[..., -1] - 4 * w[..., -2] + w[..., -3]) / (2 * h)
    return BoundaryField(bottom, top)


def weighted_laplacian(space: MeasureSpace, w) -> np.ndarray:
    """Delta_phi w = Delta w - grad w . grad phi on the flat base."""
    _require_flat(space, "weighted_laplacian")
    w = space.check_field(w)
    grad_w = nodal_gradient(space.grid, w)
    grad_phi = nodal_gradient(space.grid, space.phi)
    drift = sum(gw * gp for gw, gp in zip(grad_w, grad_phi))
    return nodal_laplacian(space.grid, w) - drift


def weighted_scalar_curvature(space: MeasureSpace) -> np.ndarray:
    """R^m_phi = 2 Delta phi - ((m+1)/m) |grad phi|^2 on the flat base.

    For m = 0 (hence phi = 0) the curvature is identically zero.  Spaces
    with a conformal factor never materialize their curvature; energies go
    through the transformation law instead.
    """
    _require_flat(space, "weighted_scalar_curvature")
    if space.m == 0:
        if np.any(space.phi):
            raise NumericRefusal("m = 0 requires phi identically zero")
        return np.zeros(space.grid.shape)
    grad_phi = nodal_gradient(space.grid, space.phi)
    grad_sq = sum(g * g for g in grad_phi)
    return 2 * nodal_laplacian(space.grid, space.phi) - (space.m + 1) / space.m * grad_sq


def gromov_mean_curvature(space: MeasureSpace) -> BoundaryField:
    """H^m_phi = H_g + d(phi)/d(eta); H_g = 0 on the flat faces."""
    _require_flat(space, "gromov_mean_curvature")
    return outward_normal_derivative(space.grid, space.phi)


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------


def _staggered_diffs(grid: Grid, f: np.ndarray, axis: int) -> np.ndarray:
    h = grid.spacings[axis]
    if grid.topology[axis] == PERIODIC:
        return (np.roll(f, -1, axis=axis) - f) / h
    fm = np.moveaxis(f, axis, -1)
    return np.moveaxis((fm[..., 1:] - fm[..., :-1]) / h, -1, axis)


def _midpoint_average(grid: Grid, f: np.ndarray, axis: int) -> np.ndarray:
    if grid.topology[axis] == PERIODIC:
        return 0.5 * (np.roll(f, -1, axis=axis) + f)
    fm = np.moveaxis(f, axis, -1)
    return np.moveaxis(0.5 * (fm[..., 1:] + fm[..., :-1]), -1, axis)


def dirichlet_energy(grid: Grid, w: np.ndarray, density: np.ndarray) -> float:
    """Integral of |grad w|^2 against a nodal density, staggered samples."""
    total = 0.0
    for axis in range(grid.n):
        d = _staggered_diffs(grid, w, axis)
        mid = _midpoint_average(grid, density, axis)
        total += float(np.sum(d * d * mid * grid.staggered_weights(axis)))
    return total


def _base_energy_breakdown(space: MeasureSpace, w: np.ndarray) -> EnergyBreakdown:
    """Divergence-form energy on a flat-base space (sigma = 0)."""
    grid = space.grid
    c_r, c_h = conformal_coefficients(space.m, space.n)
    mu = np.exp(-space.phi)
    dirichlet = dirichlet_energy(grid, w, mu)
    curv_r = weighted_scalar_curvature(space)
    curv_int = c_r * space.integrate(curv_r * w * w * mu)
    h_field = gromov_mean_curvature(space)
    curv_bd = 0.0
    for face, h_vals in h_field.faces():
        wf = face_slice(w, face)
        mf = face_slice(mu, face)
        curv_bd += c_h * float(np.sum(h_vals * wf * wf * mf * grid.face_weights))
    return EnergyBreakdown(dirichlet, curv_int, curv_bd)


def conformal_energy(space: MeasureSpace, w) -> EnergyBreakdown:
    """Numerator integrals of the quotient: Dirichlet, interior-curvature and
    boundary terms, separately, in divergence form.

    For a space carrying a conformal factor the value is computed on the
    flat base at ``e^{sigma/2} w`` (transformation law); the reported parts
    are the base-space parts of that field.
    """
    w = space.check_field(w)
    if space.is_conformally_flat:
        return _base_energy_breakdown(space, w)
    return _base_energy_breakdown(space.base(), np.exp(space.sigma / 2) * w)


def hat_curvatures(space: MeasureSpace) -> tuple[np.ndarray, BoundaryField]:
    """Curvature data of the conformally changed space, obtained by applying
    the transformed operator pair to the constant function 1.

    This is the one sanctioned way curvature of a changed metric enters any
    computation; it needs only flat-base operators.
    """
    m, n = space.m, space.n
    c_r, c_h = conformal_coefficients(m, n)
    base = space.base()
    st = space.sigma_tilde
    e_half = np.exp(space.sigma / 2)
    lap = weighted_laplacian(base, e_half)
    r_base = weighted_scalar_curvature(base)
    r_hat = np.exp(-(m + n + 2) * st / 2) * (-lap + c_r * r_base * e_half) / c_r
    dn = outward_normal_derivative(space.grid, e_half)
    h_base = gromov_mean_curvature(base)
    h_hat_faces = {}
    for face, dn_vals in dn.faces():
        hb = h_base.bottom if face == "bottom" else h_base.top
        stf = face_slice(st, face)
        ef = face_slice(e_half, face)
        h_hat_faces[face] = np.exp(-(m + n) * stf / 2) * (dn_vals + c_h * hb * ef) / c_h
    return r_hat, BoundaryField(h_hat_faces["bottom"], h_hat_faces.get("top"))


def conformal_energy_intrinsic(space: MeasureSpace, w) -> EnergyBreakdown:
    """Energy evaluated intrinsically on the changed space.

    Uses the conformal gradient factor and the hat curvatures from
    :func:`hat_curvatures` instead of routing through the base field
    ``e^{sigma/2} w``; agrees with :func:`conformal_energy` to O(spacing^2).
    """
    w = space.check_field(w)
    if space.is_conformally_flat:
        return _base_energy_breakdown(space, w)
    grid = space.grid
    m, n = space.m, space.n
    c_r, c_h = conformal_coefficients(m, n)
    dens = np.exp(space.sigma - space.phi)  # |grad w|^2_hat d(mu_hat) per flat sample
    dirichlet = dirichlet_energy(grid, w, dens)
    r_hat, h_hat = hat_curvatures(space)
    curv_int = c_r * space.integrate(r_hat * w * w * space.interior_measure)
    curv_bd = 0.0
    for face, h_vals in h_hat.faces():
        wf = face_slice(w, face)
        bf = face_slice(np.exp((m + n - 1) * space.sigma_tilde - space.phi), face)
        curv_bd += c_h * float(np.sum(h_vals * wf * wf * bf * grid.face_weights))
    return EnergyBreakdown(dirichlet, curv_int, curv_bd)


def conformal_change(space: MeasureSpace, sigma) -> MeasureSpace:
    """Pointwise conformal change; successive factors add."""
    sigma_arr = space.field(sigma)
    return MeasureSpace(space.grid, space.phi, space.m, space.sigma + sigma_arr)


def conformal_law_residual(space: MeasureSpace, sigma, w) -> float:
    """Relative defect of the transformation law in energy form.

    Compares the intrinsic energy of ``w`` on the changed space against the
    base-space energy of ``e^{sigma/2} w``; converges to zero at O(spacing^2)
    for smooth data and vanishes identically for sigma = 0.
    """
    w = space.check_field(w)
    sigma_arr = space.field(sigma)
    hat = conformal_change(space, sigma_arr)
    lhs = conformal_energy_intrinsic(hat, w).total
    rhs = conformal_energy(space, np.exp(sigma_arr / 2) * w).total
    return abs(lhs - rhs) / max(1.0, abs(rhs))


def operator_pairing(space: MeasureSpace, w, u) -> float:
    """(L^m_phi w, u) + (B^m_phi w, u) via nodal operators (flat base).

    Independent of the divergence-form energy; the two agree within
    quadrature error, which is the integration-by-parts consistency check.
    """
    _require_flat(space, "operator_pairing")
    w = space.check_field(w)
    u = space.check_field(u)
    c_r, c_h = conformal_coefficients(space.m, space.n)
    mu = np.exp(-space.phi)
    lw = -weighted_laplacian(space, w) + c_r * weighted_scalar_curvature(space) * w
    total = space.integrate(lw * u * mu)
    dn = outward_normal_derivative(space.grid, w)
    h_field = gromov_mean_curvature(space)
    for face, dn_vals in dn.faces():
        hb = h_field.bottom if face == "bottom" else h_field.top
        bw = dn_vals + c_h * hb * face_slice(w, face)
        total += float(
            np.sum(bw * face_slice(u, face) * face_slice(mu, face) * space.grid.face_weights)
        )
    return total


def scale_metric(space: MeasureSpace, c: float) -> MeasureSpace:
    """The space with metric scaled by the constant c (spacings times sqrt c)."""
    if c <= 0:
        raise ConfigError(f"metric scale must be positive, got {c}")
    grid = space.grid
    scaled = Grid(
        grid.node_counts,
        tuple(h * np.sqrt(c) for h in grid.spacings),
        grid.topology,
        grid.include_top_face,
    )
    return MeasureSpace(scaled, space.phi, space.m, space.sigma)


# ---------------------------------------------------------------------------
# quadratic-form matrix (shared by the eigensolver and the minimizer)
# ---------------------------------------------------------------------------


def energy_form_matrix(space: MeasureSpace) -> sp.csr_matrix:
    """Sparse symmetric matrix A with w^T A w = total conformal energy.

    Assembled from staggered differences plus diagonal curvature terms; for
    spaces with a conformal factor the base matrix is conjugated by
    diag(e^{sigma/2}), which realizes the transformation-law energy.
    """
    grid = space.grid
    base = space.base()
    shape = grid.shape
    size = int(np.prod(shape))
    idx = np.arange(size).reshape(shape)
    mu = np.exp(-base.phi)
    rows, cols, vals = [], [], []
    for axis in range(grid.n):
        h = grid.spacings[axis]
        if grid.topology[axis] == PERIODIC:
            i_nodes = idx
            j_nodes = np.roll(idx, -1, axis=axis)
            mid = _midpoint_average(grid, mu, axis)
        else:
            im = np.moveaxis(idx, axis, -1)
            i_nodes = np.moveaxis(im[..., :-1], -1, axis)
            j_nodes = np.moveaxis(im[..., 1:], -1, axis)
            mid = _midpoint_average(grid, mu, axis)
        coeff = (mid * grid.staggered_weights(axis) / h**2).ravel()
        i_flat, j_flat = i_nodes.ravel(), j_nodes.ravel()
        rows += [i_flat, j_flat, i_flat, j_flat]
        cols += [i_flat, j_flat, j_flat, i_flat]
        vals += [coeff, coeff, -coeff, -coeff]
    c_r, c_h = conformal_coefficients(space.m, space.n)
    diag = c_r * weighted_scalar_curvature(base) * mu * grid.node_weights
    h_field = gromov_mean_curvature(base)
    diag_b = np.zeros(shape)
    for face, h_vals in h_field.faces():
        contrib = c_h * h_vals * face_slice(mu, face) * grid.face_weights
        if face == "bottom":
            diag_b[..., 0] += contrib
        else:
            diag_b[..., -1] += contrib
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append((diag + diag_b).ravel())
    a = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    ).tocsr()
    if not space.is_conformally_flat:
        s = sp.diags(np.exp(space.sigma / 2).ravel())
        a = (s @ a @ s).tocsr()
    return a

"""Sharp trace constants, extremal bubbles, and half-space verification.

The sharp constant of the trace inequality on the Euclidean half-space is

    Lambda_{m,n} = (m+n-2)^2 [ Vol(S^{2m+n-1})^{1/(2m+n-1)} / (2(2m+n-2)) ]^{(2m+n-1)/(m+n-1)}
                   [ Gamma(2m+n-1) / (pi^m Gamma(m+n-1)) ]^{1/(m+n-1)}

with the m = 0 limit (n-2)/2 Vol(S^{n-1})^{1/(n-1)}.  Equality holds
exactly on the two extremal bubble families; everything here verifies
that numerically: quotients of sampled fields with analytic power-law
tail corrections, closed-form radial integrals, pointwise Euler-Lagrange
residuals of the bubbles, and the dimensional-lifting identities behind
the constant.

Quadrature reduces to a 2-D (r, t) box by rotational symmetry about the
bubble center; a full Cartesian engine at n = 3 cross-checks the
reduction and handles non-radial perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericRefusal

__all__ = [
    "sphere_volume",
    "lambda_mn",
    "bubble_model_constant",
    "BubbleParams",
    "Bubble",
    "bubble",
    "HalfspaceQuad",
    "HalfspaceQuotient",
    "halfspace_quotient",
    "halfspace_quotient_cartesian",
    "case_integral",
    "LiftCheckResult",
    "lift_check",
    "bubble_el_residual",
    "bubble_boundary_volume",
    "bubble_boundary_volume_closed_form",
    "structured_perturbations",
]


def sphere_volume(k: float) -> float:
    """Volume (surface measure) of the unit k-sphere: 2 pi^{(k+1)/2} / Gamma((k+1)/2)."""
    if k < 0:
        raise ConfigError(f"sphere dimension must be >= 0, got {k}")
    return 2.0 * pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


def lambda_mn(m: float, n: int) -> float:
    """Sharp constant of the weighted trace inequality on the half-space."""
    if n < 3:
        raise ConfigError(f"n must be >= 3, got {n}")
    if m < 0:
        raise ConfigError(f"m must be >= 0, got {m}")
    if m == 0:
        return (n - 2) / 2 * sphere_volume(n - 1) ** (1.0 / (n - 1))
    k = 2 * m + n - 1
    return (
        (m + n - 2) ** 2
        * (sphere_volume(k) ** (1.0 / k) / (2 * (2 * m + n - 2))) ** (k / (m + n - 1))
        * (gamma(2 * m + n - 1) / (pi**m * gamma(m + n - 1))) ** (1.0 / (m + n - 1))
    )


def bubble_model_constant(m: float, n: int) -> float:
    """c(m, n) = (m+n-1) / (m (m+n-2)^2), the scale constant of the tau family."""
    if m <= 0:
        raise ConfigError(f"the tau-family constant needs m > 0, got {m}")
    return (m + n - 1) / (m * (m + n - 2) ** 2)


@dataclass(frozen=True)
class BubbleParams:
    """Selects one member of an extremal family.

    ``family`` is ``"epsilon"`` (scale epsilon, unnormalized) or ``"tau"``
    (boundary-volume-invariant reparametrization; requires m > 0).
    ``center`` lies in the boundary hyperplane (n-1 coordinates).
    """

    m: float
    n: int
    family: str
    scale: float
    center: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n < 3:
            raise ConfigError(f"n must be >= 3, got {self.n}")
        if self.m < 0:
            raise ConfigError(f"m must be >= 0, got {self.m}")
        if self.family not in ("epsilon", "tau"):
            raise ConfigError(f"family must be 'epsilon' or 'tau', got {self.family!r}")
        if self.scale <= 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if self.family == "tau" and self.m == 0:
            raise ConfigError("the tau family requires m > 0")
        center = self.center if self.center else (0.0,) * (self.n - 1)
        if len(center) != self.n - 1:
            raise ConfigError(f"center needs {self.n - 1} coordinates, got {len(center)}")
        object.__setattr__(self, "center", tuple(float(c) for c in center))


class Bubble:
    """Callable extremal field over the half-space.

    ``profile(r, t)`` evaluates at distance r from the center inside the
    boundary hyperplane; ``__call__(x..., t)`` takes full coordinates.
    """

    def __init__(self, params: BubbleParams):
        self.params = params

    def profile(self, r, t):
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        m, n = self.params.m, self.params.n
        beta = (m + n - 2) / 2
        if self.params.family == "epsilon":
            eps = self.params.scale
            return (2 * eps / ((eps + t) ** 2 + r**2)) ** beta
        tau = self.params.scale
        c = bubble_model_constant(m, n)
        theta = (n - 1) * (m + n - 2) / (4 * (m + n - 1))
        s = np.sqrt(c / tau)
        return tau ** (-theta) * ((1 + s * t) ** 2 + c * r**2 / tau) ** (-beta)

    def __call__(self, *coords):
        *xs, t = coords
        x0 = self.params.center
        r2 = sum((np.asarray(x) - c) ** 2 for x, c in zip(xs, x0))
        return self.profile(np.sqrt(r2), t)

    def sup_value(self) -> float:
        """Supremum over the closed half-space (attained at the center, t=0)."""
        return float(self.profile(0.0, 0.0))

    def on_quad(self, quad: "HalfspaceQuad") -> np.ndarray:
        rr, tt = quad.mesh()
        return self.profile(rr, tt)


def bubble(params: BubbleParams) -> Bubble:
    """Construct the extremal field selected by ``params``."""
    return Bubble(params)


# ---------------------------------------------------------------------------
# half-space quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfspaceQuad:
    """Radial (r, t) quadrature box [0, R]^2 for x-radially-symmetric fields.

    ``resolution`` is the cell count per axis (so resolution+1 nodes);
    ``tail_order`` 0 drops tail corrections, 1 fits the leading power on
    outgoing rays, 2 adds a first-order 1/rho correction per ray.
    """

    radius: float
    resolution: int
    tail_order: int = 2

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError(f"truncation radius must be positive, got {self.radius}")
        if self.resolution < 16:
            raise ConfigError(f"resolution must be >= 16, got {self.resolution}")
        if self.tail_order not in (0, 1, 2):
            raise ConfigError(f"tail order must be 0, 1 or 2, got {self.tail_order}")

    @property
    def spacing(self) -> float:
        return self.radius / self.resolution

    def axis_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.radius, self.resolution + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        r = self.axis_nodes()
        return np.meshgrid(r, r, indexing="ij")

    def axis_weights(self) -> np.ndarray:
        w = np.full(self.resolution + 1, self.spacing)
        w[0] = w[-1] = self.spacing / 2
        return w

    def coarsened(self) -> "HalfspaceQuad":
        if self.resolution % 2:
            raise ConfigError("Richardson coarsening needs an even resolution")
        return HalfspaceQuad(self.radius, self.resolution // 2, self.tail_order)


def _grad_fd(w: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central differences, one-sided second order at both ends."""
    wm = np.moveaxis(w, axis, -1)
    d = np.empty_like(wm)
    d[..., 1:-1] = (wm[..., 2:] - wm[..., :-2]) / (2 * h)
    d[..., 0] = (-3 * wm[..., 0] + 4 * wm[..., 1] - wm[..., 2]) / (2 * h)
    d[..., -1] = (3 * wm[..., -1] - 4 * wm[..., -2] + wm[..., -3]) / (2 * h)
    return np.moveaxis(d, -1, axis)


def _bilinear(samples: np.ndarray, h: float, rq: np.ndarray, tq: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of (r, t) samples at query points inside the box."""
    nmax = samples.shape[0] - 1
    fi = np.clip(rq / h, 0, nmax - 1e-9)
    fj = np.clip(tq / h, 0, nmax - 1e-9)
    i = np.minimum(fi.astype(int), nmax - 1)
    j = np.minimum(fj.astype(int), nmax - 1)
    ai, aj = fi - i, fj - j
    return (
        samples[i, j] * (1 - ai) * (1 - aj)
        + samples[i + 1, j] * ai * (1 - aj)
        + samples[i, j + 1] * (1 - ai) * aj
        + samples[i + 1, j + 1] * ai * aj
    )


def _ray_tail(
    n: int, decay: float, samples: np.ndarray, quad: HalfspaceQuad, order: int
) -> float:
    """Analytic tail of an integrand g ~ A(angle) rho^-decay (1 + c/rho) beyond
    the quadrature box, fitted per outgoing ray from two interior rings."""
    if order == 0:
        return 0.0
    big_r = quad.radius
    h = quad.spacing
    alphas = np.linspace(0.0, pi / 2, 721)
    sin_a, cos_a = np.sin(alphas), np.cos(alphas)
    with np.errstate(divide="ignore"):
        rho_b = big_r / np.maximum(np.maximum(sin_a, cos_a), 1e-12)
    rho1 = rho_b * 0.95
    rho2 = rho_b * 0.95**2
    g1 = _bilinear(samples, h, rho1 * sin_a, rho1 * cos_a)
    g2 = _bilinear(samples, h, rho2 * sin_a, rho2 * cos_a)
    y1, y2 = g1 * rho1**decay, g2 * rho2**decay
    if order == 1:
        amp = y1
        corr = np.zeros_like(y1)
    else:
        u = (y1 - y2) / (1.0 / rho1 - 1.0 / rho2)
        amp = y1 - u / rho1
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = np.where(np.abs(amp) > 0, u / np.where(amp == 0, 1.0, amp), 0.0)
        bad = ~np.isfinite(corr) | (np.abs(corr) > 0.5 * rho_b) | (amp <= 0)
        amp = np.where(bad, np.maximum(y1, 0.0), amp)
        corr = np.where(bad, 0.0, corr)
    inner = amp * (
        rho_b ** (n - decay) / (decay - n) + corr * rho_b ** (n - decay - 1) / (decay + 1 - n)
    )
    integrand = sphere_volume(n - 2) * sin_a ** (n - 2) * inner
    wts = np.full_like(alphas, alphas[1] - alphas[0])
    wts[[0, -1]] *= 0.5
    return float(np.sum(integrand * wts))


def _line_tail(n: int, decay: float, g: np.ndarray, r: np.ndarray, order: int) -> float:
    """Tail of a boundary integrand along r with surface factor r^{n-2}."""
    if order == 0:
        return 0.0
    big_r = r[-1]
    y1, y2 = g[-9] * r[-9] ** decay, g[-1] * r[-1] ** decay
    if order == 1:
        amp, corr = y2, 0.0
    else:
        u = (y1 - y2) / (1.0 / r[-9] - 1.0 / r[-1])
        amp = y1 - u / r[-9]
        corr = u / amp if amp > 0 else 0.0
        if not np.isfinite(corr) or abs(corr) > 0.5 * big_r or amp <= 0:
            amp, corr = max(y2, 0.0), 0.0
    d = decay - (n - 2)
    return float(
        sphere_volume(n - 2) * amp * (big_r ** (1 - d) / (d - 1) + corr * big_r**-d / d)
    )


@dataclass
class HalfspaceQuotient:
    """Tail-corrected trace quotient of a sampled half-space field."""

    value: float
    dirichlet: float
    interior_norm: float
    boundary_norm: float
    tail_fractions: dict
    error_budget: float
    relative_error_budget: float
    quad: HalfspaceQuad


def _quotient_integrals(
    w: np.ndarray, m: float, n: int, quad: HalfspaceQuad
) -> tuple[float, float, float, dict]:
    h = quad.spacing
    r = quad.axis_nodes()
    rr = r[:, None]
    p = 2 * (m + n - 1) / (m + n - 2)
    surf = sphere_volume(n - 2)
    aw = quad.axis_weights()
    w2 = np.outer(aw, aw) * surf * rr ** (n - 2)
    wb = aw * surf * r ** (n - 2)
    grad2 = _grad_fd(w, h, 0) ** 2 + _grad_fd(w, h, 1) ** 2
    wp = np.abs(w) ** p
    decay = 2 * (m + n - 1)  # both |grad w|^2 and |w|^p for bubble-like decay
    dir_num = float(np.sum(grad2 * w2))
    i_num = float(np.sum(wp * w2))
    b_num = float(np.sum(wp[:, 0] * wb))
    tails = {
        "dirichlet": _ray_tail(n, decay, grad2, quad, quad.tail_order),
        "interior_norm": _ray_tail(n, decay, wp, quad, quad.tail_order),
        "boundary_norm": _line_tail(n, decay, wp[:, 0], r, quad.tail_order),
    }
    lower = {
        "dirichlet": _ray_tail(n, decay, grad2, quad, min(quad.tail_order, 1)),
        "interior_norm": _ray_tail(n, decay, wp, quad, min(quad.tail_order, 1)),
        "boundary_norm": _line_tail(n, decay, wp[:, 0], r, min(quad.tail_order, 1)),
    }
    info = {
        "tails": tails,
        "tail_spread": {k: abs(tails[k] - lower[k]) for k in tails},
    }
    return (
        dir_num + tails["dirichlet"],
        i_num + tails["interior_norm"],
        b_num + tails["boundary_norm"],
        info,
    )


def _assemble_quotient(m: float, n: int, dirichlet: float, i_norm: float, b_norm: float):
    s = m / (m + n - 1)
    rho = (2 * m + n - 2) / (m + n - 1)
    i_factor = i_norm**s if m > 0 else 1.0
    return dirichlet * i_factor / b_norm**rho


def halfspace_quotient(
    w, m: float, n: int, quad: HalfspaceQuad, tail_tolerance: float = 0.05
) -> HalfspaceQuotient:
    """Trace quotient of a decaying half-space field sampled on ``quad``.

    ``w`` is a (resolution+1, resolution+1) array of samples over the
    (r, t) box, or a callable profile evaluated onto it.  Tail mass beyond
    the box is integrated analytically from the fitted leading power; if
    that correction exceeds ``tail_tolerance`` of any integral the value is
    refused with a suggested radius.  The reported error budget combines
    the tail-fit spread with a Richardson estimate of the grid error.
    """
    if callable(w):
        rr, tt = quad.mesh()
        w = w(rr, tt)
    w = np.asarray(w, dtype=float)
    expected = (quad.resolution + 1, quad.resolution + 1)
    if w.shape != expected:
        raise ConfigError(f"samples shape {w.shape} does not match quad {expected}")
    dirichlet, i_norm, b_norm, info = _quotient_integrals(w, m, n, quad)
    fractions = {
        "dirichlet": abs(info["tails"]["dirichlet"]) / max(abs(dirichlet), 1e-300),
        "interior_norm": abs(info["tails"]["interior_norm"]) / max(abs(i_norm), 1e-300),
        "boundary_norm": abs(info["tails"]["boundary_norm"]) / max(abs(b_norm), 1e-300),
    }
    worst = max(fractions.values())
    if worst > tail_tolerance:
        decay = 2 * (m + n - 1)
        suggested = quad.radius * (worst / tail_tolerance) ** (1.0 / (decay - n)) * 1.25
        raise NumericRefusal(
            f"tail bound {worst:.2e} exceeds tolerance {tail_tolerance:.2e}; "
            f"increase the truncation radius to about {suggested:.1f}",
            details={"tail_fractions": fractions, "suggested_radius": suggested},
        )
    value = _assemble_quotient(m, n, dirichlet, i_norm, b_norm)
    # Richardson estimate from the coarsened grid (same samples, every 2nd node)
    budget = 0.0
    if quad.resolution % 2 == 0:
        coarse = quad.coarsened()
        dc, ic, bc, _ = _quotient_integrals(w[::2, ::2], m, n, coarse)
        value_c = _assemble_quotient(m, n, dc, ic, bc)
        budget += abs(value - value_c) / 3.0
    # tail-model uncertainty, propagated through the quotient by worst case
    rel_tail_unc = (
        info["tail_spread"]["dirichlet"] / max(abs(dirichlet), 1e-300)
        + info["tail_spread"]["interior_norm"] / max(abs(i_norm), 1e-300) * (m / (m + n - 1))
        + info["tail_spread"]["boundary_norm"]
        / max(abs(b_norm), 1e-300)
        * ((2 * m + n - 2) / (m + n - 1))
    )
    budget += abs(value) * rel_tail_unc
    return HalfspaceQuotient(
        value,
        dirichlet,
        i_norm,
        b_norm,
        fractions,
        budget,
        budget / abs(value) if value else np.inf,
        quad,
    )


def halfspace_quotient_cartesian(
    fn: Callable, m: float, n: int, radius: float, resolution: int
) -> float:
    """Full-grid trace quotient at n = 3 (no tail corrections).

    Cross-checks the radial reduction and evaluates non-radial fields;
    ``fn(x1, x2, t)`` is sampled on [-R, R]^2 x [0, R].
    """
    if n != 3:
        raise ConfigError("the Cartesian engine is implemented for n = 3 only")
    ax = np.linspace(-radius, radius, 2 * resolution + 1)
    tax = np.linspace(0.0, radius, resolution + 1)
    h = ax[1] - ax[0]
    ht = tax[1] - tax[0]
    x1, x2, t = np.meshgrid(ax, ax, tax, indexing="ij")
    w = np.asarray(fn(x1, x2, t), dtype=float)
    grad2 = (
        _grad_fd(w, h, 0) ** 2 + _grad_fd(w, h, 1) ** 2 + _grad_fd(w, ht, 2) ** 2
    )
    wx = np.full(len(ax), h)
    wx[[0, -1]] = h / 2
    wt = np.full(len(tax), ht)
    wt[[0, -1]] = ht / 2
    weights = wx[:, None, None] * wx[None, :, None] * wt[None, None, :]
    p = 2 * (m + n - 1) / (m + n - 2)
    wp = np.abs(w) ** p
    dirichlet = float(np.sum(grad2 * weights))
    i_norm = float(np.sum(wp * weights))
    b_norm = float(np.sum(wp[:, :, 0] * wx[:, None] * wx[None, :]))
    return _assemble_quotient(m, n, dirichlet, i_norm, b_norm)


# ---------------------------------------------------------------------------
# closed-form radial integrals and the lifting identities
# ---------------------------------------------------------------------------


def case_integral(k: float, l: float, m: float, a: float, tau: float) -> float:
    """Closed form of the even-dimensional radial integral

        int_{R^{2m}} |y|^{2l} (a + |y|^2/tau)^{-(2m+k)} dy
        = pi^m Gamma(m+l) Gamma(m+k-l) tau^{m+l} / (Gamma(m) Gamma(2m+k) a^{m+k-l}).

    Requires 2m a positive integer, k > l >= 0 and a, tau > 0.
    """
    if k < 0 or l < 0:
        raise ConfigError(f"k and l must be >= 0, got k={k}, l={l}")
    if k <= l:
        raise ConfigError(f"convergence requires k > l, got k={k}, l={l}")
    two_m = 2 * m
    if two_m < 1 or abs(two_m - round(two_m)) > 1e-12:
        raise ConfigError(f"2m must be a positive integer, got m={m}")
    if a <= 0 or tau <= 0:
        raise ConfigError(f"a and tau must be positive, got a={a}, tau={tau}")
    return (
        pi**m
        * gamma(m + l)
        * gamma(m + k - l)
        * tau ** (m + l)
        / (gamma(m) * gamma(2 * m + k) * a ** (m + k - l))
    )


def _j_reference(power: float, two_m_plus_2l: float, n_cells: int, upper: float = 12.0):
    """Trapezoid + power tail for J = int_0^inf u^{2m+2l-1} (1+u^2)^{-P} du,
    and its exact value Gamma(m+l) Gamma(P-m-l) / (2 Gamma(P))."""
    u = np.linspace(0.0, upper, 2 * n_cells + 1)
    g = u ** (two_m_plus_2l - 1) * (1 + u**2) ** (-power)
    wts = np.full_like(u, u[1] - u[0])
    wts[[0, -1]] *= 0.5
    tail_expo = 2 * power - two_m_plus_2l
    num = float(np.sum(g * wts)) + upper ** (-tail_expo) / tail_expo
    ml = two_m_plus_2l / 2
    exact = gamma(ml) * gamma(power - ml) / (2 * gamma(power))
    return num, exact


@dataclass
class LiftCheckResult:
    """Relative mismatches of the two dimensional-lifting identities."""

    boundary_residual: float
    gradient_residual: float
    boundary_lhs: float
    boundary_rhs: float
    gradient_lhs: float
    gradient_rhs: float


def lift_check(w, m: int, n: int, tau: float, quad: HalfspaceQuad) -> LiftCheckResult:
    """Verify the lifted-function identities behind the sharp constant.

    The field w (strictly positive samples on ``quad``, or a callable) is
    lifted to f = (w^{-2/(m+n-2)} + |y|^2/tau)^{-(2m+n-2)/2} on the
    2m-dimensionally extended half-space.  The lifted side integrates f
    numerically: trapezoid in the self-similar radial y coordinate tied to
    the quad resolution, finite differences of the lifted base a = w^{-2/(m+n-2)}
    in (x, t).  The right-hand sides use the closed-form gamma coefficients
    with finite differences of w itself, so the mismatch is pure quadrature
    and discretization error, O(spacing^2).

    Restricted to m in {1, 2}: the y-integral dimension is 2m and the cost
    and conditioning of larger lifts buy nothing extra at desk scale.
    """
    if m not in (1, 2):
        raise ConfigError(f"lift_check supports m in {{1, 2}}, got {m}")
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    if callable(w):
        rr, tt = quad.mesh()
        w = w(rr, tt)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ConfigError("lift_check requires strictly positive samples")
    h = quad.spacing
    r = quad.axis_nodes()
    p = 2 * (m + n - 1) / (m + n - 2)
    surf_x = sphere_volume(n - 2)
    aw = quad.axis_weights()
    w2 = np.outer(aw, aw) * surf_x * r[:, None] ** (n - 2)
    wb = aw * surf_x * r ** (n - 2)
    vol_y = sphere_volume(2 * m - 1)
    a = w ** (-2.0 / (m + n - 2))

    # boundary identity: numeric scaled-radial y quadrature vs gamma closed form
    j_bd_num, _ = _j_reference(2 * m + n - 1, 2 * m, quad.resolution)
    lhs_b = vol_y * j_bd_num * tau**m * float(np.sum(a[:, 0] ** (-(m + n - 1)) * wb))
    rhs_b = (
        pi**m
        * gamma(m + n - 1)
        * tau**m
        / gamma(2 * m + n - 1)
        * float(np.sum(w[:, 0] ** p * wb))
    )
    res_b = abs(lhs_b - rhs_b) / abs(rhs_b)

    # gradient identity: lifted |grad f|^2 with FD of a, vs FD of w
    j1_num, _ = _j_reference(2 * m + n, 2 * m, quad.resolution)
    j2_num, _ = _j_reference(2 * m + n, 2 * m + 2, quad.resolution)
    grad_a2 = _grad_fd(a, h, 0) ** 2 + _grad_fd(a, h, 1) ** 2
    y1 = vol_y * (a * tau) ** m * a ** (-(2 * m + n)) * j1_num
    y2 = vol_y * (a * tau) ** (m + 1) * a ** (-(2 * m + n)) * j2_num
    lifted = ((2 * m + n - 2) / 2) ** 2 * grad_a2 * y1 + (2 * m + n - 2) ** 2 / tau**2 * y2
    lhs_g = float(np.sum(lifted * w2))
    grad_w2 = _grad_fd(w, h, 0) ** 2 + _grad_fd(w, h, 1) ** 2
    coeff_grad = ((2 * m + n - 2) / (m + n - 2)) ** 2 * pi**m * tau**m * gamma(m + n) / gamma(
        2 * m + n
    )
    coeff_norm = (
        m
        * (2 * m + n - 2) ** 2
        * pi**m
        * tau ** (m - 1)
        * gamma(m + n)
        / ((m + n - 1) * gamma(2 * m + n))
    )
    rhs_g = coeff_grad * float(np.sum(grad_w2 * w2)) + coeff_norm * float(
        np.sum(w**p * w2)
    )
    res_g = abs(lhs_g - rhs_g) / abs(rhs_g)
    return LiftCheckResult(res_b, res_g, lhs_b, rhs_b, lhs_g, rhs_g)


def bubble_el_residual(params: BubbleParams, quad: HalfspaceQuad) -> tuple[float, float]:
    """Pointwise Euler-Lagrange residuals of the tau-family bubble.

    Interior:  -tau^{m/(2(m+n-1))} Lap w + ((m+n-1)/(m+n-2)) tau^{-1/2} w^{(m+n)/(m+n-2)} = 0
    Boundary:   tau^{m/(2(m+n-1))} dw/d(eta) = ((m+n-1)/m)^{1/2} w^{(m+n)/(m+n-2)}

    Returns sup-norm residuals relative to the nonlinear term, excluding a
    two-cell collar at the truncation edge; both are pure discretization
    error, O(spacing^2).
    """
    if params.family != "tau":
        raise ConfigError("the Euler-Lagrange identities are stated for the tau family")
    m, n = params.m, params.n
    tau = params.scale
    w = bubble(params).on_quad(quad)
    h = quad.spacing
    # laplacian of an x-radial field: w_rr + (n-2)/r w_r + w_tt; the r=0 column
    # uses the even-reflection limit (n-1) w_rr.
    wr = _grad_fd(w, h, 0)
    wrr = np.empty_like(w)
    wrr[1:-1, :] = (w[2:, :] - 2 * w[1:-1, :] + w[:-2, :]) / h**2
    wrr[0, :] = 2 * (w[1, :] - w[0, :]) / h**2
    wrr[-1, :] = (2 * w[-1, :] - 5 * w[-2, :] + 4 * w[-3, :] - w[-4, :]) / h**2
    wtt = np.empty_like(w)
    wtt[:, 1:-1] = (w[:, 2:] - 2 * w[:, 1:-1] + w[:, :-2]) / h**2
    wtt[:, 0] = (2 * w[:, 0] - 5 * w[:, 1] + 4 * w[:, 2] - w[:, 3]) / h**2
    wtt[:, -1] = (2 * w[:, -1] - 5 * w[:, -2] + 4 * w[:, -3] - w[:, -4]) / h**2
    r = quad.axis_nodes()
    lap = np.empty_like(w)
    lap[1:, :] = wrr[1:, :] + (n - 2) / r[1:, None] * wr[1:, :] + wtt[1:, :]
    lap[0, :] = (n - 1) * wrr[0, :] + wtt[0, :]
    q = (m + n) / (m + n - 2)
    scale_op = tau ** (m / (2 * (m + n - 1)))
    nonlinear = (m + n - 1) / (m + n - 2) * tau ** (-0.5) * w**q
    interior = -scale_op * lap + nonlinear
    collar = 2
    denom = float(np.max(nonlinear[:-collar, :-collar]))
    res_int = float(np.max(np.abs(interior[:-collar, :-collar]))) / denom
    dw_deta = -(-3 * w[:, 0] + 4 * w[:, 1] - w[:, 2]) / (2 * h)
    rhs = np.sqrt((m + n - 1) / m) * w[:, 0] ** q
    res_bd = float(np.max(np.abs(scale_op * dw_deta - rhs)[:-collar])) / float(np.max(rhs))
    return res_int, res_bd


def bubble_boundary_volume_closed_form(m: float, n: int) -> float:
    """V = (pi/c)^{(n-1)/2} Gamma(m + (n-1)/2) / Gamma(m+n-1), the
    scale-invariant boundary volume of the tau family."""
    c = bubble_model_constant(m, n)
    return (pi / c) ** ((n - 1) / 2) * gamma(m + (n - 1) / 2) / gamma(m + n - 1)


def bubble_boundary_volume(m: float, n: int, quad: HalfspaceQuad) -> float:
    """Boundary norm of the tau-family bubble by fine 1-D quadrature with a
    power tail; verifies tau- and center-invariance internally to 1e-6."""
    if m <= 0:
        raise ConfigError(f"the tau family requires m > 0, got {m}")
    p = 2 * (m + n - 1) / (m + n - 2)
    cells = max(quad.resolution * 16, 8192)
    r = np.linspace(0.0, quad.radius, cells + 1)
    h = r[1] - r[0]
    # composite Simpson, O(h^4): the 1e-6 invariance target is beyond trapezoid
    wts = np.full_like(r, 2 * h / 3)
    wts[1::2] = 4 * h / 3
    wts[[0, -1]] = h / 3
    surf = sphere_volume(n - 2)

    def value(tau: float) -> float:
        g = bubble(BubbleParams(m, n, "tau", tau)).profile(r, 0.0) ** p
        main = float(np.sum(g * r ** (n - 2) * wts)) * surf
        decay = 2 * (m + n - 1)
        tail = _line_tail(n, decay, g, r, quad.tail_order)
        return main + tail

    v1, v2 = value(1.0), value(0.25)
    spread = abs(v1 - v2) / abs(v1)
    if spread > 1e-6:
        raise NumericRefusal(
            f"boundary-volume invariance violated at {spread:.2e} relative; "
            "the tail budget or resolution is inadequate",
            details={"V_tau1": v1, "V_tau025": v2},
        )
    return v1


def structured_perturbations(
    m: float, n: int, quad: HalfspaceQuad, amplitude: float = 0.1
) -> dict[str, np.ndarray]:
    """Five x-radially-symmetric distortions of the unit epsilon bubble, all
    with bubble-like decay so the tail machinery stays valid."""
    rr, tt = quad.mesh()
    base = bubble(BubbleParams(m, n, "epsilon", 1.0)).profile(rr, tt)
    other = bubble(BubbleParams(m, n, "epsilon", 2.0)).profile(rr, tt)
    return {
        "radial-ripple": base * (1 + amplitude * np.sin(rr)),
        "gaussian-bump": base * (1 + amplitude * np.exp(-(rr**2 + tt**2))),
        "t-profile": base * (1 + amplitude * tt * np.exp(-tt)),
        "scale-mixture": base + amplitude * other,
        "core-distortion": base * (1 + amplitude / (1 + rr**2 + tt**2)),
    }

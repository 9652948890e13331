"""The weighted Escobar quotient, the W-functional, and the bridge lemmas.

For a field ``w`` on a space with parameters ``(m, n)`` the quotient is

    Q(w) = E(w) * I(w)^{m/(m+n-1)} / Bd(w)^{(2m+n-2)/(m+n-1)}

with E the conformal energy, I the interior norm (exponent
``2(m+n-1)/(m+n-2)`` against v^{m-1} dV) and Bd the matching boundary
norm against v^m dsigma.  At m = 0 the interior factor I^0 is 1 by the
continuity convention.  Q is invariant under rescaling of w and under
pointwise conformal change of the space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UndefinedQuotientError
from .geometry import MeasureSpace, conformal_energy, face_slice

_POW_FLOOR = 1e-300


def abs_pow(w: np.ndarray, p: float) -> np.ndarray:
    """|w|^p via exp-log with a tiny floor, so 0^p at p < 1 derivative points
    never produces NaNs; fields are taken in absolute value."""
    return np.exp(p * np.log(np.maximum(np.abs(w), _POW_FLOOR)))


class MinusInfinity:
    """Tagged minus infinity for the bridge; never enters arithmetic."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MINUS_INFINITY"

    def __eq__(self, other):
        return isinstance(other, MinusInfinity)

    def __hash__(self):
        return hash("MINUS_INFINITY")


MINUS_INFINITY = MinusInfinity()


def is_minus_infinity(x) -> bool:
    return isinstance(x, MinusInfinity)


@dataclass
class QuotientBreakdown:
    """Energy integrals and norms composing Q, plus the quotient value."""

    dirichlet: float
    curv_interior: float
    curv_boundary: float
    interior_norm: float
    boundary_norm: float
    quotient: float
    m: float
    n: int

    @property
    def energy(self) -> float:
        return self.dirichlet + self.curv_interior + self.curv_boundary

    def to_dict(self) -> dict:
        return {
            "dirichlet": self.dirichlet,
            "curv_interior": self.curv_interior,
            "curv_boundary": self.curv_boundary,
            "interior_norm": self.interior_norm,
            "boundary_norm": self.boundary_norm,
            "Q": self.quotient,
            "m": self.m,
            "n": self.n,
        }


def interior_norm(space: MeasureSpace, w) -> float:
    """Integral of |w|^{2(m+n-1)/(m+n-2)} against v^{m-1} dV."""
    w = space.check_field(w)
    return space.integrate(abs_pow(w, space.norm_exponent) * space.interior_norm_density)


def boundary_norm(space: MeasureSpace, w) -> float:
    """Integral of |w|^{2(m+n-1)/(m+n-2)} against v^m dsigma."""
    w = space.check_field(w)
    total = 0.0
    for face, dens in space.boundary_measure.faces():
        vals = abs_pow(face_slice(w, face), space.norm_exponent)
        total += float(np.sum(vals * dens * space.grid.face_weights))
    return total


def escobar_quotient(space: MeasureSpace, w) -> QuotientBreakdown:
    """Full breakdown of the weighted Escobar quotient at ``w``.

    Undefined (and refused) when the boundary norm vanishes, or when the
    interior norm vanishes with m > 0.
    """
    w = space.check_field(w)
    parts = conformal_energy(space, w)
    i_norm = interior_norm(space, w)
    b_norm = boundary_norm(space, w)
    if b_norm <= 0.0:
        raise UndefinedQuotientError(
            "quotient undefined: w has zero trace on the boundary",
            details={"boundary_norm": b_norm},
        )
    if space.m > 0 and i_norm <= 0.0:
        raise UndefinedQuotientError(
            "quotient undefined: interior norm vanishes with m > 0",
            details={"interior_norm": i_norm},
        )
    m, n = space.m, space.n
    i_factor = i_norm ** (m / (m + n - 1)) if m > 0 else 1.0
    q = parts.total * i_factor / b_norm ** ((2 * m + n - 2) / (m + n - 1))
    return QuotientBreakdown(
        parts.dirichlet,
        parts.curv_interior,
        parts.curv_boundary,
        i_norm,
        b_norm,
        q,
        m,
        n,
    )


def boundary_normalize(space: MeasureSpace, w) -> np.ndarray:
    """Scale w so the boundary norm equals 1 (idempotent, projective)."""
    w = space.check_field(w)
    b_norm = boundary_norm(space, w)
    if b_norm <= 0.0:
        raise UndefinedQuotientError("cannot normalize a field with zero boundary trace")
    return w / b_norm ** (1.0 / space.norm_exponent)


def w_functional(space: MeasureSpace, w, tau: float) -> float:
    """Perelman-style functional
    tau^{m/(2(m+n-1))} E(w) + tau^{-1/2} I(w) - Bd(w)."""
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    w = space.check_field(w)
    m, n = space.m, space.n
    energy = conformal_energy(space, w).total
    return (
        tau ** (m / (2 * (m + n - 1))) * energy
        + tau ** (-0.5) * interior_norm(space, w)
        - boundary_norm(space, w)
    )


def h_min(p: float, q: float, b: float, c: float) -> tuple[float, float]:
    """Minimum of h(tau) = B tau^p + C tau^{-q} over tau > 0.

    Returns (tau0, min value) with tau0 = (qC/pB)^{1/(p+q)} and
    min = B^{q/(p+q)} C^{p/(p+q)} (q/p)^{p/(p+q)} (p+q)/q.
    """
    for name, val in (("p", p), ("q", q), ("B", b), ("C", c)):
        if val <= 0:
            raise ConfigError(f"h_min requires positive arguments; {name} = {val}")
    tau0 = (q * c / (p * b)) ** (1.0 / (p + q))
    value = b ** (q / (p + q)) * c ** (p / (p + q)) * (q / p) ** (p / (p + q)) * (p + q) / q
    return tau0, value


def _check_bridge_params(m: float, n: int) -> None:
    if m <= 0:
        raise ConfigError(
            "the nu-Lambda bridge degenerates at m = 0 (1/m in the closed form); unsupported"
        )
    if n < 3:
        raise ConfigError(f"n must be >= 3, got {n}")


def nu_of_lambda(lam: float, m: float, n: int):
    """Energy value nu from the constant Lambda.

    Three branches: Lambda < 0 maps to the tagged minus infinity,
    Lambda = 0 to -1, and Lambda > 0 to the closed form
    ((2m+n-1)/m) [m Lambda/(m+n-1)]^{(m+n-1)/(2m+n-1)} - 1.
    """
    _check_bridge_params(m, n)
    if lam < 0:
        return MINUS_INFINITY
    if lam == 0:
        return -1.0
    return (
        (2 * m + n - 1) / m * (m * lam / (m + n - 1)) ** ((m + n - 1) / (2 * m + n - 1)) - 1.0
    )


def lambda_of_nu(nu, m: float, n: int) -> float:
    """Inverse bridge for nu >= -1; the nu = -infinity branch only pins
    Lambda to [-inf, 0) and is refused."""
    _check_bridge_params(m, n)
    if is_minus_infinity(nu):
        raise ConfigError("nu = -infinity only determines Lambda in [-inf, 0); not invertible")
    if nu < -1:
        raise ConfigError(f"nu must be >= -1 on the finite branch, got {nu}")
    return (m + n - 1) / m * (m * (nu + 1) / (2 * m + n - 1)) ** ((2 * m + n - 1) / (m + n - 1))


def tau_of_minimizer(energy: float, i_norm: float, m: float, n: int) -> float:
    """The tau at which tau -> tau^{m/(2(m+n-1))} E + tau^{-1/2} I is
    stationary, given positive energy pieces (E, I):

        tau = [ (m+n-1) I / (m E) ]^{2(m+n-1)/(2m+n-1)}.
    """
    _check_bridge_params(m, n)
    if energy <= 0 or i_norm <= 0:
        raise ConfigError("tau_of_minimizer requires positive energy and interior norm")
    return ((m + n - 1) * i_norm / (m * energy)) ** (2 * (m + n - 1) / (2 * m + n - 1))


@dataclass
class EnergyPoint:
    """One point of the tau-energy: achieved W value at fixed tau.

    ``nu_candidate`` equals the achieved value and is a certified upper
    bound for nu(tau) whether or not the inner minimization converged.
    """

    tau: float
    value: float
    nu_candidate: float
    converged: bool
    minimizer: np.ndarray

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")


def tau_energy(space: MeasureSpace, tau: float, opts=None) -> EnergyPoint:
    """Approximate nu(tau) by constrained minimization of W(., tau) over
    nonnegative boundary-normalized fields.

    Delegates to the projected-descent engine of the minimizer module; on
    budget exhaustion the achieved value is still reported (it remains an
    upper bound for the infimum) with ``converged`` False.
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    from .minimizer import MinimizerConfig, descend_w_functional

    cfg = opts if opts is not None else MinimizerConfig()
    w_star, value, converged = descend_w_functional(space, tau, cfg)
    return EnergyPoint(tau, value, value, converged, w_star)

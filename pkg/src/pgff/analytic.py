"""Macroscopic variational problem for a weakly pinned interface.

An interface profile h on D = [0,1] x T^(d-1) with boundary values
h(0,.) = a and h(1,.) = b pays the unnormalized rate

    Sigma(h) = (1/2) * int |grad h|^2  -  xi * |{h = 0}|,

where xi >= 0 is the pinning free energy per unit volume.  Because the
boundary data depend on the first coordinate only, minimizing reduces to
the one-dimensional functional

    Sigma1(g) = (1/2) * int g'(t)^2 dt  -  xi * |{g = 0}|

over g : [0,1] -> R with g(0) = a, g(1) = b.  Its two candidate
minimizers are the straight line and, when a + b < sqrt(2*xi), the
"pinned" profile that descends to 0, stays there on [s_L, s_R], and
climbs back up.  The contact points obey Young's relation

    a / s_L = b / (1 - s_R) = sqrt(2*xi),

the two candidate energies are (a-b)^2 / 2 and sqrt(2*xi)*(a+b) - xi,
and they tie exactly when sqrt(a) + sqrt(b) = (2*xi)^(1/4).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Profile1D",
    "VariationalParams",
    "EnergyValue",
    "NoPinnedMinimizer",
    "contact_points",
    "critical_xi",
    "build_minimizers",
    "sigma_1d",
    "sigma_full",
    "stability_certificate",
    "min_sigma",
    "profile_l1_distance",
    "profile_sup_distance",
]


@dataclass(frozen=True)
class Profile1D:
    """Piecewise-linear profile given by knots (t, value), t increasing in [0,1]."""

    knots_t: np.ndarray
    knots_v: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.knots_t, dtype=float)
        v = np.asarray(self.knots_v, dtype=float)
        object.__setattr__(self, "knots_t", t)
        object.__setattr__(self, "knots_v", v)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("need matching 1d knot arrays with at least two knots")
        if not (np.all(np.diff(t) > 0) and t[0] == 0.0 and t[-1] == 1.0):
            raise ValueError("knot abscissae must be strictly increasing from 0 to 1")

    def __call__(self, t):
        return np.interp(t, self.knots_t, self.knots_v)

    def refine_with(self, other: "Profile1D"):
        """Common knot grid of two profiles (difference is linear between these)."""
        return np.union1d(self.knots_t, other.knots_t)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("t,value\n")
        for t, v in zip(self.knots_t, self.knots_v):
            buf.write(f"{t!r},{v!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = [ln for ln in text.strip().splitlines()[1:] if ln]
        pairs = [tuple(float(x) for x in ln.split(",")) for ln in rows]
        t, v = zip(*pairs)
        return cls(np.array(t), np.array(v))

    @classmethod
    def from_knots(cls, pairs):
        t, v = zip(*pairs)
        return cls(np.array(t, dtype=float), np.array(v, dtype=float))


@dataclass(frozen=True)
class VariationalParams:
    """Boundary slopes a, b > 0 and pinning free energy xi >= 0."""

    a: float
    b: float
    xi: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError(f"boundary values must be positive, got a={self.a}, b={self.b}")
        if self.xi < 0:
            raise ValueError(f"free energy xi must be >= 0, got {self.xi}")

    @property
    def pinned_minimizer_exists(self):
        return self.xi > 0 and self.a + self.b < np.sqrt(2.0 * self.xi)


@dataclass(frozen=True)
class EnergyValue:
    """Energy Sigma and its normalization Sigma* = Sigma - min Sigma."""

    sigma: float
    sigma_star: float
    tolerance: float = 0.0


class NoPinnedMinimizer(ValueError):
    """Raised when a + b >= sqrt(2*xi): only the straight line competes."""


def contact_points(params: VariationalParams):
    """Contact points (s_L, s_R) of the pinned minimizer via Young's relation."""
    if params.xi <= 0:
        raise NoPinnedMinimizer("xi must be positive for a pinned minimizer")
    root = np.sqrt(2.0 * params.xi)
    if params.a + params.b >= root:
        raise NoPinnedMinimizer(
            f"no pinned minimizer: a+b = {params.a + params.b:.6g} >= sqrt(2*xi) = {root:.6g}"
        )
    s_left = params.a / root
    s_right = 1.0 - params.b / root
    return s_left, s_right


def critical_xi(a, b):
    """xi at which the straight and pinned profiles have equal energy.

    Inverts sqrt(a) + sqrt(b) = (2*xi)^(1/4) to xi = (sqrt(a)+sqrt(b))^4 / 2.
    """
    if a <= 0 or b <= 0:
        raise ValueError("boundary values must be positive")
    return (np.sqrt(a) + np.sqrt(b)) ** 4 / 2.0


def build_minimizers(params: VariationalParams):
    """The straight-line profile and (when it exists) the pinned profile."""
    flat = Profile1D(np.array([0.0, 1.0]), np.array([params.a, params.b]))
    if not params.pinned_minimizer_exists:
        return flat, None
    s_left, s_right = contact_points(params)
    pinned = Profile1D(
        np.array([0.0, s_left, s_right, 1.0]),
        np.array([params.a, 0.0, 0.0, params.b]),
    )
    return flat, pinned


def min_sigma(params: VariationalParams):
    """min Sigma = min((a-b)^2/2, sqrt(2 xi)(a+b) - xi)."""
    flat_energy = 0.5 * (params.a - params.b) ** 2
    pinned_energy = np.sqrt(2.0 * params.xi) * (params.a + params.b) - params.xi
    return min(flat_energy, pinned_energy)


def _zero_measure(t, v, atol=0.0):
    """Lebesgue measure of {g = 0} for the piecewise-linear (t, v).

    Only segments with both endpoints at zero count; isolated zeros have
    measure zero.
    """
    both_zero = (np.abs(v[:-1]) <= atol) & (np.abs(v[1:]) <= atol)
    return float(np.sum(np.diff(t)[both_zero]))


def _dirichlet_energy_1d(t, v):
    dt = np.diff(t)
    dv = np.diff(v)
    return 0.5 * float(np.sum(dv * dv / dt))


def sigma_1d(g: Profile1D, params: VariationalParams, boundary_tol=1e-9):
    """Sigma1(g), exactly on piecewise-linear g; checks g(0)=a, g(1)=b."""
    if abs(g.knots_v[0] - params.a) > boundary_tol or abs(g.knots_v[-1] - params.b) > boundary_tol:
        raise ValueError(
            f"profile violates boundary values: g(0)={g.knots_v[0]:.6g} (a={params.a:.6g}), "
            f"g(1)={g.knots_v[-1]:.6g} (b={params.b:.6g})"
        )
    sigma = _dirichlet_energy_1d(g.knots_t, g.knots_v)
    sigma -= params.xi * _zero_measure(g.knots_t, g.knots_v)
    return EnergyValue(sigma=sigma, sigma_star=sigma - min_sigma(params))


def sigma_full(h, params: VariationalParams, t1=None, check_boundary=True):
    """Sigma(h) for a gridded profile on [0,1] x T^(d-1).

    h has shape (M1+1, M, ..., M): axis 0 carries t1 = 0..1 (nodes t1 or
    uniform when t1 is None), the remaining axes are periodic with uniform
    spacing 1/M.  Per transverse column the t1 part is integrated exactly
    as a piecewise-linear profile; transverse derivatives use central
    differences; the transverse integral is a trapezoid (uniform weights
    on the torus).  The quadrature tolerance is reported, not hidden.
    """
    h = np.asarray(h, dtype=float)
    if t1 is None:
        t1 = np.linspace(0.0, 1.0, h.shape[0])
    t1 = np.asarray(t1, dtype=float)
    if t1.shape != (h.shape[0],):
        raise ValueError(f"t1 grid length {t1.shape} does not match axis 0 of {h.shape}")
    if check_boundary and (
        np.any(np.abs(h[0] - params.a) > 1e-9) or np.any(np.abs(h[-1] - params.b) > 1e-9)
    ):
        raise ValueError("gridded profile violates boundary columns a, b")

    d_transverse = h.ndim - 1
    n_cols = int(np.prod(h.shape[1:], dtype=int)) if d_transverse else 1
    cols = h.reshape(h.shape[0], n_cols)

    dt = np.diff(t1)
    dv = np.diff(cols, axis=0)
    energy_1d = 0.5 * np.sum(dv * dv / dt[:, None], axis=0)
    both_zero = (cols[:-1] == 0.0) & (cols[1:] == 0.0)
    zero_meas = np.sum(dt[:, None] * both_zero, axis=0)
    sigma1_cols = energy_1d - params.xi * zero_meas
    sigma = float(np.mean(sigma1_cols))

    transverse = 0.0
    if d_transverse:
        # trapezoid weights along t1 for the transverse gradient integral
        w1 = np.zeros_like(t1)
        w1[:-1] += 0.5 * dt
        w1[1:] += 0.5 * dt
        for a in range(1, h.ndim):
            M = h.shape[a]
            grad = (np.roll(h, -1, axis=a) - np.roll(h, 1, axis=a)) * (M / 2.0)
            g2 = grad * grad
            g2 = g2.reshape(h.shape[0], n_cols).mean(axis=1)
            transverse += 0.5 * float(np.sum(w1 * g2))
    sigma += transverse

    grid_tol = params.xi * 2.0 * float(np.max(dt)) + float(np.max(np.abs(dv))) ** 2 / max(
        h.shape[0] - 1, 1
    )
    return EnergyValue(sigma=sigma, sigma_star=sigma - min_sigma(params), tolerance=grid_tol)


# ---------------------------------------------------------------------------
# Distances between piecewise-linear profiles
# ---------------------------------------------------------------------------

def profile_l1_distance(g1: Profile1D, g2: Profile1D):
    """Exact L1([0,1]) distance between two piecewise-linear profiles."""
    t = g1.refine_with(g2)
    f = g1(t) - g2(t)
    # integrate |linear| piece by piece, splitting at interior sign changes
    total = 0.0
    for k in range(t.size - 1):
        a, b = f[k], f[k + 1]
        w = t[k + 1] - t[k]
        if a * b >= 0:
            total += 0.5 * abs(a + b) * w
        else:
            # crossing at fraction a/(a-b) of the cell
            c = a / (a - b)
            total += 0.5 * (abs(a) * c + abs(b) * (1 - c)) * w
    return total


def profile_sup_distance(g1: Profile1D, g2: Profile1D):
    """Exact sup distance: the difference is linear between common knots."""
    t = g1.refine_with(g2)
    return float(np.max(np.abs(g1(t) - g2(t))))


def _distance_to_minimizers(g: Profile1D, params: VariationalParams, metric):
    flat, pinned = build_minimizers(params)
    d = metric(g, flat)
    if pinned is not None:
        d = min(d, metric(g, pinned))
    return d


@dataclass(frozen=True)
class StabilityWitness:
    passed: bool
    sup_distance: float
    sigma_star: float
    required: float


def stability_certificate(g: Profile1D, params: VariationalParams, delta2):
    """Check the quadratic stability modulus on one profile.

    Passes when (sup-distance of g to both minimizers >= delta2) implies
    Sigma1*(g) >= delta2^2, i.e. fails only on a profile that is far from
    both minimizers yet nearly optimal.  Valid in the regime
    delta2 <= 2*sqrt(2*xi); a randomized check, never a proof.
    """
    if params.xi <= 0:
        raise ValueError("stability modulus needs xi > 0")
    if delta2 > 2.0 * np.sqrt(2.0 * params.xi):
        raise ValueError(
            f"delta2 = {delta2:.6g} outside the regime delta2 <= 2*sqrt(2*xi) "
            f"= {2.0 * np.sqrt(2.0 * params.xi):.6g}"
        )
    dist = _distance_to_minimizers(g, params, profile_sup_distance)
    star = sigma_1d(g, params).sigma_star
    required = delta2**2
    passed = (dist < delta2) or (star >= required)
    return StabilityWitness(passed=passed, sup_distance=dist, sigma_star=star, required=required)

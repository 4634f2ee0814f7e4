"""Gibbs sampling for the pinned interface measure.

The target measure on fields over the cylinder (or a zero-boundary box)
weights a configuration by exp(-H) against the reference measure
prod_i [eps * delta_0(dphi_i) + dphi_i]: each site either sits exactly
at zero (the atom, rewarded by eps) or carries a continuous value.

The single-site conditional is exact and cheap: given the neighbour sum
S, write m = S / (2d).  The site is pinned with probability

    p = eps * exp(-d m^2) / (eps * exp(-d m^2) + sqrt(pi/d)),

otherwise it is Normal(m, 1/(2d)).  A sweep resamples every interior
site once, either in canonical order (sequential) or one bipartite
colour class at a time (checkerboard; the lattice graph is bipartite).
All randomness is drawn from a counter-based stream keyed by
(seed, sweep) and consumed in canonical site order, so a trajectory is
reproducible and independent of how the sweep is parallelised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .lattice import CYLINDER, FREE_BOX, Lattice, Region

__all__ = [
    "FieldState",
    "ChainConfig",
    "site_conditional",
    "init_state",
    "sweep",
    "run_chain",
    "exact_tiny_sampler",
    "domination_check",
]


@dataclass
class FieldState:
    """One field configuration: values, pin mask, and the RNG bookkeeping."""

    lattice: Lattice
    a: float
    b: float
    eps: float
    phi: np.ndarray
    pin_mask: np.ndarray
    seed: int
    sweep_count: int = 0

    def interior_phi(self):
        return self.phi[self.lattice.interior_mask()]

    def pinned_fraction(self):
        interior = self.lattice.interior_mask()
        return float(self.pin_mask[interior].mean())


@dataclass
class ChainConfig:
    """Sweep schedule and observable recording for one chain."""

    sweeps: int
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    schedule: str = "checkerboard"
    xi_for_profiles: float | None = None
    start: str = "zero"

    def __post_init__(self):
        if self.burn_in >= self.sweeps:
            raise ValueError("burn_in must be smaller than sweeps")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.schedule not in ("sequential", "checkerboard"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.start not in ("zero", "linear"):
            raise ValueError(f"unknown start {self.start!r}")


def site_conditional(S, d, eps):
    """Exact single-site conditional: (p_pin, mean, variance).

    Vectorized over the neighbour sum S."""
    S = np.asarray(S, dtype=float)
    m = S / (2.0 * d)
    var = 1.0 / (2.0 * d)
    if eps == 0.0:
        return np.zeros_like(m), m, var
    # p = sigmoid(log eps - d m^2 - log sqrt(pi/d))
    logit = np.log(eps) - d * m * m - 0.5 * np.log(np.pi / d)
    return expit(logit), m, var


def _boundary_filled(lat: Lattice, a, b):
    phi = np.zeros(lat.shape)
    if lat.kind == CYLINDER:
        phi[0] = a * lat.N
        phi[lat.N] = b * lat.N
    return phi


def _linear_profile(lat: Lattice, a, b):
    phi = np.zeros(lat.shape)
    if lat.kind != CYLINDER:
        return phi
    i1 = np.arange(lat.N + 1, dtype=float)
    ramp = a * lat.N + (b - a) * i1
    phi += ramp.reshape((-1,) + (1,) * (lat.d - 1))
    return phi


def init_state(lat: Lattice, a, b, eps, seed=0, start="zero"):
    """Fresh chain state: zero field (all interior at the atom) or the
    straight-line profile; cylinder walls fixed at a*N / b*N."""
    if eps < 0:
        raise ValueError("pinning strength eps must be >= 0")
    if lat.kind == FREE_BOX and (a != 0 or b != 0):
        raise ValueError("free boxes carry zero boundary conditions")
    if start == "zero":
        phi = _boundary_filled(lat, a, b)
        pin = lat.interior_mask().copy()
    elif start == "linear":
        phi = _linear_profile(lat, a, b)
        pin = np.zeros(lat.shape, dtype=bool)
    else:
        raise ValueError(f"unknown start {start!r}")
    return FieldState(lattice=lat, a=a, b=b, eps=eps, phi=phi, pin_mask=pin, seed=seed)


def _parity_mask(lat: Lattice):
    coords = np.indices(lat.shape)
    return coords.sum(axis=0) % 2 == 0


def _sweep_randoms(seed, sweep_index, n):
    """Uniforms and normals for one sweep, keyed by (seed, sweep)."""
    bg = np.random.Philox(key=np.uint64(seed), counter=[0, 0, 0, np.uint64(sweep_index)])
    gen = np.random.Generator(bg)
    u = gen.random(n)
    z = gen.standard_normal(n)
    return u, z


def sweep(state: FieldState, schedule="checkerboard"):
    """One systematic sweep in place; returns the state.

    Every interior site is resampled exactly once from its conditional.
    The random numbers consumed by a site are indexed by its canonical
    position, identically for both schedules.
    """
    lat = state.lattice
    d = lat.d
    interior = lat.interior_mask()
    u_flat, z_flat = _sweep_randoms(state.seed, state.sweep_count, lat.n_sites)
    u = u_flat.reshape(lat.shape)
    z = z_flat.reshape(lat.shape)
    sd = np.sqrt(1.0 / (2.0 * d))

    if schedule == "checkerboard":
        parity = _parity_mask(lat)
        for color_mask in (parity & interior, (~parity) & interior):
            S = lat.neighbor_sum(state.phi)
            p, m, _ = site_conditional(S, d, state.eps)
            pin = u < p
            vals = m + sd * z
            state.phi[color_mask] = np.where(pin[color_mask], 0.0, vals[color_mask])
            state.pin_mask[color_mask] = pin[color_mask]
    elif schedule == "sequential":
        idx = np.argwhere(interior)
        for site in map(tuple, idx):
            S = sum(state.phi[nb] for nb in lat.neighbors(site))
            p, m, _ = site_conditional(S, d, state.eps)
            if u[site] < p:
                state.phi[site] = 0.0
                state.pin_mask[site] = True
            else:
                state.phi[site] = m + sd * z[site]
                state.pin_mask[site] = False
    else:
        raise ValueError(f"unknown schedule {schedule!r}")

    state.sweep_count += 1
    if not np.all(np.isfinite(state.phi)):
        raise RuntimeError(
            f"non-finite field after sweep {state.sweep_count}; aborting "
            f"(eps={state.eps}, seed={state.seed})"
        )
    return state


# ---------------------------------------------------------------------------
# Chains with recorded observables
# ---------------------------------------------------------------------------

def _profile_cell_weights(lat: Lattice):
    """Measure of the macroscopic cell of each slab height (sums to 1)."""
    w = np.full(lat.N + 1, 1.0 / lat.N)
    w[0] = w[-1] = 0.5 / lat.N
    return w


def _l1_to_profile(phi, lat: Lattice, profile_vals, w1):
    """L1(D) distance between the step field phi/N and a 1d profile."""
    diff = np.abs(phi / lat.N - profile_vals.reshape((-1,) + (1,) * (lat.d - 1)))
    trans_mean = diff.reshape(lat.N + 1, -1).mean(axis=1)
    return float(np.sum(w1 * trans_mean))


def run_chain(lat: Lattice, a, b, eps, config: ChainConfig):
    """Run a Gibbs chain and record interface observables.

    Returns (records, state): records is a dict of aligned arrays with
    keys sweep, pinned_fraction, l1_to_hhat, l1_to_hbar, omega_plus,
    energy.  Distances are to the straight-line and pinned minimizers at
    xi_for_profiles (the critical value for (a, b) when not given).
    """
    from .analytic import VariationalParams, build_minimizers, critical_xi

    state = init_state(lat, a, b, eps, seed=config.seed, start=config.start)
    heights = np.arange(lat.N + 1) / lat.N if lat.kind == CYLINDER else None

    flat_vals = pinned_vals = None
    if lat.kind == CYLINDER and a > 0 and b > 0:
        xi = config.xi_for_profiles if config.xi_for_profiles is not None else critical_xi(a, b)
        flat, pinned = build_minimizers(VariationalParams(a=a, b=b, xi=xi))
        flat_vals = flat(heights)
        pinned_vals = pinned(heights) if pinned is not None else None
    w1 = _profile_cell_weights(lat) if lat.kind == CYLINDER else None
    log_n = np.log(lat.N)
    interior = lat.interior_mask()

    records = {k: [] for k in (
        "sweep", "pinned_fraction", "l1_to_hhat", "l1_to_hbar", "omega_plus", "energy",
    )}
    for s in range(config.sweeps):
        sweep(state, schedule=config.schedule)
        if s < config.burn_in or (s - config.burn_in) % config.thinning:
            continue
        records["sweep"].append(state.sweep_count)
        records["pinned_fraction"].append(state.pinned_fraction())
        if flat_vals is not None:
            records["l1_to_hbar"].append(_l1_to_profile(state.phi, lat, flat_vals, w1))
            records["l1_to_hhat"].append(
                _l1_to_profile(state.phi, lat, pinned_vals, w1)
                if pinned_vals is not None
                else np.nan
            )
        else:
            records["l1_to_hbar"].append(np.nan)
            records["l1_to_hhat"].append(np.nan)
        records["omega_plus"].append(float(np.all(state.phi[interior] >= -log_n)))
        records["energy"].append(lat.bond_energy(state.phi))
    return {k: np.asarray(v) for k, v in records.items()}, state


# ---------------------------------------------------------------------------
# Exact tiny-lattice sampler (ground truth)
# ---------------------------------------------------------------------------

@dataclass
class TinyExact:
    """Exact marginals of the pinned measure on a tiny lattice."""

    lattice: Lattice
    eps: float
    log_partition: float
    pin_probability: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray
    subset_log_weights: np.ndarray

    def conditional_mean_given_free(self):
        free = 1.0 - self.pin_probability
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(free > 0, self.mean / free, 0.0)


def _dense_interior_operator(lat: Lattice, flat_sites):
    """Dense 2d(I - P) restricted to the given flat site indices."""
    n = len(flat_sites)
    pos = {f: k for k, f in enumerate(flat_sites)}
    M = np.zeros((n, n))
    shape = lat.shape
    for f, k in pos.items():
        M[k, k] = 2.0 * lat.d
        site = np.unravel_index(f, shape)
        for nb in lat.neighbors(site):
            fn = int(np.ravel_multi_index(nb, shape))
            if fn in pos:
                M[k, pos[fn]] -= 1.0
    return M


def exact_tiny_sampler(lat: Lattice, a, b, eps):
    """Enumerate all pin subsets on a lattice with <= 6 interior sites.

    For each pinned set C the Gaussian factor is integrated exactly
    (dense determinant plus the harmonic shift), giving the subset
    weights eps^|C| * Z_free; per-site pin probabilities and Gaussian
    moments follow by summing over subsets.
    """
    n_int = lat.n_interior
    if n_int > 6:
        raise ValueError(f"exact enumeration limited to 6 interior sites, got {n_int}")
    interior_flat = [int(f) for f in np.flatnonzero(lat.interior_mask().ravel())]
    boundary = _boundary_filled(lat, a, b)
    shape = lat.shape

    log_weights = np.empty(2**n_int)
    means = np.zeros((2**n_int, n_int))
    variances = np.zeros((2**n_int, n_int))
    log_pi_d = np.log(np.pi / lat.d)

    for mask in range(2**n_int):
        free = [interior_flat[i] for i in range(n_int) if not (mask >> i) & 1]
        n_pinned = n_int - len(free)
        if n_pinned > 0 and eps == 0.0:
            log_weights[mask] = -np.inf
            continue
        lw = n_pinned * np.log(eps) if n_pinned > 0 else 0.0
        if free:
            M = _dense_interior_operator(lat, free)
            sign, logdet = np.linalg.slogdet(M / (2.0 * lat.d))
            assert sign > 0
            lw += 0.5 * (len(free) * log_pi_d - logdet)
            # harmonic shift: neighbour contributions from the fixed sites
            # (walls plus pinned zeros) drive the conditional mean
            psi = boundary.copy().ravel()
            psi[np.asarray(interior_flat)] = 0.0
            rhs = np.zeros(len(free))
            for k, f in enumerate(free):
                site = np.unravel_index(f, shape)
                tot = 0.0
                for nb in lat.neighbors(site):
                    fn = int(np.ravel_multi_index(nb, shape))
                    if fn not in free:
                        tot += psi[fn]
                rhs[k] = tot
            mu = np.linalg.solve(M, rhs)
            # Gaussian energy shift: H(extension); assemble the full config
            full = psi.copy()
            for k, f in enumerate(free):
                full[f] = mu[k]
            lw -= lat.bond_energy(full.reshape(shape))
            Minv = np.linalg.inv(M)
            for k, f in enumerate(free):
                i = interior_flat.index(f)
                means[mask, i] = mu[k]
                variances[mask, i] = Minv[k, k]
        else:
            lw -= lat.bond_energy(boundary)
        log_weights[mask] = lw

    m = np.max(log_weights)
    probs = np.exp(log_weights - m)
    total = probs.sum()
    probs /= total
    log_z = m + np.log(total)

    pin_prob = np.zeros(n_int)
    mean = np.zeros(n_int)
    second = np.zeros(n_int)
    for mask in range(2**n_int):
        p = probs[mask]
        for i in range(n_int):
            if (mask >> i) & 1:
                pin_prob[i] += p
            else:
                mean[i] += p * means[mask, i]
                second[i] += p * (means[mask, i] ** 2 + variances[mask, i])

    result = TinyExact(
        lattice=lat,
        eps=eps,
        log_partition=log_z,
        pin_probability=pin_prob,
        mean=mean,
        second_moment=second,
        subset_log_weights=log_weights,
    )
    return result


# ---------------------------------------------------------------------------
# Stochastic domination check
# ---------------------------------------------------------------------------

def domination_check(lat: Lattice, region: Region, eps, psi=0.0, budget=200_000, seed=0,
                     grid=None):
    """Empirical check that pinning pushes the field down.

    Compares, site by site, the law of the pinned field on `region` with
    boundary psi >= 0 against the unpinned field conditioned to be
    nonnegative: domination means F_pinned(x) >= F_conditioned(x) for
    every level x.  The conditioned sample comes from plain rejection
    (aborts below a 1e-4 acceptance floor), the pinned sample from exact
    subset enumeration; both are exact in law.
    """
    if region.size > 3:
        raise ValueError("domination check is exact-sampling based; use <= 3 sites")
    psi_arr = np.full(lat.shape, float(psi)) if np.isscalar(psi) else np.asarray(psi, float)
    if np.any(psi_arr[~region.mask] < 0):
        raise ValueError("domination requires nonnegative boundary data")
    free = [int(f) for f in np.flatnonzero(region.mask.ravel())]
    M = _dense_interior_operator(lat, free)
    rhs = np.zeros(len(free))
    psi_flat = psi_arr.ravel().copy()
    psi_flat[np.asarray(free)] = 0.0
    for k, f in enumerate(free):
        site = np.unravel_index(f, lat.shape)
        rhs[k] = sum(
            psi_flat[int(np.ravel_multi_index(nb, lat.shape))]
            for nb in lat.neighbors(site)
            if int(np.ravel_multi_index(nb, lat.shape)) not in free
        )
    mu = np.linalg.solve(M, rhs)
    cov = np.linalg.inv(M)
    rng = np.random.default_rng(seed)

    # conditioned-positive sample by rejection
    chol = np.linalg.cholesky(cov)
    draws = mu[None, :] + rng.standard_normal((budget, len(free))) @ chol.T
    keep = np.all(draws >= 0.0, axis=1)
    acceptance = keep.mean()
    if acceptance < 1e-4:
        raise RuntimeError(f"rejection acceptance {acceptance:.2e} below floor 1e-4")
    positive = draws[keep]

    # pinned sample: exact mixture over pin subsets of the region
    n = len(free)
    log_w = np.empty(2**n)
    sub_mu = []
    sub_chol = []
    sub_free = []
    for mask in range(2**n):
        fr = [free[i] for i in range(n) if not (mask >> i) & 1]
        n_pin = n - len(fr)
        if n_pin > 0 and eps == 0.0:
            log_w[mask] = -np.inf
            sub_mu.append(None); sub_chol.append(None); sub_free.append(fr)
            continue
        lw = n_pin * np.log(eps) if n_pin > 0 else 0.0
        if fr:
            Ms = _dense_interior_operator(lat, fr)
            sign, logdet = np.linalg.slogdet(Ms / (2.0 * lat.d))
            lw += 0.5 * (len(fr) * np.log(np.pi / lat.d) - logdet)
            rs = np.zeros(len(fr))
            for k, f in enumerate(fr):
                site = np.unravel_index(f, lat.shape)
                rs[k] = sum(
                    psi_flat[int(np.ravel_multi_index(nb, lat.shape))]
                    for nb in lat.neighbors(site)
                    if int(np.ravel_multi_index(nb, lat.shape)) not in fr
                )
            mus = np.linalg.solve(Ms, rs)
            full = psi_arr.copy()
            fullf = full.ravel()
            for f in free:
                fullf[f] = 0.0
            for k, f in enumerate(fr):
                fullf[f] = mus[k]
            lw -= lat.bond_energy(full)
            sub_mu.append(mus)
            sub_chol.append(np.linalg.cholesky(np.linalg.inv(Ms)))
        else:
            full = psi_arr.copy()
            full.ravel()[np.asarray(free)] = 0.0
            lw -= lat.bond_energy(full)
            sub_mu.append(np.zeros(0))
            sub_chol.append(np.zeros((0, 0)))
        sub_free.append(fr)
        log_w[mask] = lw
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    choice = rng.choice(2**n, size=budget, p=w)
    pinned_draws = np.zeros((budget, n))
    for mask in range(2**n):
        rows = np.flatnonzero(choice == mask)
        if rows.size == 0 or len(sub_free[mask]) == 0:
            continue
        cols = [free.index(f) for f in sub_free[mask]]
        g = sub_mu[mask][None, :] + rng.standard_normal((rows.size, len(cols))) @ sub_chol[mask].T
        pinned_draws[np.ix_(rows, cols)] = g

    if grid is None:
        hi = float(np.quantile(positive, 0.999)) + 1.0
        grid = np.linspace(-1.0, hi, 60)
    report = {"acceptance": float(acceptance), "grid": grid, "sites": [], "passed": True}
    n_pos = positive.shape[0]
    for k in range(n):
        F_eps = np.array([np.mean(pinned_draws[:, k] <= x) for x in grid])
        F_pos = np.array([np.mean(positive[:, k] <= x) for x in grid])
        se = np.sqrt(F_eps * (1 - F_eps) / budget + F_pos * (1 - F_pos) / n_pos)
        margin = F_eps - F_pos
        ok = bool(np.all(margin >= -3.0 * np.maximum(se, 1e-12)))
        report["sites"].append({"cdf_pinned": F_eps, "cdf_positive": F_pos, "ok": ok})
        report["passed"] = report["passed"] and ok
    return report

"""Discrete Dirichlet problems on the cylinder: harmonic extensions,
Green's functions, and capacities of the killed random walk.

Everything here is linear algebra for the operator 2d(I - P) on a set of
free sites, where P is the simple-random-walk kernel killed on leaving
the set.  The Green's function is normalized as expected visit counts,
G = (I - P)^(-1), so the free-field covariance is G / (2d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import CYLINDER, Lattice, Region, full_interior

DIRECT_SOLVE_LIMIT = 100_000
_CG_TOL = 1e-12

__all__ = [
    "HarmonicField",
    "GreensTable",
    "MesoEnergy",
    "solve_dirichlet",
    "meso_energy",
    "greens",
    "greens_diagonal",
    "slab_greens_offsets",
    "capacity",
]


@dataclass
class HarmonicField:
    """Solution of a discrete Laplace problem plus its boundary data.

    field holds the full lattice array (fixed sites keep their data);
    energy is (1/2) sum over bonds of the squared increments, excluding
    wall-wall bonds; residual is max_i |2d phi_i - sum of neighbours|
    over the free sites.
    """

    lattice: Lattice
    region: Region
    field: np.ndarray
    energy: float
    residual: float


def _system(lat: Lattice, region: Region):
    A, flat = lat.adjacency(region.mask)
    M = (2.0 * lat.d) * sp.identity(flat.size, format="csr") - A
    return M, flat


def solve_dirichlet(lat: Lattice, region: Region, boundary_values):
    """Harmonic extension into `region` of the data outside it.

    boundary_values is a full-shape array; its values at every site not
    in the region (walls included) are the Dirichlet data.  Solved by a
    sparse direct factorization up to 1e5 free sites, conjugate gradient
    beyond that; the achieved residual is recorded on the result.
    """
    psi = np.asarray(boundary_values, dtype=float)
    if psi.shape != lat.shape:
        raise ValueError(f"boundary array shape {psi.shape} != lattice shape {lat.shape}")
    if not np.all(np.isfinite(psi[~region.mask])):
        raise ValueError("boundary data must be finite")
    if region.size == 0:
        full = psi.copy()
        return HarmonicField(lat, region, full, lat.bond_energy(full), 0.0)

    M, flat = _system(lat, region)
    fixed = np.where(region.mask, 0.0, psi)
    rhs = lat.neighbor_sum(fixed).ravel()[flat]

    if flat.size <= DIRECT_SOLVE_LIMIT:
        x = spla.spsolve(M.tocsc(), rhs)
    else:
        x, info = spla.cg(M, rhs, rtol=_CG_TOL, maxiter=20 * int(np.sqrt(flat.size)) + 1000)
        if info != 0:
            raise RuntimeError(f"conjugate gradient did not converge (info={info})")

    full = fixed.copy()
    full.ravel()[flat] = x
    resid = float(np.max(np.abs(M @ x - rhs))) if x.size else 0.0
    if resid > 1e-8 * max(1.0, float(np.max(np.abs(x))) if x.size else 1.0):
        raise RuntimeError(f"Dirichlet solver residual too large: {resid:.3e}")
    return HarmonicField(lat, region, full, lat.bond_energy(full), resid)


def wall_boundary_array(lat: Lattice, left, right, fill=0.0):
    """Full-shape array with the two cylinder walls set to left / right."""
    psi = np.full(lat.shape, float(fill))
    psi[0] = float(left)
    psi[lat.N] = float(right)
    return psi


# ---------------------------------------------------------------------------
# Mesoscopic energies
# ---------------------------------------------------------------------------

@dataclass
class MesoEnergy:
    """Constrained Dirichlet energies of a mesoscopic free region B.

    e_n0 is the minimal Hamiltonian over fields that equal a*N / b*N on
    the walls and 0 on the interior outside B; e_n subtracts xi*|B^c|;
    reference is N^d * min Sigma, whose gap to the true mesoscopic
    minimum is bounded by xi * d * N^(d-beta) (reported by callers that
    know beta).
    """

    region: Region
    e_n0: float
    e_n: float
    reference: float
    field: HarmonicField


def meso_energy(lat: Lattice, region: Region, a, b, xi):
    """Energy E_N(B) of the harmonic extension pinned to zero off B."""
    from .analytic import VariationalParams, min_sigma

    psi = wall_boundary_array(lat, a * lat.N, b * lat.N, fill=0.0)
    hf = solve_dirichlet(lat, region, psi)
    complement = lat.n_interior - region.size
    e_n0 = hf.energy
    e_n = e_n0 - xi * complement
    reference = lat.N**lat.d * min_sigma(VariationalParams(a=a, b=b, xi=xi))
    return MesoEnergy(region=region, e_n0=e_n0, e_n=e_n, reference=reference, field=hf)


# ---------------------------------------------------------------------------
# Green's functions
# ---------------------------------------------------------------------------

@dataclass
class GreensTable:
    """One column of the Green's function: expected visits to each interior
    site by the walk started at `source` and killed on the boundary."""

    lattice: Lattice
    source: tuple
    values: np.ndarray
    tolerance: float


def greens(lat: Lattice, source, region: Region | None = None):
    """Green's column G(source, .) of the walk killed outside `region`.

    Solves (I - P) g = delta_source over the free sites; G(i, i) is the
    expected number of visits to i (the n = 0 visit included), and the
    free-field covariance is G / (2d).
    """
    if region is None:
        region = full_interior(lat)
    source = tuple(int(c) for c in source)
    if not lat.is_interior(source) or not region.mask[source]:
        raise ValueError(f"source {source} must lie inside the region")
    M, flat = _system(lat, region)
    rhs = np.zeros(flat.size)
    pos = np.flatnonzero(flat == np.ravel_multi_index(source, lat.shape))
    rhs[pos[0]] = 2.0 * lat.d
    x = spla.spsolve(M.tocsc(), rhs)
    values = np.zeros(lat.shape)
    values.ravel()[flat] = x
    resid = float(np.max(np.abs(M @ x - rhs)))
    return GreensTable(lattice=lat, source=source, values=values, tolerance=resid)


def greens_diagonal(lat: Lattice, region: Region | None = None):
    """G(i,i) for every free site, as a full-shape array (0 elsewhere).

    On the full cylinder interior the diagonal only depends on the first
    coordinate, so one solve per slab height suffices; otherwise falls
    back to a dense inverse (small systems only).
    """
    if region is None:
        region = full_interior(lat)
    out = np.zeros(lat.shape)
    whole_interior = region.size == lat.n_interior
    if lat.kind == CYLINDER and whole_interior:
        origin = (0,) * (lat.d - 1)
        for i1 in range(1, lat.N):
            col = greens(lat, (i1, *origin))
            out[i1] = col.values[(i1, *origin)]
        return out
    if region.size > 4000:
        raise ValueError("dense Green diagonal limited to 4000 sites on irregular regions")
    M, flat = _system(lat, region)
    Gdense = np.linalg.inv(M.toarray()) * (2.0 * lat.d)
    out.ravel()[flat] = np.diag(Gdense)
    return out


# ---------------------------------------------------------------------------
# Green's function of the infinite slab {0..N} x Z^(d-1)
# ---------------------------------------------------------------------------

def _transverse_window_adjacency(d_transverse, half_width):
    """Adjacency of the box [-W, W]^k in Z^k (free edges)."""
    n = 2 * half_width + 1
    shape = (n,) * d_transverse
    size = n**d_transverse
    grid = np.arange(size).reshape(shape)
    rows, cols = [], []
    for a in range(d_transverse):
        sl_lo = [slice(None)] * d_transverse
        sl_hi = [slice(None)] * d_transverse
        sl_lo[a] = slice(None, -1)
        sl_hi[a] = slice(1, None)
        rows.append(grid[tuple(sl_lo)].ravel())
        cols.append(grid[tuple(sl_hi)].ravel())
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    one = np.ones(r.size)
    return sp.coo_matrix(
        (np.concatenate([one, one]), (np.concatenate([r, c]), np.concatenate([c, r]))),
        shape=(size, size),
    ).tocsr(), shape


def _slab_decay_rate(N):
    """Slowest transverse decay rate of the slab Green's function."""
    kappa1 = 2.0 * (1.0 - np.cos(np.pi / N))
    return float(np.arccosh(1.0 + kappa1 / 2.0))


_slab_mode_cache: dict = {}


def _slab_mode_greens(d, N, max_offset, pad):
    """Per-mode massive transverse Green's functions on a window.

    Returns K of shape (N-1, (2*max_offset+1)^(d-1) grid): K[m-1][u] is
    the transverse Green's function of mass 2d - 2cos(pi m / N) at
    displacement u, times 2d, computed with zero boundary at the window
    edge [-W, W]^(d-1), W = max_offset + pad.
    """
    key = (d, N, max_offset, pad)
    if key in _slab_mode_cache:
        return _slab_mode_cache[key]
    W = max_offset + pad
    dt = d - 1
    A, shape = _transverse_window_adjacency(dt, W)
    size = A.shape[0]
    center = np.ravel_multi_index((W,) * dt, shape)
    e0 = np.zeros(size)
    e0[center] = 1.0
    sel = tuple(slice(pad, pad + 2 * max_offset + 1) for _ in range(dt))
    K = np.empty((N - 1,) + (2 * max_offset + 1,) * dt)
    for m in range(1, N):
        lam_m = 2.0 * np.cos(np.pi * m / N)
        B = (2.0 * d - lam_m) * sp.identity(size, format="csr") - A
        w = spla.spsolve(B.tocsc(), e0)
        K[m - 1] = (2.0 * d) * w.reshape(shape)[sel]
    _slab_mode_cache[key] = K
    return K


def slab_greens_offsets(d, N, i1, j1, max_offset, pad=None):
    """Green's function of the slab {0..N} x Z^(d-1) between heights i1, j1.

    Returns (g, budget): g has shape (2*max_offset+1,)*(d-1) with
    g[u] = G_slab((i1, 0), (j1, u)), u indexed from -max_offset.

    Separates the first coordinate in the Dirichlet sine basis of the
    path {1..N-1}; each mode leaves a massive (d-1)-dimensional lattice
    Green's function, computed on a window [-W, W]^(d-1) with zero far
    boundary (W = max_offset + pad).  The truncation error decays like
    exp(-2 * mu_1 * pad) with cosh(mu_1) = 2 - cos(pi/N); the bound is
    the returned budget.
    """
    if not (1 <= i1 <= N - 1 and 1 <= j1 <= N - 1):
        raise ValueError("slab heights must be interior: 1..N-1")
    mu1 = _slab_decay_rate(N)
    if pad is None:
        # pad so the window reflection contributes < 1e-10
        pad = int(np.ceil(23.0 / (2.0 * mu1))) + 2
    K = _slab_mode_greens(d, N, max_offset, pad)
    m = np.arange(1, N)
    weights = (2.0 / N) * np.sin(np.pi * m * i1 / N) * np.sin(np.pi * m * j1 / N)
    g = np.tensordot(weights, K, axes=(0, 0))
    budget = float(2 * (d - 1) * N * np.exp(-2.0 * mu1 * pad))
    return g, budget


def greens_cylinder_from_slab(lat: Lattice, source, k_max=8):
    """Cylinder Green's column rebuilt from slab solves:
    G_N(i, j) = sum over transverse shifts k of G_slab(i, j + k*N).

    Returns (values, budget): values as a full-shape array over D_N, and
    the combined truncation budget (shift tail + window truncation).
    """
    if lat.kind != CYLINDER:
        raise ValueError("decomposition applies to the cylinder")
    source = tuple(int(c) for c in source)
    if not lat.is_interior(source):
        raise ValueError("source must be interior")
    N, d = lat.N, lat.d
    dt = d - 1
    max_offset = k_max * N + N - 1
    values = np.zeros(lat.shape)
    total_budget = 0.0
    for j1 in range(1, N):
        g, budget = slab_greens_offsets(d, N, source[0], j1, max_offset)
        total_budget = max(total_budget, budget)
        # accumulate over shifts: target transverse coordinate y in [0,N)^dt,
        # displacement u = y - source_transverse + k*N for |k| <= k_max
        src_t = np.array(source[1:], dtype=int)
        coords = np.indices((N,) * dt).reshape(dt, -1).T
        acc = np.zeros(coords.shape[0])
        shifts = np.array(
            np.meshgrid(*([np.arange(-k_max, k_max + 1)] * dt), indexing="ij")
        ).reshape(dt, -1).T
        for k in shifts:
            u = coords - src_t[None, :] + k[None, :] * N
            idx = tuple((u[:, a] + max_offset) for a in range(dt))
            acc += g[idx]
        block = acc.reshape((N,) * dt)
        values[j1] = block
    # shift-tail budget: images beyond |k| = k_max, bounded by the mu_1 decay
    mu1 = _slab_decay_rate(N)
    tail = 4.0 * dt * N * np.exp(-mu1 * (k_max - 1) * N) / max(1e-300, 1.0 - np.exp(-mu1 * N))
    return values, total_budget + tail


# ---------------------------------------------------------------------------
# Capacity
# ---------------------------------------------------------------------------

def capacity(lat: Lattice, region: Region):
    """Capacity of a set A: total escape mass of the killed walk.

    Solves u = 0 on A, u = 1 on the walls, harmonic in between; then
    cap(A) = sum over x in A of (1/2d) sum of u over the neighbours of x,
    the probability of reaching a wall before returning to A.
    """
    if lat.kind != CYLINDER:
        raise ValueError("capacity is defined for the cylinder walk")
    if region.size == 0:
        return 0.0
    free_mask = lat.interior_mask() & ~region.mask
    psi = np.zeros(lat.shape)
    psi[0] = 1.0
    psi[lat.N] = 1.0
    hf = solve_dirichlet(lat, Region(lat, free_mask), psi)
    u = hf.field
    esc = lat.neighbor_sum(u) / (2.0 * lat.d)
    return float(np.sum(esc[region.mask]))

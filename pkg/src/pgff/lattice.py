"""Lattice geometry: the cylinder D_N = {0..N} x T_N^{d-1} and free boxes.

The cylinder is periodic in every coordinate except the first.  Its two
flat walls are the left boundary (first coordinate 0) and the right
boundary (first coordinate N); everything in between is interior.  Free
boxes {1..l}^d sit inside Z^d with a zero shell around them.

Bonds are counted per direction: every site owns one bond in each
positive coordinate direction (wrapping in the periodic coordinates).
With this convention every interior site has exactly 2*d incident bonds.
For N = 2 the two transverse neighbours of a site coincide as a site but
still carry two bonds, which is what keeps the random-walk kernel equal
to (1/2d) * adjacency and the interior degree equal to 2d uniformly.

Canonical site index (used by snapshots and anywhere a flat ordering is
needed): idx = i1 * N^(d-1) + sum_{a=2..d} i_a * N^(d-a).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CYLINDER = "cylinder"
FREE_BOX = "free-box"


@dataclass(frozen=True)
class Lattice:
    """Geometry of a cylinder D_N or a free box {1..N}^d.

    For the cylinder the field array has shape (N+1, N, ..., N): axis 0 is
    the non-periodic coordinate including both walls, the remaining d-1
    axes are periodic.  For the free box the array has shape (N+2,)*d with
    a one-site zero shell; sites 1..N per axis are interior.
    """

    d: int
    N: int
    kind: str = CYLINDER

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got d={self.d}")
        if self.N < 2 and self.kind == CYLINDER:
            raise ValueError(f"cylinder needs N >= 2, got N={self.N}")
        if self.N < 1:
            raise ValueError(f"box side must be >= 1, got N={self.N}")
        if self.kind == CYLINDER and self.N % 2 != 0:
            raise ValueError(
                f"cylinder side N must be even (bipartite walk, even-step returns); got N={self.N}"
            )
        if self.kind not in (CYLINDER, FREE_BOX):
            raise ValueError(f"unknown lattice kind {self.kind!r}")

    # -- shapes ----------------------------------------------------------

    @property
    def shape(self):
        """Shape of a full field array including boundary sites."""
        if self.kind == CYLINDER:
            return (self.N + 1,) + (self.N,) * (self.d - 1)
        return (self.N + 2,) * self.d

    @property
    def n_sites(self):
        return int(np.prod(self.shape))

    @property
    def n_interior(self):
        if self.kind == CYLINDER:
            return (self.N - 1) * self.N ** (self.d - 1)
        return self.N**self.d

    def interior_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        if self.kind == CYLINDER:
            m[1 : self.N] = True
        else:
            m[(slice(1, self.N + 1),) * self.d] = True
        return m

    def boundary_mask(self):
        return ~self.interior_mask()

    def left_boundary_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        if self.kind != CYLINDER:
            raise ValueError("left/right walls only exist on the cylinder")
        m[0] = True
        return m

    def right_boundary_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        if self.kind != CYLINDER:
            raise ValueError("left/right walls only exist on the cylinder")
        m[self.N] = True
        return m

    # -- canonical indexing ------------------------------------------------

    def encode(self, site):
        """Canonical flat index of a site given as a coordinate tuple."""
        site = tuple(int(c) for c in site)
        self._check_site(site)
        idx = site[0]
        for a in range(1, self.d):
            idx = idx * self.N + site[a]
        return idx

    def decode(self, idx):
        """Inverse of encode."""
        idx = int(idx)
        coords = []
        for _ in range(self.d - 1):
            coords.append(idx % self.N)
            idx //= self.N
        coords.append(idx)
        site = tuple(reversed(coords))
        self._check_site(site)
        return site

    def _check_site(self, site):
        if len(site) != self.d:
            raise ValueError(f"site {site} has wrong dimension (d={self.d})")
        hi0 = self.N if self.kind == CYLINDER else self.N + 1
        if not (0 <= site[0] <= hi0):
            raise ValueError(f"first coordinate of {site} out of range [0,{hi0}]")
        for a in range(1, self.d):
            hi = self.N - 1 if self.kind == CYLINDER else self.N + 1
            if not (0 <= site[a] <= hi):
                raise ValueError(f"coordinate {a} of {site} out of range")

    # -- neighbours --------------------------------------------------------

    def neighbors(self, site):
        """Neighbours of a site, with multiplicity (2d entries for interior).

        Cylinder walls have their outward bonds dropped; transverse
        coordinates wrap mod N.
        """
        site = tuple(int(c) for c in site)
        self._check_site(site)
        out = []
        for a in range(self.d):
            for s in (-1, +1):
                nb = list(site)
                nb[a] += s
                if self.kind == CYLINDER:
                    if a == 0:
                        if not (0 <= nb[0] <= self.N):
                            continue
                    else:
                        nb[a] %= self.N
                else:
                    if not (0 <= nb[a] <= self.N + 1):
                        continue
                out.append(tuple(nb))
        return out

    def is_interior(self, site):
        site = tuple(int(c) for c in site)
        self._check_site(site)
        if self.kind == CYLINDER:
            return 1 <= site[0] <= self.N - 1
        return all(1 <= c <= self.N for c in site)

    # -- vectorised neighbour sum ------------------------------------------

    def neighbor_sum(self, phi):
        """Sum of the 2d neighbour values at every site (multiplicity counted).

        phi must have the full lattice shape; values at all sites are used,
        so boundary rows must hold their boundary data.  Entries of the
        result at boundary sites are not meaningful (their outward
        neighbours are missing) and must not be consumed.
        """
        if phi.shape != self.shape:
            raise ValueError(f"field shape {phi.shape} != lattice shape {self.shape}")
        s = np.zeros_like(phi)
        s[1:] += phi[:-1]
        s[:-1] += phi[1:]
        for a in range(1, self.d):
            if self.kind == CYLINDER:
                s += np.roll(phi, 1, axis=a) + np.roll(phi, -1, axis=a)
            else:
                sl_lo = [slice(None)] * self.d
                sl_hi = [slice(None)] * self.d
                sl_lo[a] = slice(1, None)
                sl_hi[a] = slice(None, -1)
                s[tuple(sl_lo)] += phi[tuple(sl_hi)]
                s[tuple(sl_hi)] += phi[tuple(sl_lo)]
        return s

    def bond_energy(self, phi):
        """(1/2) * sum over bonds of (phi_i - phi_j)^2, one term per bond.

        Bonds with both endpoints on the cylinder walls are excluded (they
        are constants under fixed boundary data and cancel from every
        ratio this package computes).
        """
        if phi.shape != self.shape:
            raise ValueError(f"field shape {phi.shape} != lattice shape {self.shape}")
        e = 0.0
        d1 = np.diff(phi, axis=0)
        e += 0.5 * float(np.sum(d1 * d1))
        for a in range(1, self.d):
            if self.kind == CYLINDER:
                # wall-internal transverse bonds (rows 0 and N) excluded
                da = (np.roll(phi, -1, axis=a) - phi)[1 : self.N]
            else:
                da = np.diff(phi, axis=a)
            e += 0.5 * float(np.sum(da * da))
        return e

    # -- interior walk kernel ------------------------------------------------

    def interior_indices(self):
        """Flat (C-order over self.shape) indices of the interior sites."""
        return np.flatnonzero(self.interior_mask().ravel())

    def adjacency(self, mask=None):
        """Sparse adjacency (with bond multiplicity) between sites in `mask`.

        Returns (A, flat_idx): A[k,l] = number of bonds between the k-th and
        l-th site listed in flat_idx.  Default mask is the interior.
        """
        if mask is None:
            mask = self.interior_mask()
        if mask.shape != self.shape:
            raise ValueError("mask shape mismatch")
        flat = np.flatnonzero(mask.ravel())
        pos = -np.ones(self.n_sites, dtype=np.int64)
        pos[flat] = np.arange(flat.size)
        rows, cols = [], []
        grid = np.arange(self.n_sites).reshape(self.shape)
        for a in range(self.d):
            if a == 0 or self.kind == FREE_BOX:
                sl_lo = [slice(None)] * self.d
                sl_hi = [slice(None)] * self.d
                sl_lo[a] = slice(None, -1)
                sl_hi[a] = slice(1, None)
                i = grid[tuple(sl_lo)].ravel()
                j = grid[tuple(sl_hi)].ravel()
            else:
                i = grid.ravel()
                j = np.roll(grid, -1, axis=a).ravel()
            keep = (pos[i] >= 0) & (pos[j] >= 0)
            rows.append(pos[i[keep]])
            cols.append(pos[j[keep]])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        data = np.ones(r.size)
        A = sp.coo_matrix(
            (np.concatenate([data, data]), (np.concatenate([r, c]), np.concatenate([c, r]))),
            shape=(flat.size, flat.size),
        ).tocsr()
        return A, flat

    def walk_kernel(self, mask=None):
        """P = adjacency / (2d), the killed simple-random-walk kernel."""
        A, flat = self.adjacency(mask)
        return A / (2.0 * self.d), flat


def build_lattice(d, N, kind=CYLINDER):
    """Construct a Lattice; rejects odd N for the cylinder and d < 1."""
    return Lattice(d=d, N=N, kind=kind)


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------

@dataclass
class Region:
    """A subset of interior sites, as a boolean mask plus a kind tag."""

    lattice: Lattice
    mask: np.ndarray
    kind: str = "generic"

    def __post_init__(self):
        if self.mask.shape != self.lattice.shape:
            raise ValueError("region mask shape mismatch")
        if np.any(self.mask & ~self.lattice.interior_mask()):
            raise ValueError("region contains non-interior sites")
        self.mask = self.mask.astype(bool)

    @property
    def size(self):
        return int(self.mask.sum())

    def indices(self):
        return np.flatnonzero(self.mask.ravel())

    def __and__(self, other):
        return Region(self.lattice, self.mask & other.mask)

    def __or__(self, other):
        return Region(self.lattice, self.mask | other.mask)


def slab(lat: Lattice, n_lo, n_hi, kind="slab"):
    """Slab with first coordinate in [n_lo, n_hi] (interior sites only)."""
    if lat.kind != CYLINDER:
        raise ValueError("slabs are cylinder regions")
    if not (1 <= n_lo <= n_hi <= lat.N - 1):
        raise ValueError(f"slab range [{n_lo},{n_hi}] not inside interior [1,{lat.N - 1}]")
    m = np.zeros(lat.shape, dtype=bool)
    m[n_lo : n_hi + 1] = True
    return Region(lat, m, kind=kind)


def full_interior(lat: Lattice):
    return Region(lat, lat.interior_mask(), kind="interior")


def region_from_sites(lat: Lattice, sites, kind="generic"):
    m = np.zeros(lat.shape, dtype=bool)
    for s in sites:
        lat._check_site(tuple(s))
        m[tuple(int(c) for c in s)] = True
    return Region(lat, m, kind=kind)


def boundary_sites(region: Region):
    """Exterior boundary: sites outside the region adjacent to it.

    Returned as a boolean mask over the full lattice.  Multiplicity does
    not matter here; this is a set of sites.
    """
    lat = region.lattice
    grown = np.zeros(lat.shape, dtype=bool)
    m = region.mask
    grown[:-1] |= m[1:]
    grown[1:] |= m[:-1]
    for a in range(1, lat.d):
        if lat.kind == CYLINDER:
            grown |= np.roll(m, 1, axis=a) | np.roll(m, -1, axis=a)
        else:
            sl_lo = [slice(None)] * lat.d
            sl_hi = [slice(None)] * lat.d
            sl_lo[a] = slice(None, -1)
            sl_hi[a] = slice(1, None)
            grown[tuple(sl_lo)] |= m[tuple(sl_hi)]
            grown[tuple(sl_hi)] |= m[tuple(sl_lo)]
    return grown & ~m


def contact_count(a: Region, c: Region):
    """|boundary(a) ∩ c|: number of sites of c adjacent to a."""
    return int(np.sum(boundary_sites(a) & c.mask))


def five_region_partition(lat: Lattice, s_left, s_right, collar):
    """Split the interior into A_L, gamma_L, B, gamma_R, A_R.

    The two collars gamma_L, gamma_R of width collar+1 and collar sit at
    the heights N*s_left and N*s_right (rounded to nearest integer); A_L
    and A_R are the outer slabs and B the middle band.  Together:
    |gamma_L| + |gamma_R| = (2*collar+1) * N^(d-1).
    """
    if lat.kind != CYLINDER:
        raise ValueError("five-region partition lives on the cylinder")
    if not (0.0 < s_left < s_right < 1.0):
        raise ValueError(f"need 0 < s_left < s_right < 1, got {s_left}, {s_right}")
    if collar < 0:
        raise ValueError("collar width must be >= 0")
    N = lat.N
    nL = int(round(N * s_left))
    nR = int(round(N * s_right))
    if not (1 <= nL - collar - 1):
        raise ValueError(
            f"left collar does not fit: need 1 <= round(N*s_left)-collar-1 = {nL - collar - 1}"
        )
    if not (nR + collar + 1 <= N - 1):
        raise ValueError(
            f"right collar does not fit: need round(N*s_right)+collar+1 = {nR + collar + 1} <= {N - 1}"
        )
    if nL + 1 > nR:
        raise ValueError("collars overlap the middle band")
    a_left = slab(lat, 1, nL - collar - 1, kind="A_L")
    gamma_left = slab(lat, nL - collar, nL, kind="gamma_L")
    middle = slab(lat, nL + 1, nR, kind="B")
    gamma_right = (
        slab(lat, nR + 1, nR + collar, kind="gamma_R")
        if collar >= 1
        else Region(lat, np.zeros(lat.shape, dtype=bool), kind="gamma_R")
    )
    a_right = slab(lat, nR + collar + 1, N - 1, kind="A_R")
    return a_left, gamma_left, middle, gamma_right, a_right


# ---------------------------------------------------------------------------
# Mesoscopic subbox grid
# ---------------------------------------------------------------------------

@dataclass
class SubboxGrid:
    """Tiling of the cylinder by boxes of side N^beta (which must divide N).

    Boxes cover first coordinate 0..N-1; the extra wall row at N is
    attached to the last box layer for lookups only.  There are
    N^(d(1-beta)) boxes of side^d sites each.
    """

    lattice: Lattice
    beta: float
    side: int

    def __post_init__(self):
        N = self.lattice.N
        if N % self.side != 0:
            raise ValueError(f"subbox side {self.side} does not divide N={N}")

    @property
    def boxes_per_axis(self):
        return self.lattice.N // self.side

    @property
    def n_boxes(self):
        return self.boxes_per_axis**self.lattice.d

    def box_index(self):
        """Array over the full lattice shape: which box each site belongs to.

        The wall row at first coordinate N is clamped into the last layer.
        """
        lat = self.lattice
        coords = np.indices(lat.shape)
        coords0 = np.minimum(coords[0], lat.N - 1)
        idx = coords0 // self.side
        for a in range(1, lat.d):
            idx = idx * self.boxes_per_axis + coords[a] // self.side
        return idx

    def block_mean(self, phi):
        """Arithmetic mean of phi over each box, returned per box (flat)."""
        if phi.shape != self.lattice.shape:
            raise ValueError("field shape mismatch")
        lat = self.lattice
        body = phi[: lat.N] if lat.kind == CYLINDER else phi
        nb = self.boxes_per_axis
        s = self.side
        view = body.reshape(*(x for _ in range(lat.d) for x in (nb, s)))
        axes = tuple(2 * a + 1 for a in range(lat.d))
        return view.mean(axis=axes).ravel()


def subbox_partition(lat: Lattice, beta):
    """Build the subbox grid for the mesoscopic exponent beta in (0, 1]."""
    if not (0.0 < beta <= 1.0):
        raise ValueError(f"beta must be in (0,1], got {beta}")
    side = int(round(lat.N**beta))
    if side < 1 or lat.N % side != 0:
        raise ValueError(
            f"no admissible integer subbox side: N^beta = {lat.N**beta:.4g} "
            f"rounds to {side}, which does not divide N={lat.N}"
        )
    return SubboxGrid(lattice=lat, beta=beta, side=side)

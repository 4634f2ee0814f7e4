"""Exact even-step return probabilities of the simple random walk.

The walk on Z^d has characteristic function psi(theta) = mean of
cos(theta_a), so the return probability after 2n steps is the torus
integral of psi^(2n).  A uniform L-point grid per axis evaluates that
integral exactly for the walk on the L-torus, i.e. up to the probability
of reaching a nonzero multiple of L in 2n steps ("aliasing"), which is
driven below a requested tolerance by choosing L from a Chernoff bound.

The cylinder walk (Z x T_N^(d-1)) uses exact discrete phases 2*pi*m/N in
the periodic coordinates and the same alias-controlled grid along the
free one.

Series in n are summed to a cutoff and completed with a fitted power-law
tail: the summand is matched to A1 * n^(-s) + A2 * n^(-s-1) + ... on the
last stretch of computed values and the remainder is summed by
Euler-Maclaurin.  The fit residual becomes the reported tail budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ReturnSeries",
    "zd_return_series",
    "cylinder_return_series",
    "loop_constant",
    "green_constant",
    "series_difference_constant",
    "bridge_max_constant",
]

_series_cache: dict = {}


@dataclass(frozen=True)
class ReturnSeries:
    """p[n-1] = P(walk is back at the origin after 2n steps), n = 1..n_max."""

    d: int
    p: np.ndarray
    alias_budget: float
    label: str

    @property
    def n_max(self):
        return self.p.size


def _alias_bound(L, two_n, d, n_images):
    """Chernoff bound on the probability that one coordinate of the walk
    moved by at least L in two_n steps, times the number of image axes."""
    t = np.arcsinh(L * d / max(two_n, 1))
    expo = (two_n / d) * (np.cosh(t) - 1.0) - t * L
    return float(n_images * np.exp(expo))


def _grid_size_for(two_n_max, d, tol, n_images):
    L = int(np.ceil(2.0 * np.sqrt(two_n_max / d)))
    L += L % 2
    while _alias_bound(L, two_n_max, d, n_images) > tol:
        L += 2
    return L


def _folded_cos(L):
    """cos(2*pi*j/L) for j = 0..L/2 with trapezoid fold weights."""
    j = np.arange(L // 2 + 1)
    c = np.cos(2.0 * np.pi * j / L)
    w = np.full(j.size, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return c, w


def _psi_series(axis_cos, axis_w, d, n_max, denominator):
    """Return probabilities from per-axis cosine grids.

    axis_cos / axis_w are lists of 1d arrays; psi = (sum of cos) / d on
    the product grid; p(2n) = weighted mean of psi^(2n).
    """
    shape = tuple(c.size for c in axis_cos)
    psi = np.zeros(shape)
    weight = np.ones(shape)
    for a, (c, w) in enumerate(zip(axis_cos, axis_w)):
        sl = [None] * len(axis_cos)
        sl[a] = slice(None)
        psi = psi + c[tuple(sl)]
        weight = weight * w[tuple(sl)]
    psi /= d
    psi2 = psi * psi
    cur = weight.copy()
    out = np.empty(n_max)
    for n in range(n_max):
        cur *= psi2
        out[n] = cur.sum()
    return out / denominator


def zd_return_series(d, n_max, alias_tol=1e-12):
    """P_0(eta_{2n} = 0), n = 1..n_max, for the walk on Z^d."""
    key = ("zd", d, n_max, alias_tol)
    if key in _series_cache:
        return _series_cache[key]
    if d == 1:
        # C(2n, n) 4^(-n), exactly, by the ratio recursion
        p = np.empty(n_max)
        val = 0.5
        p[0] = val
        for n in range(1, n_max):
            val *= (2 * n + 1) / (2 * n + 2)
            p[n] = val
        series = ReturnSeries(d=d, p=p, alias_budget=0.0, label="Z^1 exact")
    else:
        L = _grid_size_for(2 * n_max, d, alias_tol, n_images=2 * d)
        c, w = _folded_cos(L)
        p = _psi_series([c] * d, [w] * d, d, n_max, denominator=float(L) ** d)
        series = ReturnSeries(
            d=d,
            p=p,
            alias_budget=_alias_bound(L, 2 * n_max, d, 2 * d),
            label=f"Z^{d} torus quadrature L={L}",
        )
    _series_cache[key] = series
    return series


def cylinder_return_series(d, N, n_max, alias_tol=1e-12):
    """P_0(eta_{2n} = 0) for the walk on Z x T_N^(d-1) (N even)."""
    if N % 2 != 0:
        raise ValueError("cylinder torus size N must be even")
    key = ("cyl", d, N, n_max, alias_tol)
    if key in _series_cache:
        return _series_cache[key]
    L = _grid_size_for(2 * n_max, d, alias_tol, n_images=2)
    c1, w1 = _folded_cos(L)
    cN, wN = _folded_cos(N)
    axis_cos = [c1] + [cN] * (d - 1)
    axis_w = [w1] + [wN] * (d - 1)
    p = _psi_series(axis_cos, axis_w, d, n_max, denominator=float(L) * N ** (d - 1))
    series = ReturnSeries(
        d=d,
        p=p,
        alias_budget=_alias_bound(L, 2 * n_max, d, 2),
        label=f"Z x T_{N}^{d - 1} quadrature L={L}",
    )
    _series_cache[key] = series
    return series


# ---------------------------------------------------------------------------
# Tail-completed series sums
# ---------------------------------------------------------------------------

def _zeta_beyond(s, M):
    """sum over n > M of n^(-s), by Euler-Maclaurin around the integral."""
    return (
        M ** (1.0 - s) / (s - 1.0)
        - 0.5 * M ** (-s)
        + s / 12.0 * M ** (-s - 1.0)
        - s * (s + 1.0) * (s + 2.0) / 720.0 * M ** (-s - 3.0)
    )


def _fitted_tail(f, s0, n_terms=3, window=0.5):
    """Complete sum_{n > n_max} f(n) assuming f ~ sum_k A_k n^(-s0-k).

    Fits the coefficients on the trailing `window` fraction of the
    computed values and integrates the model beyond the cutoff.  Returns
    (tail, budget) with budget = fit residual propagated to the tail.
    """
    M = f.size
    lo = max(int(M * (1.0 - window)), 8)
    n = np.arange(lo + 1, M + 1, dtype=float)
    y = f[lo:]
    X = np.stack([n ** (-(s0 + k)) for k in range(n_terms)], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    tail = float(sum(coef[k] * _zeta_beyond(s0 + k, M) for k in range(n_terms)))
    # residual relative to the leading model term, carried onto the tail
    scale = np.abs(X @ coef)
    rel = float(np.max(np.abs(resid) / np.maximum(scale, 1e-300)))
    budget = abs(rel * tail) + 1e-300
    return tail, budget


def loop_constant(series: ReturnSeries):
    """sum over n >= 1 of P(eta_{2n} = 0) / (2n), tail-completed.

    Returns (value, budget).
    """
    n = np.arange(1, series.n_max + 1, dtype=float)
    f = series.p / (2.0 * n)
    head = float(f.sum())
    tail, tail_budget = _fitted_tail(f, s0=1.0 + series.d / 2.0)
    return head + tail, tail_budget + series.alias_budget


def green_constant(series: ReturnSeries):
    """G(0,0) = 1 + sum over n >= 1 of P(eta_{2n} = 0); requires d >= 3."""
    if series.d < 3:
        raise ValueError("the walk is recurrent for d < 3: G(0,0) diverges")
    head = 1.0 + float(series.p.sum())
    tail, tail_budget = _fitted_tail(series.p, s0=series.d / 2.0)
    return head + tail, tail_budget + series.alias_budget


def series_difference_constant(d, N, n_max, alias_tol=1e-12):
    """q^N - q = sum over n of (p_cylinder - p_zd) / (2n), tail-completed.

    The difference is the aliasing mass of the periodic walk, nonnegative
    term by term; for n >> N^2 it decays like n^(-3/2) once the periodic
    coordinates have equilibrated, which fixes the tail exponent.
    """
    zs = zd_return_series(d, n_max, alias_tol)
    cs = cylinder_return_series(d, N, n_max, alias_tol)
    diff = cs.p - zs.p
    n = np.arange(1, n_max + 1, dtype=float)
    f = diff / (2.0 * n)
    head = float(f.sum())
    tail, tail_budget = _fitted_tail(f, s0=1.5)
    budget = tail_budget + zs.alias_budget + cs.alias_budget
    return head + tail, budget, diff


# ---------------------------------------------------------------------------
# Monte Carlo bridge-maximum constant
# ---------------------------------------------------------------------------

def bridge_max_constant(d, n_max=512, n_walks=200_000, seed=0):
    """Monte Carlo estimate of sum over n of E[max |eta| ; eta_{2n} = 0] / (2n).

    Plain simulation: every walk of length 2*n_max accumulates, at each
    even time 2n at the origin, its running maximum Euclidean norm over
    2n.  Returns (estimate, standard_error, tail_budget); the n > n_max
    remainder is bounded using max <= sqrt(2n) * walk scale and the
    n^(-5/2) decay of the return weights (d >= 3).
    """
    if d < 2:
        raise ValueError("the bridge-maximum constant is finite only for d >= 2")
    rng = np.random.default_rng(seed)
    pos = np.zeros((n_walks, d), dtype=np.int64)
    run_max2 = np.zeros(n_walks)
    acc = np.zeros(n_walks)
    for step in range(1, 2 * n_max + 1):
        axis = rng.integers(0, d, size=n_walks)
        sign = rng.integers(0, 2, size=n_walks) * 2 - 1
        pos[np.arange(n_walks), axis] += sign
        norm2 = np.einsum("ij,ij->i", pos, pos)
        np.maximum(run_max2, norm2, out=run_max2)
        if step % 2 == 0:
            at0 = norm2 == 0
            if at0.any():
                acc[at0] += np.sqrt(run_max2[at0]) / step
    est = float(acc.mean())
    se = float(acc.std(ddof=1) / np.sqrt(n_walks))
    # beyond the cutoff: E[max ; return] <= c sqrt(2n) P(return), P ~ C n^(-d/2)
    zs = zd_return_series(d, min(n_max, 2048))
    c_lead = float(zs.p[-1] * (zs.n_max ** (d / 2.0)))
    tail_budget = c_lead * 2.0 * _zeta_beyond((d + 1.0) / 2.0, n_max)
    return est, se, tail_budget

"""Free-fermion oracle for the XY chain (no SzSz coupling).

A Jordan-Wigner transformation maps the chain onto free fermions whose
one-body hopping matrix has entries 1/2 on nearest-neighbour pairs.  The
two-point function evolves as ``G(t) = U(t)^dag G(0) U(t)`` with
``U = exp(-1j M t)``, and on-site magnetizations follow from its
diagonal: ``<Sz_i> = G_ii - 1/2``.  On a ring the fermion chain closes
with a boundary sign fixed by fermion-number parity (antiperiodic for an
even number of fermions).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hilbert import neel_bits

CENTER_PHASE = 3 * np.pi / 4  # phase offset of the staggered envelope cos(2t + phase)


@dataclass(frozen=True)
class HoppingMatrix:
    """One-body hopping matrix: real symmetric, zero diagonal, 1/2 on
    neighbouring pairs; ``boundary_sign`` is the ring closure sign
    (0 on open chains)."""

    n_sites: int
    entries: np.ndarray = field(repr=False)
    boundary_sign: float = 0.0

    def __post_init__(self):
        e = self.entries
        if e.shape != (self.n_sites, self.n_sites):
            raise ValueError("entries shape does not match n_sites")
        if not np.array_equal(e, e.T) or np.any(np.diag(e) != 0.0):
            raise ValueError("entries must be symmetric with zero diagonal")


def hopping_matrix(
    n_sites: int, periodic: bool = False, n_fermions: int | None = None
) -> HoppingMatrix:
    """Hopping matrix of the XY chain (coupling 1 convention).

    For a ring the (0, n-1) element carries a parity sign (antiperiodic
    for an even fermion number), so ``n_fermions`` is required when
    ``periodic``.
    """
    m = np.zeros((n_sites, n_sites))
    for i in range(n_sites - 1):
        m[i, i + 1] = m[i + 1, i] = 0.5
    sign = 0.0
    if periodic:
        if n_fermions is None:
            raise ValueError("periodic chains need n_fermions to fix the boundary sign")
        sign = -1.0 if n_fermions % 2 == 0 else 1.0
        m[0, n_sites - 1] += 0.5 * sign
        m[n_sites - 1, 0] += 0.5 * sign
    return HoppingMatrix(n_sites, m, sign)


def neel_occupations(n_sites: int, up_first: bool = True) -> np.ndarray:
    """Fermion occupations matching the alternating spin pattern."""
    bits = neel_bits(n_sites, up_first)
    return np.array([(bits >> i) & 1 for i in range(n_sites)], dtype=float)


def neel_correlations(n_sites: int, up_first: bool = True) -> np.ndarray:
    """Two-point matrix G_ij = <c^dag_i c_j> of the alternating product
    state: diagonal with ones on occupied sites."""
    return np.diag(neel_occupations(n_sites, up_first)).astype(np.complex128)


def evolve_correlations(m: HoppingMatrix, g0: np.ndarray, t: float) -> np.ndarray:
    """G(t) = U^dag G(0) U with U = exp(-1j M t) (one-body evolution)."""
    g0 = np.asarray(g0, dtype=np.complex128)
    if t == 0.0:
        return g0.copy()
    evals, vecs = np.linalg.eigh(m.entries)
    u = (vecs * np.exp(-1j * evals * t)) @ vecs.T.conj()
    return u.conj().T @ g0 @ u


def sz_profile(m: HoppingMatrix, g0: np.ndarray, t: float) -> np.ndarray:
    """Per-site magnetization G_ii(t) - 1/2."""
    return np.real(np.diag(evolve_correlations(m, g0, t))) - 0.5


def central_site(n_sites: int) -> int:
    return (n_sites - 1) // 2


def up_first_for_central_down(n_sites: int) -> bool:
    """Alternating pattern whose central site points down."""
    return central_site(n_sites) % 2 == 1


def sz_curves(
    n_sites: int,
    times: np.ndarray,
    sites: np.ndarray | None = None,
    periodic: bool = False,
    up_first: bool = True,
) -> np.ndarray:
    """<Sz_site(t)> for the XY chain quenched from the alternating state.

    Returns an array of shape (len(times), len(sites)); ``sites=None``
    selects all sites.
    """
    times = np.asarray(times, dtype=float)
    occ = neel_occupations(n_sites, up_first)
    m = hopping_matrix(n_sites, periodic, n_fermions=int(occ.sum()))
    evals, vecs = np.linalg.eigh(m.entries)
    if sites is None:
        sites = np.arange(n_sites)
    sites = np.atleast_1d(np.asarray(sites, dtype=int))
    out = np.empty((times.size, sites.size))
    for k, t in enumerate(times):
        u = (vecs * np.exp(-1j * evals * t)) @ vecs.T.conj()
        # G(t)_ii = sum_j occ_j |U_{j i}|^2
        g_diag = np.einsum("j,ji->i", occ, np.abs(u[:, sites]) ** 2)
        out[k] = g_diag - 0.5
    return out


def central_sz_curve(
    n_sites: int, times: np.ndarray, periodic: bool = False
) -> np.ndarray:
    """Central-site magnetization with the central spin down at t = 0."""
    up = up_first_for_central_down(n_sites)
    return sz_curves(
        n_sites, times, sites=np.array([central_site(n_sites)]),
        periodic=periodic, up_first=up,
    )[:, 0]


def infinite_chain_central_sz(times: np.ndarray) -> np.ndarray:
    """Thermodynamic-limit central magnetization -J_0(2t)/2 for a
    central-down alternating start (Bessel function of the first kind)."""
    from scipy.special import j0

    return -0.5 * j0(2.0 * np.asarray(times, dtype=float))


def staggered_asymptote(times: np.ndarray) -> np.ndarray:
    """Large-t form 0.5 * (pi t)^(-1/2) * cos(2t + CENTER_PHASE) of the
    central-down magnetization (stationary phase of -J_0(2t)/2)."""
    t = np.asarray(times, dtype=float)
    return 0.5 * (np.pi * t) ** -0.5 * np.cos(2.0 * t + CENTER_PHASE)


def first_deviation_time(
    times: np.ndarray, a: np.ndarray, b: np.ndarray, threshold: float = 0.01
) -> float:
    """Earliest time where |a - b| exceeds ``threshold``; +inf if never."""
    times = np.asarray(times, dtype=float)
    over = np.abs(np.asarray(a) - np.asarray(b)) > threshold
    if not np.any(over):
        return float("inf")
    return float(times[int(np.argmax(over))])

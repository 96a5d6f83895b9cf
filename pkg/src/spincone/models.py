"""Spin-1/2 chain Hamiltonians as explicit bond-term lists.

Spin operators are S = sigma/2.  A bond term couples two sites as
``j_xy * (SxSx + SySy) + j_z * SzSz``; in the bit basis the exchange
part contributes ``j_xy / 2`` between states differing exactly on the
two sites, and the Ising part contributes ``+j_z / 4`` (equal bits) or
``-j_z / 4`` (opposite bits) on the diagonal.  A uniform field enters as
``-h_field * sum_i Sz_i`` and a staggered bond modulation as
``dimer_field * sum_i (-1)^i S_i . S_{i+1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .hilbert import SectorBasis, popcount


@dataclass(frozen=True)
class BondTerm:
    """Two-site exchange term between ``site_a`` and a nearest or
    next-nearest neighbour ``site_b``."""

    site_a: int
    site_b: int
    j_xy: float
    j_z: float

    def __post_init__(self):
        if self.site_a < 0:
            raise ValueError("site_a must be nonnegative")
        if self.site_b - self.site_a not in (1, 2):
            raise ValueError("site_b must be site_a + 1 or site_a + 2")

    @property
    def kind(self) -> str:
        return "heisenberg" if self.j_xy == self.j_z else "xxz"


@dataclass(frozen=True)
class LocalHamiltonian:
    """Chain Hamiltonian: bond terms plus optional uniform field and
    staggered (dimerizing) bond modulation."""

    n_sites: int
    terms: tuple[BondTerm, ...]
    h_field: float = 0.0
    dimer_field: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")
        for t in self.terms:
            if t.site_b >= self.n_sites:
                raise ValueError(
                    f"term ({t.site_a},{t.site_b}) outside chain of {self.n_sites} sites"
                )

    def effective_terms(self) -> tuple[BondTerm, ...]:
        """Bond terms including the staggered modulation, which adds
        ``(-1)^i * dimer_field`` isotropic exchange on every bond (i, i+1)."""
        if self.dimer_field == 0.0:
            return self.terms
        extra = tuple(
            BondTerm(i, i + 1, s * self.dimer_field, s * self.dimer_field)
            for i in range(self.n_sites - 1)
            for s in ((1.0 if i % 2 == 0 else -1.0),)
        )
        return self.terms + extra

    def with_fields(self, h_field: float | None = None, dimer_field: float | None = None):
        """Copy with replaced field values."""
        kw = {}
        if h_field is not None:
            kw["h_field"] = h_field
        if dimer_field is not None:
            kw["dimer_field"] = dimer_field
        return replace(self, **kw)


def build_xxz(n_sites: int, delta: float, j_xy: float = 1.0) -> LocalHamiltonian:
    """Open XXZ chain: sum_i j_xy (SxSx + SySy) + j_xy*delta SzSz."""
    terms = tuple(
        BondTerm(i, i + 1, j_xy, j_xy * delta) for i in range(n_sites - 1)
    )
    return LocalHamiltonian(n_sites, terms)


def build_heisenberg(n_sites: int, j: float = 1.0) -> LocalHamiltonian:
    return build_xxz(n_sites, 1.0, j)


def build_faf(
    n_sites: int,
    j: float = 1.0,
    j_f: float = -2.0,
    j_a: float = 2.0,
    p: float = 0.0,
    rng: np.random.Generator | None = None,
) -> LocalHamiltonian:
    """Dimerized chain with random ferro/antiferro inter-dimer bonds.

    Bonds (2k, 2k+1) carry the fixed isotropic coupling ``j``; bonds
    (2k+1, 2k+2) carry ``j_f`` with probability ``p`` and ``j_a``
    otherwise.  ``rng=None`` is the degenerate draw p=0 (all ``j_a``).
    """
    if n_sites % 2 != 0:
        raise ValueError(f"n_sites must be even, got {n_sites}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if not j_f < 0.0 < j_a:
        raise ValueError(f"need j_f < 0 < j_a, got j_f={j_f}, j_a={j_a}")
    terms = []
    for i in range(n_sites - 1):
        if i % 2 == 0:
            ji = j
        elif rng is None:
            ji = j_a
        else:
            ji = j_f if rng.random() < p else j_a
        terms.append(BondTerm(i, i + 1, ji, ji))
    return LocalHamiltonian(n_sites, tuple(terms))


def build_frustrated(
    n_sites: int,
    j_choices: tuple[float, float] = (0.9, 1.1),
    rng: np.random.Generator | None = None,
) -> LocalHamiltonian:
    """Frustrated chain with nearest bonds J_i and next-nearest bonds
    K_i = J_i * J_{i+1} / 2.

    ``rng=None`` gives the translation-invariant point J=1, K=1/2;
    otherwise each J_i is drawn uniformly from ``j_choices``.
    """
    if n_sites < 3:
        raise ValueError(f"n_sites must be at least 3, got {n_sites}")
    if rng is None:
        j = np.ones(n_sites - 1)
    else:
        j = np.asarray(j_choices, dtype=float)[
            rng.integers(0, len(j_choices), size=n_sites - 1)
        ]
    terms = [BondTerm(i, i + 1, float(j[i]), float(j[i])) for i in range(n_sites - 1)]
    for i in range(n_sites - 2):
        k = float(j[i] * j[i + 1] / 2.0)
        terms.append(BondTerm(i, i + 2, k, k))
    return LocalHamiltonian(n_sites, tuple(terms))


def nn_couplings(h: LocalHamiltonian) -> np.ndarray:
    """Isotropic nearest-neighbour couplings J_i on bonds (i, i+1);
    raises when a nearest bond is missing or anisotropic."""
    out = np.zeros(h.n_sites - 1)
    seen = np.zeros(h.n_sites - 1, dtype=bool)
    for t in h.terms:
        if t.site_b - t.site_a == 1:
            if seen[t.site_a]:
                raise ValueError(f"duplicate bond ({t.site_a},{t.site_b})")
            if t.j_xy != t.j_z:
                raise ValueError("couplings are not isotropic")
            out[t.site_a] = t.j_xy
            seen[t.site_a] = True
    if not np.all(seen):
        raise ValueError("missing nearest-neighbour bond")
    return out


def save_couplings(path, h: LocalHamiltonian) -> None:
    """Write one signed nearest-bond coupling per line."""
    np.savetxt(path, nn_couplings(h), fmt="%.17g")


def load_couplings(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path))


def faf_from_couplings(j: np.ndarray) -> LocalHamiltonian:
    terms = tuple(
        BondTerm(i, i + 1, float(j[i]), float(j[i])) for i in range(len(j))
    )
    return LocalHamiltonian(len(j) + 1, terms)


def frustrated_from_couplings(j: np.ndarray) -> LocalHamiltonian:
    n_sites = len(j) + 1
    terms = [BondTerm(i, i + 1, float(j[i]), float(j[i])) for i in range(len(j))]
    for i in range(n_sites - 2):
        k = float(j[i] * j[i + 1] / 2.0)
        terms.append(BondTerm(i, i + 2, k, k))
    return LocalHamiltonian(n_sites, tuple(terms))


def restrict(
    h: LocalHamiltonian, window: range, keep_boundary_terms: bool = False
) -> LocalHamiltonian:
    """Hamiltonian of a contiguous window, re-based to sites 0..len-1.

    By default only terms fully inside the window are kept; with
    ``keep_boundary_terms`` the window is first widened to cover any
    bond that straddles its edges.
    """
    if window.step != 1 or window.start < 0 or window.stop > h.n_sites:
        raise ValueError("window must be a unit-step range inside the chain")
    lo, hi = window.start, window.stop
    if keep_boundary_terms:
        for t in h.effective_terms():
            if t.site_a < window.start <= t.site_b:
                lo = min(lo, t.site_a)
            if t.site_a < window.stop <= t.site_b:
                hi = max(hi, t.site_b + 1)
    terms = tuple(
        BondTerm(t.site_a - lo, t.site_b - lo, t.j_xy, t.j_z)
        for t in h.terms
        if lo <= t.site_a and t.site_b < hi
    )
    if h.dimer_field != 0.0:
        # the staggered modulation is locked to absolute positions; fold
        # it into explicit terms so re-basing cannot shift its parity
        terms += tuple(
            BondTerm(i - lo, i - lo + 1, s, s)
            for i in range(lo, hi - 1)
            for s in (h.dimer_field * (1.0 if i % 2 == 0 else -1.0),)
        )
    return LocalHamiltonian(hi - lo, terms, h.h_field, 0.0)


def subterms(h: LocalHamiltonian, window: range) -> LocalHamiltonian:
    """Terms fully inside ``window`` with site labels unchanged (same
    chain length); fields are dropped."""
    if window.step != 1 or window.start < 0 or window.stop > h.n_sites:
        raise ValueError("window must be a unit-step range inside the chain")
    terms = tuple(
        t
        for t in h.effective_terms()
        if window.start <= t.site_a and t.site_b < window.stop
    )
    return LocalHamiltonian(h.n_sites, terms)


def assemble_sparse(h: LocalHamiltonian, basis: SectorBasis) -> sp.csr_matrix:
    """Real sparse matrix of the Hamiltonian in the given basis."""
    if basis.n_sites != h.n_sites:
        raise ValueError("basis does not match the chain length")
    states = basis.states
    dim = basis.dim
    diag = np.zeros(dim)
    rows, cols, vals = [], [], []
    for t in h.effective_terms():
        ba = ((states >> np.uint64(t.site_a)) & np.uint64(1)).astype(np.int8)
        bb = ((states >> np.uint64(t.site_b)) & np.uint64(1)).astype(np.int8)
        same = ba == bb
        if t.j_z != 0.0:
            diag += np.where(same, 0.25 * t.j_z, -0.25 * t.j_z)
        if t.j_xy != 0.0:
            src = np.flatnonzero(~same)
            if src.size:
                mask = np.uint64((1 << t.site_a) | (1 << t.site_b))
                flipped = states[src] ^ mask
                dst = basis.index_of(flipped)
                rows.append(src)
                cols.append(dst)
                vals.append(np.full(src.size, 0.5 * t.j_xy))
    if h.h_field != 0.0:
        diag += -h.h_field * (popcount(states) - h.n_sites / 2.0)
    rows.append(np.arange(dim))
    cols.append(np.arange(dim))
    vals.append(diag)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    return mat.tocsr()


def assemble_dense(h: LocalHamiltonian, basis: SectorBasis) -> np.ndarray:
    return assemble_sparse(h, basis).toarray()


def spin_wave_velocity(delta: float) -> float:
    """Low-energy excitation velocity of the XXZ chain at |delta| <= 1:
    v = (pi/2) * sin(theta)/theta with theta = arccos(delta)."""
    if abs(delta) > 1.0:
        raise ValueError("velocity formula requires |delta| <= 1")
    theta = math.acos(delta)
    return float((math.pi / 2.0) * np.sinc(theta / math.pi))

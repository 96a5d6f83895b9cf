"""Bit-encoded Hilbert space for spin-1/2 chains.

A basis state of an ``n``-site chain is an unsigned integer whose bit
``i`` (least significant bit = site 0) is 1 when site ``i`` points up.
``SectorBasis`` enumerates either one magnetization sector (fixed number
of up spins) or the full space, always sorted ascending so membership
and indexing reduce to a binary search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ResourceLimitError, StructureError

MAX_SITES = 40
MAX_STATE_DIM = 1 << 24
MAX_DENSE_DIM = 1 << 13


def popcount(bits):
    """Number of set bits of a python int or a uint64 array."""
    if isinstance(bits, (int, np.integer)):
        return int(bits).bit_count()
    return np.bitwise_count(np.asarray(bits, dtype=np.uint64)).astype(np.int64)


def mask_of(sites) -> int:
    """Bit mask with the given site indices set."""
    mask = 0
    for s in sites:
        mask |= 1 << int(s)
    return mask


def compress_bits(values, mask: int) -> np.ndarray:
    """Extract the bits selected by ``mask`` from each value and pack
    them densely, preserving low-to-high order (a parallel bit extract)."""
    vals = np.asarray(values, dtype=np.uint64)
    out = np.zeros_like(vals)
    dst = 0
    src = 0
    m = mask
    while m:
        if m & 1:
            out |= ((vals >> np.uint64(src)) & np.uint64(1)) << np.uint64(dst)
            dst += 1
        m >>= 1
        src += 1
    return out


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Ordered computational basis of a chain, restricted to a fixed
    number of up spins when ``n_up`` is not None."""

    n_sites: int
    n_up: int | None
    states: np.ndarray  # uint64, strictly ascending

    @property
    def dim(self) -> int:
        return int(self.states.size)

    def index_of(self, bits):
        """Position(s) of basis state(s) ``bits``; raises KeyError when absent."""
        arr = np.asarray(bits, dtype=np.uint64)
        pos = np.searchsorted(self.states, arr)
        pos_clipped = np.minimum(pos, self.dim - 1)
        ok = self.states[pos_clipped] == arr
        if not np.all(ok):
            bad = arr if arr.ndim == 0 else arr[~ok][0]
            raise KeyError(f"state {int(bad):#x} is not in this basis")
        if np.ndim(bits) == 0:
            return int(pos)
        return pos.astype(np.int64)

    def contains(self, bits) -> np.ndarray:
        """Boolean membership mask for an array of candidate states."""
        arr = np.asarray(bits, dtype=np.uint64)
        pos = np.minimum(np.searchsorted(self.states, arr), self.dim - 1)
        return self.states[pos] == arr


def full_basis(n_sites: int) -> SectorBasis:
    """Basis of the unrestricted 2**n space."""
    if n_sites < 0 or n_sites > MAX_SITES:
        raise ValueError(f"n_sites={n_sites} out of range")
    dim = 1 << n_sites
    if dim > MAX_STATE_DIM:
        raise ResourceLimitError(
            f"full space of {n_sites} sites has dimension {dim} > {MAX_STATE_DIM}"
        )
    return SectorBasis(n_sites, None, np.arange(dim, dtype=np.uint64))


def enumerate_sector(n_sites: int, n_up: int) -> SectorBasis:
    """Basis of the fixed-magnetization sector with ``n_up`` up spins,
    enumerated ascending via Gosper's hack."""
    if n_sites < 0 or n_sites > MAX_SITES:
        raise ValueError(f"n_sites={n_sites} out of range")
    if n_up < 0 or n_up > n_sites:
        raise ValueError(f"n_up={n_up} invalid for {n_sites} sites")
    dim = math.comb(n_sites, n_up)
    if dim > MAX_STATE_DIM:
        raise ResourceLimitError(
            f"sector ({n_sites} sites, {n_up} up) has dimension {dim} > {MAX_STATE_DIM}"
        )
    states = np.empty(dim, dtype=np.uint64)
    if n_up == 0:
        states[0] = 0
        return SectorBasis(n_sites, n_up, states)
    v = (1 << n_up) - 1
    limit = 1 << n_sites
    for i in range(dim):
        states[i] = v
        # Gosper's hack: next larger integer with the same popcount.
        c = v & -v
        r = v + c
        v = (((r ^ v) >> 2) // c) | r
    if dim > 1 and v < limit and states[-1] >= limit:
        raise AssertionError("sector enumeration overflow")
    return SectorBasis(n_sites, n_up, states)


def basis_for(n_sites: int, n_up: int | None) -> SectorBasis:
    return full_basis(n_sites) if n_up is None else enumerate_sector(n_sites, n_up)


@dataclass(eq=False)
class StateVector:
    """Amplitudes over a ``SectorBasis`` (complex128, basis order)."""

    basis: SectorBasis
    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=np.complex128)
        if self.amps.shape != (self.basis.dim,):
            raise ValueError("amplitude array does not match basis dimension")

    @property
    def n_sites(self) -> int:
        return self.basis.n_sites

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amps / n)

    def copy(self) -> "StateVector":
        return StateVector(self.basis, self.amps.copy())

    def overlap(self, other: "StateVector") -> complex:
        """<self|other>; both states must share a basis object layout."""
        if self.basis.n_sites != other.basis.n_sites or self.basis.n_up != other.basis.n_up:
            raise ValueError("overlap requires matching bases")
        return complex(np.vdot(self.amps, other.amps))

    def total_sz(self) -> float | None:
        """Total S^z of the sector, or None for the full space."""
        if self.basis.n_up is None:
            return None
        return self.basis.n_up - self.basis.n_sites / 2


def basis_state(basis: SectorBasis, bits: int) -> StateVector:
    """Computational basis state |bits> inside ``basis``."""
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[basis.index_of(bits)] = 1.0
    return StateVector(basis, amps)


def neel_bits(n_sites: int, up_first: bool = True) -> int:
    """Bit pattern of the alternating (Neel) configuration.

    ``up_first`` puts site 0 (and every even site) up; otherwise the odd
    sites are up.
    """
    bits = 0
    start = 0 if up_first else 1
    for i in range(start, n_sites, 2):
        bits |= 1 << i
    return bits


def neel_state(n_sites: int, up_first: bool = True) -> StateVector:
    """Neel configuration as a state in its magnetization sector."""
    bits = neel_bits(n_sites, up_first)
    return basis_state(enumerate_sector(n_sites, popcount(bits)), bits)


def product_state(*factors: StateVector) -> StateVector:
    """Tensor product of chain segments, ordered low site to high site.

    Factor ``k`` occupies the sites directly above those of factor
    ``k-1``.  If every factor lives in a fixed sector the product does
    too; otherwise the result uses the full basis.
    """
    if not factors:
        raise ValueError("need at least one factor")
    n_total = sum(f.n_sites for f in factors)
    sectored = all(f.basis.n_up is not None for f in factors)
    n_up = sum(f.basis.n_up for f in factors) if sectored else None
    basis = basis_for(n_total, n_up)

    bits = np.zeros(1, dtype=np.uint64)
    amps = np.ones(1, dtype=np.complex128)
    shift = 0
    for f in factors:
        keep = np.abs(f.amps) > 0.0
        fb = f.basis.states[keep] << np.uint64(shift)
        fa = f.amps[keep]
        bits = (bits[:, None] | fb[None, :]).ravel()
        amps = (amps[:, None] * fa[None, :]).ravel()
        shift += f.n_sites
    out = np.zeros(basis.dim, dtype=np.complex128)
    out[basis.index_of(bits)] = amps
    return StateVector(basis, out)


def expectation_site(psi: StateVector, site: int, op2: np.ndarray) -> complex:
    """<psi| O_site |psi> for a single-site operator given as a 2x2
    matrix in the (down, up) basis, acting on ``site`` of the chain."""
    if not 0 <= site < psi.n_sites:
        raise ValueError(f"site {site} outside chain of {psi.n_sites} sites")
    op2 = np.asarray(op2, dtype=np.complex128)
    if op2.shape != (2, 2):
        raise ValueError("single-site operator must be 2x2")
    states = psi.basis.states
    bit = ((states >> np.uint64(site)) & np.uint64(1)).astype(np.int64)
    p = np.abs(psi.amps) ** 2
    val = complex(np.sum(p * np.where(bit == 1, op2[1, 1], op2[0, 0])))
    if op2[0, 1] != 0.0 or op2[1, 0] != 0.0:
        flipped = states ^ np.uint64(1 << site)
        ok = psi.basis.contains(flipped)
        if np.any(ok):
            pos = psi.basis.index_of(flipped[ok])
            # <psi|O|psi> off-diagonal part: conj(amp[flip]) * O[b_flip, b] * amp
            b = bit[ok]
            coef = np.where(b == 1, op2[0, 1], op2[1, 0])
            val += complex(np.sum(np.conj(psi.amps[pos]) * coef * psi.amps[ok]))
    return val


@dataclass(frozen=True, eq=False)
class Branch:
    """One term of a conditional decomposition: outer configuration
    ``outer_bits`` (packed low-to-high in site order), nonnegative weight
    amplitude ``amp``, and the normalized state of the remaining sites."""

    outer_bits: int
    amp: float
    inner: StateVector


def conditional_decompose(
    psi: StateVector, outer_sites, drop_tol: float = 1e-14
) -> list[Branch]:
    """Decompose |psi> = sum_a amp_a |a>_outer (x) |inner_a>.

    ``outer_sites`` selects a subset of chain sites; each branch fixes
    their configuration to ``a`` and carries the normalized conditional
    state of the complementary sites (repacked densely, preserving site
    order).  Branch amplitudes are the nonnegative norms of the slices,
    so sum(amp**2) = 1 for a normalized input.  Branches with weight
    below ``drop_tol`` are dropped; the list is ordered by ``outer_bits``.
    """
    n = psi.n_sites
    outer_mask = mask_of(outer_sites)
    if outer_mask >= (1 << n):
        raise ValueError("outer sites outside the chain")
    inner_mask = ((1 << n) - 1) ^ outer_mask
    n_outer = popcount(outer_mask)
    n_inner = n - n_outer
    if n_outer == 0 or n_inner == 0:
        raise ValueError("decomposition needs a proper bipartition")

    states = psi.basis.states
    keep = np.abs(psi.amps) > 0.0
    states = states[keep]
    amps = psi.amps[keep]
    outer_vals = compress_bits(states, outer_mask)
    inner_vals = compress_bits(states, inner_mask)

    order = np.lexsort((inner_vals, outer_vals))
    outer_vals = outer_vals[order]
    inner_vals = inner_vals[order]
    amps = amps[order]

    branches: list[Branch] = []
    sectored = psi.basis.n_up is not None
    starts = np.flatnonzero(np.r_[True, outer_vals[1:] != outer_vals[:-1]])
    bounds = np.r_[starts, outer_vals.size]
    for k in range(starts.size):
        lo, hi = bounds[k], bounds[k + 1]
        a_bits = int(outer_vals[lo])
        slice_amps = amps[lo:hi]
        weight = float(np.linalg.norm(slice_amps))
        if weight * weight < drop_tol:
            continue
        inner_up = psi.basis.n_up - popcount(a_bits) if sectored else None
        inner_basis = basis_for(n_inner, inner_up)
        inner_amps = np.zeros(inner_basis.dim, dtype=np.complex128)
        inner_amps[inner_basis.index_of(inner_vals[lo:hi])] = slice_amps / weight
        branches.append(Branch(a_bits, weight, StateVector(inner_basis, inner_amps)))
    return branches


def _split_two(psi: StateVector, low_sites: range, tol: float):
    """Split |psi> = |low> (x) |high> across a contiguous cut; raises
    StructureError when the cut rank exceeds one within ``tol``."""
    branches = conditional_decompose(psi, low_sites, drop_tol=tol * tol)
    pivot = max(branches, key=lambda b: b.amp)
    low_n_up = (
        popcount(pivot.outer_bits) if psi.basis.n_up is not None else None
    )
    low_basis = basis_for(len(low_sites), low_n_up)
    low_amps = np.zeros(low_basis.dim, dtype=np.complex128)
    for b in branches:
        if psi.basis.n_up is not None and popcount(b.outer_bits) != low_n_up:
            raise StructureError(
                "cut has rank > 1: branches mix magnetization of the low block"
            )
        ov = complex(np.vdot(pivot.inner.amps, b.inner.amps))
        if abs(abs(ov) - 1.0) > tol:
            raise StructureError(
                f"cut has rank > 1 (branch overlap modulus {abs(ov):.3e})"
            )
        low_amps[low_basis.index_of(b.outer_bits)] = b.amp * ov
    low = StateVector(low_basis, low_amps)
    return low, pivot.inner


def factorize_split(
    psi: StateVector, blocks: tuple[range, range, range], tol: float = 1e-10
) -> tuple[StateVector, StateVector, StateVector]:
    """Factor a state into three contiguous blocks |A> (x) |B> (x) |C>.

    ``blocks`` must partition ``range(n_sites)`` in order.  Raises
    StructureError when either cut carries rank > 1 beyond ``tol``.
    """
    a, b, c = blocks
    if (a.start, a.stop) != (0, b.start) or b.stop != c.start or c.stop != psi.n_sites:
        raise ValueError("blocks must partition the chain contiguously in order")
    if min(len(a), len(b), len(c)) == 0:
        raise ValueError("all three blocks must be nonempty")
    psi = psi.normalized()
    low, rest = _split_two(psi, a, tol)
    mid, high = _split_two(rest, range(0, len(b)), tol)
    recon = product_state(low, mid, high)
    err = float(np.linalg.norm(recon.amps - psi.amps))
    if err > 10 * tol:
        raise StructureError(f"residual after factorization {err:.3e} exceeds tolerance")
    return low, mid, high

"""Tests for the bit-encoded Hilbert space layer."""

from __future__ import annotations

import math

import numpy as np
import pytest

from spincone.errors import ResourceLimitError, StructureError
from spincone.hilbert import (
    Branch,
    SectorBasis,
    StateVector,
    basis_for,
    basis_state,
    compress_bits,
    conditional_decompose,
    enumerate_sector,
    expectation_site,
    factorize_split,
    full_basis,
    mask_of,
    neel_bits,
    neel_state,
    popcount,
    product_state,
)

SZ = np.diag([-0.5, 0.5])
SX = np.array([[0.0, 0.5], [0.5, 0.0]])


def random_state(basis, rng):
    amps = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    return StateVector(basis, amps / np.linalg.norm(amps))


def test_popcount_scalar_and_array():
    assert popcount(0) == 0
    assert popcount(0b1011) == 3
    arr = np.array([0, 1, 3, 255], dtype=np.uint64)
    assert popcount(arr).tolist() == [0, 1, 2, 8]


def test_mask_of():
    assert mask_of([0, 2, 5]) == 0b100101
    assert mask_of(range(3)) == 0b111


def test_compress_bits_known_values():
    vals = np.array([0b101101], dtype=np.uint64)
    # extract bits 0,2,3 -> packed 0b111; bits 1,4 -> 0b00; bits 3,5 -> 0b11
    assert compress_bits(vals, 0b001101)[0] == 0b111
    assert compress_bits(vals, 0b010010)[0] == 0b00
    assert compress_bits(vals, 0b101000)[0] == 0b11


def test_compress_bits_random_against_python():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(1, 20))
        mask = int(rng.integers(0, 1 << n))
        v = int(rng.integers(0, 1 << n))
        got = int(compress_bits(np.array([v], dtype=np.uint64), mask)[0])
        want = 0
        d = 0
        for s in range(n):
            if (mask >> s) & 1:
                want |= ((v >> s) & 1) << d
                d += 1
        assert got == want


def test_enumerate_sector_counts_and_order():
    for n in range(1, 9):
        for k in range(n + 1):
            b = enumerate_sector(n, k)
            assert b.dim == math.comb(n, k)
            assert np.all(np.diff(b.states.astype(np.int64)) > 0)
            assert np.all(popcount(b.states) == k)


def test_enumerate_sector_edges():
    assert enumerate_sector(5, 0).states.tolist() == [0]
    assert enumerate_sector(5, 5).states.tolist() == [0b11111]
    with pytest.raises(ValueError):
        enumerate_sector(4, 5)
    with pytest.raises(ValueError):
        enumerate_sector(4, -1)


def test_large_sector_resource_guard():
    with pytest.raises(ResourceLimitError):
        enumerate_sector(40, 20)
    with pytest.raises(ResourceLimitError):
        full_basis(25)


def test_index_of_roundtrip_and_missing():
    b = enumerate_sector(8, 3)
    idx = b.index_of(b.states)
    assert np.array_equal(idx, np.arange(b.dim))
    assert b.index_of(int(b.states[5])) == 5
    with pytest.raises(KeyError):
        b.index_of(0b11110000)  # four bits: wrong sector


def test_full_basis():
    b = full_basis(3)
    assert b.dim == 8
    assert b.n_up is None
    assert b.index_of(5) == 5


def test_neel_bits_patterns():
    assert neel_bits(4, up_first=True) == 0b0101
    assert neel_bits(4, up_first=False) == 0b1010
    assert neel_bits(5, up_first=True) == 0b10101
    assert neel_bits(5, up_first=False) == 0b01010
    # long chain: sector bookkeeping without allocating the basis
    bits = neel_bits(37, up_first=True)
    assert popcount(bits) == 19
    assert popcount(neel_bits(37, up_first=False)) == 18


def test_neel_state_is_basis_state():
    psi = neel_state(6, up_first=False)
    assert psi.basis.n_up == 3
    assert psi.norm() == pytest.approx(1.0)
    assert abs(psi.amps[psi.basis.index_of(0b101010)]) == pytest.approx(1.0)


def test_state_vector_norm_total_sz():
    psi = neel_state(5, up_first=True)
    assert psi.total_sz() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        StateVector(psi.basis, np.zeros(3))


def test_product_state_of_basis_states():
    a = basis_state(enumerate_sector(2, 1), 0b01)
    b = basis_state(enumerate_sector(3, 2), 0b110)
    p = product_state(a, b)
    assert p.n_sites == 5
    assert p.basis.n_up == 3
    assert abs(p.amps[p.basis.index_of(0b01 | (0b110 << 2))]) == pytest.approx(1.0)


def test_product_state_superpositions_match_kron():
    rng = np.random.default_rng(3)
    a = random_state(full_basis(2), rng)
    b = random_state(full_basis(3), rng)
    p = product_state(a, b)
    # full-basis state index = bits; site order means the HIGH factor is b
    # kron convention: index = i_b * 4 + i_a  ->  amps = kron(b, a) elementwise
    want = np.kron(b.amps, a.amps)
    assert np.allclose(p.amps, want, atol=1e-14)


def test_expectation_site_diagonal_and_flip():
    psi = neel_state(4, up_first=True)  # sites 0,2 up
    assert expectation_site(psi, 0, SZ) == pytest.approx(0.5)
    assert expectation_site(psi, 1, SZ) == pytest.approx(-0.5)
    # S^x has no diagonal in a single sector basis state
    assert expectation_site(psi, 0, SX) == pytest.approx(0.0)
    # |+> state on one site: <S^x> = 1/2
    plus = StateVector(full_basis(1), np.array([1, 1]) / np.sqrt(2))
    assert expectation_site(plus, 0, SX) == pytest.approx(0.5)


def test_expectation_site_full_basis_random_vs_dense():
    rng = np.random.default_rng(11)
    n = 5
    psi = random_state(full_basis(n), rng)
    for site in range(n):
        op = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        op = op + op.conj().T
        dense = np.array([[1.0]])
        for s in range(n):
            dense = np.kron(op if s == site else np.eye(2), dense)
        want = np.vdot(psi.amps, dense @ psi.amps)
        got = expectation_site(psi, site, op)
        assert got == pytest.approx(want, abs=1e-12)


def test_conditional_decompose_reconstructs():
    rng = np.random.default_rng(5)
    for n_up in (2, 3):
        psi = random_state(enumerate_sector(6, n_up), rng)
        branches = conditional_decompose(psi, range(0, 3))
        assert abs(sum(b.amp**2 for b in branches) - 1.0) < 1e-12
        outer_bits = [b.outer_bits for b in branches]
        assert outer_bits == sorted(outer_bits)
        recon = np.zeros_like(psi.amps)
        for b in branches:
            outer_n_up = popcount(b.outer_bits)
            outer = basis_state(enumerate_sector(3, outer_n_up), b.outer_bits)
            term = product_state(outer, b.inner)
            recon += b.amp * term.amps
        assert np.allclose(recon, psi.amps, atol=1e-12)


def test_conditional_decompose_high_block_outer():
    rng = np.random.default_rng(9)
    psi = random_state(enumerate_sector(6, 3), rng)
    branches = conditional_decompose(psi, range(3, 6))
    recon = np.zeros_like(psi.amps)
    for b in branches:
        outer = basis_state(enumerate_sector(3, popcount(b.outer_bits)), b.outer_bits)
        term = product_state(b.inner, outer)
        recon += b.amp * term.amps
    assert np.allclose(recon, psi.amps, atol=1e-12)


def test_conditional_decompose_product_input_single_inner():
    rng = np.random.default_rng(13)
    a = random_state(enumerate_sector(3, 1), rng)
    b = random_state(enumerate_sector(3, 2), rng)
    branches = conditional_decompose(product_state(a, b), range(0, 3))
    # all branches share the same (parallel) inner state
    pivot = max(branches, key=lambda br: br.amp)
    for br in branches:
        ov = abs(np.vdot(pivot.inner.amps, br.inner.amps))
        assert ov == pytest.approx(1.0, abs=1e-12)


def test_factorize_split_product():
    rng = np.random.default_rng(17)
    a = random_state(enumerate_sector(2, 1), rng)
    b = random_state(enumerate_sector(3, 1), rng)
    c = random_state(enumerate_sector(2, 2), rng)
    psi = product_state(a, b, c)
    fa, fb, fc = factorize_split(psi, (range(0, 2), range(2, 5), range(5, 7)))
    recon = product_state(fa, fb, fc)
    assert np.allclose(recon.amps, psi.amps, atol=1e-10)
    # factors are states of the right block sizes
    assert (fa.n_sites, fb.n_sites, fc.n_sites) == (2, 3, 2)


def test_factorize_split_rejects_entangled():
    # W-like state on 4 sites is entangled across every cut
    basis = enumerate_sector(4, 1)
    amps = np.ones(basis.dim) / np.sqrt(basis.dim)
    psi = StateVector(basis, amps)
    with pytest.raises(StructureError):
        factorize_split(psi, (range(0, 1), range(1, 3), range(3, 4)))


def test_factorize_split_neel():
    psi = neel_state(9, up_first=False)
    fa, fb, fc = factorize_split(psi, (range(0, 4), range(4, 5), range(5, 9)))
    assert abs(fa.amps[fa.basis.index_of(0b1010)]) == pytest.approx(1.0)
    assert fb.basis.n_up == 0  # site 4 (even) is down when up_first=False
    recon = product_state(fa, fb, fc)
    assert np.allclose(recon.amps, psi.amps, atol=1e-12)


def test_factorize_split_validates_blocks():
    psi = neel_state(6)
    with pytest.raises(ValueError):
        factorize_split(psi, (range(0, 2), range(3, 4), range(4, 6)))

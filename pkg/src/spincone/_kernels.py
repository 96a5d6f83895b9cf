"""Compiled kernels for the hot inner loops of time evolution.

All kernels operate on the raw CSR arrays of a real sparse Hamiltonian
acting on complex state vectors, so a whole propagation substep runs
without returning to the interpreter.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def csr_matvec(indptr, indices, data, x, out):
    """out = A @ x for a CSR matrix with real entries."""
    n = indptr.size - 1
    for i in range(n):
        acc = 0.0 + 0.0j
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc


@numba.njit(cache=True, nogil=True)
def _norm(x):
    acc = 0.0
    for i in range(x.size):
        acc += x[i].real * x[i].real + x[i].imag * x[i].imag
    return np.sqrt(acc)


@numba.njit(cache=True, nogil=True)
def taylor_substep(indptr, indices, data, psi, dt, max_order, tail_tol):
    """psi <- exp(-1j * H * dt) @ psi by a truncated power series.

    Returns (tail, n_terms): the norm of the last added term relative to
    the input norm, and the series order actually used.  The caller
    decides whether ``tail`` is acceptable.
    """
    n = psi.size
    term = psi.copy()
    buf = np.empty_like(psi)
    in_norm = _norm(psi)
    if in_norm == 0.0:
        return 0.0, 0
    tail = 1.0
    k_used = 0
    for k in range(1, max_order + 1):
        csr_matvec(indptr, indices, data, term, buf)
        scale = dt / k
        for i in range(n):
            # term_k = (-1j * dt / k) * H @ term_{k-1}
            v = buf[i] * scale
            t = complex(v.imag, -v.real)
            term[i] = t
            psi[i] += t
        k_used = k
        tail = _norm(term) / in_norm
        if tail < tail_tol:
            break
    return tail, k_used


@numba.njit(cache=True, nogil=True)
def lanczos_basis(indptr, indices, data, v0, m):
    """Lanczos tridiagonalization of a real-symmetric CSR matrix.

    Returns (V, alphas, betas, m_eff): orthonormal basis rows V[:m_eff],
    diagonal/offdiagonal coefficients, and the effective dimension after
    a possible benign breakdown (residual below 1e-14).
    """
    n = v0.size
    V = np.zeros((m, n), dtype=np.complex128)
    alphas = np.zeros(m)
    betas = np.zeros(m)
    nrm = _norm(v0)
    for i in range(n):
        V[0, i] = v0[i] / nrm
    w = np.empty(n, dtype=np.complex128)
    m_eff = m
    for j in range(m):
        csr_matvec(indptr, indices, data, V[j], w)
        if j > 0:
            for i in range(n):
                w[i] -= betas[j - 1] * V[j - 1, i]
        acc = 0.0
        for i in range(n):
            # alpha_j = Re <v_j | w>  (real-symmetric H)
            acc += (V[j, i].conjugate() * w[i]).real
        alphas[j] = acc
        for i in range(n):
            w[i] -= acc * V[j, i]
        # full reorthogonalization keeps the basis clean at these sizes
        for p in range(j + 1):
            ov = 0.0 + 0.0j
            for i in range(n):
                ov += V[p, i].conjugate() * w[i]
            for i in range(n):
                w[i] -= ov * V[p, i]
        beta = _norm(w)
        if j + 1 < m:
            if beta < 1e-14:
                m_eff = j + 1
                break
            betas[j] = beta
            for i in range(n):
                V[j + 1, i] = w[i] / beta
    return V, alphas, betas, m_eff

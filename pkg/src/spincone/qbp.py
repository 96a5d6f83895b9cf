"""Sliding-window thermal-state sweeps (quantum belief propagation).

The partition function of a short-ranged chain is accumulated by sliding
an ``l0``-site window along the chain: at each move the leftmost site is
traced out, a fresh site enters in the maximally mixed state, and a
transfer operator ``O`` repairs the Gibbs weight for the terms that the
move brings in.  With ``O = exp(-beta*H_full/2) exp(+beta*(H_full-A)/2)``
(``H_full`` the current window Hamiltonian, ``A`` the newly added strip)
the update ``rho -> O (tr_first rho ox 1) O^dag`` is exact whenever all
terms commute, and exact for any input that is the Gibbs state of
``H_full - A``; for generic chains it is accurate down to inverse
temperatures growing with ``l0``.

Window bookkeeping: every window Hamiltonian carries its trailing
nearest-neighbour and next-nearest-neighbour terms at half weight; the
strip ``A`` restores the previous window's trailing halves to full
weight and adds the new trailing halves plus the new site's field.  The
halves telescope so that each chain term is counted exactly once, with a
final tail strip completing the last window.  Site ``i`` of a window is
bit ``i``; the traced site is the low bit and the entering site the high
bit.

Observables are per-site second differences of ``ln Z``: the uniform
susceptibility per site is ``chi = (1/N) beta^-1 d^2 ln Z / dh^2`` for a
Zeeman term ``-h * sum_i Sz_i``, the specific heat per site is
``C = (1/N) beta^2 d^2 ln Z / d beta^2``, and the reported dimer response
is ``chi_dimer/beta per site = (1/N) beta^-2 d^2 ln Z / d lambda^2`` for a
staggered modulation ``lambda * sum_i (-1)^i S_i . S_{i+1}``.

Sweeps are sequential along the chain; parallelism belongs across
(beta, field offset, realization) jobs sharing one read-only operator
table.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import PositivityError, PrecisionLossWarning, ResourceLimitError
from .hilbert import full_basis
from .models import BondTerm, LocalHamiltonian, assemble_dense, restrict

MAX_DENSE_SITES = 13  # dense diagonalization cap (dimension 2**13)

_SEED = "seed"
_FIRST = "first-move"
_BULK = "bulk-move"
_TAIL = "tail"


@dataclass(frozen=True)
class WindowDensityMatrix:
    """Normalized window state plus the accumulated log of every stripped
    normalization (the seed window's log-partition included)."""

    l0: int
    rho: np.ndarray
    log_weight: float

    def __post_init__(self):
        dim = 1 << self.l0
        if self.rho.shape != (dim, dim):
            raise ValueError("density matrix does not match the window length")


@dataclass(frozen=True)
class TransferOperator:
    """Window transfer matrix ``O`` for one bond configuration at one
    inverse temperature."""

    signature: tuple
    o: np.ndarray
    beta: float


def _signature(win: LocalHamiltonian) -> tuple:
    return (
        round(win.h_field, 12),
        tuple(
            (t.site_a, t.site_b, round(t.j_xy, 12), round(t.j_z, 12))
            for t in win.terms
        ),
    )


def _is_trailing(t: BondTerm, l0: int) -> bool:
    span = t.site_b - t.site_a
    return (span == 1 and t.site_a == l0 - 2) or (span == 2 and t.site_a == l0 - 3)


def _is_subtrailing(t: BondTerm, l0: int) -> bool:
    span = t.site_b - t.site_a
    return (span == 1 and t.site_a == l0 - 3) or (span == 2 and t.site_a == l0 - 4)


def _halve(t: BondTerm) -> BondTerm:
    return BondTerm(t.site_a, t.site_b, 0.5 * t.j_xy, 0.5 * t.j_z)


def _sz_diagonal(l0: int, site: int) -> np.ndarray:
    states = np.arange(1 << l0)
    return np.where((states >> site) & 1, 0.5, -0.5)


def _strip_matrix(win: LocalHamiltonian, klass: str) -> np.ndarray:
    """Dense matrix of the strip ``A`` on an un-halved window ``win``."""
    l0 = win.n_sites
    terms = [_halve(t) for t in win.terms if _is_trailing(t, l0)]
    if klass == _BULK:
        terms += [_halve(t) for t in win.terms if _is_subtrailing(t, l0)]
    a = assemble_dense(LocalHamiltonian(l0, tuple(terms)), full_basis(l0))
    if klass != _TAIL and win.h_field != 0.0:
        a += np.diag(-win.h_field * _sz_diagonal(l0, l0 - 1))
    return a


def _o_from_eigs(eig_full, eig_prev, beta: float) -> np.ndarray:
    w_full, v_full = eig_full
    w_prev, v_prev = eig_prev
    if beta * max(np.abs(w_full).max(), np.abs(w_prev).max()) / 2.0 > 700.0:
        raise OverflowError("exp(beta*H/2) out of floating-point range")
    left = (v_full * np.exp(-0.5 * beta * w_full)) @ v_full.T
    right = (v_prev * np.exp(0.5 * beta * w_prev)) @ v_prev.T
    return left @ right


def build_transfer_op(
    window_h: LocalHamiltonian, a: np.ndarray, beta: float
) -> TransferOperator:
    """Transfer operator ``O = exp(-beta*H/2) exp(+beta*(H-A)/2)`` from a
    window Hamiltonian and a dense strip matrix ``A``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    dim = 1 << window_h.n_sites
    if a.shape != (dim, dim):
        raise ValueError("strip matrix does not match the window dimension")
    sig = _signature(window_h)
    if beta == 0.0 or not np.any(a):
        return TransferOperator(sig, np.eye(dim), beta)
    h_full = assemble_dense(window_h, full_basis(window_h.n_sites))
    o = _o_from_eigs(
        np.linalg.eigh(h_full), np.linalg.eigh(h_full - a), beta
    )
    return TransferOperator(sig, o, beta)


class TransferTable:
    """Reusable cache: window eigendecompositions are stored once per bond
    configuration (independent of ``beta``), transfer matrices once per
    (configuration, beta)."""

    def __init__(self):
        self._eigs: dict = {}
        self._ops: dict = {}

    def _eig(self, key, build):
        if key not in self._eigs:
            self._eigs[key] = build()
        return self._eigs[key]

    def seed_eig(self, win: LocalHamiltonian):
        key = (_SEED, _signature(win))
        return self._eig(
            key, lambda: np.linalg.eigh(assemble_dense(win, full_basis(win.n_sites)))
        )

    def op(self, klass: str, model: LocalHamiltonian, k: int, l0: int, beta: float):
        raw = restrict(model, range(k, k + l0))
        key = (klass, _signature(raw))
        if (key, beta) not in self._ops:

            def build():
                # A move targets the window with trailing halves (the other
                # halves arrive with later moves); the tail completes the
                # final window, so its target carries full weights.
                if klass == _TAIL:
                    target = raw
                else:
                    target = LocalHamiltonian(
                        l0,
                        tuple(
                            _halve(t) if _is_trailing(t, l0) else t
                            for t in raw.terms
                        ),
                        raw.h_field,
                    )
                h_full = assemble_dense(target, full_basis(l0))
                return (
                    np.linalg.eigh(h_full),
                    np.linalg.eigh(h_full - _strip_matrix(raw, klass)),
                )

            pair = self._eig(key, build)
            if beta == 0.0:
                self._ops[key, beta] = np.eye(1 << l0)
            else:
                self._ops[key, beta] = _o_from_eigs(pair[0], pair[1], beta)
        return key, self._ops[key, beta]


def _validate_window(model: LocalHamiltonian, l0: int) -> None:
    if l0 < 3 or l0 % 2 == 0:
        raise ValueError("window length must be odd and at least 3")
    if l0 > MAX_DENSE_SITES:
        raise ResourceLimitError(
            f"window of {l0} sites exceeds the dense diagonalization cap"
        )
    if any(t.site_b - t.site_a == 2 for t in model.effective_terms()) and l0 < 5:
        raise ValueError("next-nearest-neighbour terms require a window of >= 5 sites")


def _dense_ln_z(model: LocalHamiltonian, beta: float) -> tuple[float, np.ndarray]:
    if model.n_sites > MAX_DENSE_SITES:
        raise ResourceLimitError(
            f"dense thermal state of {model.n_sites} sites exceeds the cap"
        )
    w, v = np.linalg.eigh(assemble_dense(model, full_basis(model.n_sites)))
    ln_z = float(logsumexp(-beta * w))
    rho = (v * np.exp(-beta * w - ln_z)) @ v.T
    return ln_z, rho


def sweep(
    model: LocalHamiltonian,
    l0: int,
    beta: float,
    *,
    ops: dict[tuple, TransferOperator] | None = None,
    table: TransferTable | None = None,
    rho0: WindowDensityMatrix | None = None,
    return_state: bool = False,
    check_positivity: bool = True,
):
    """Log partition function ``ln Z`` of the chain at inverse temperature
    ``beta`` from one left-to-right window sweep.

    ``ops`` (as produced by :func:`precompute_ops`) is consulted first for
    each window configuration; anything missing is built on demand through
    ``table``.  With ``return_state`` the final normalized window state is
    returned alongside ``ln Z``.  A window covering the whole chain falls
    back to dense diagonalization (exact).
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    n = model.n_sites
    if l0 >= n:
        if rho0 is not None:
            raise ValueError("rho0 only applies to sliding-window sweeps")
        ln_z, rho = _dense_ln_z(model, beta)
        if return_state:
            return ln_z, WindowDensityMatrix(n, rho, ln_z)
        return ln_z
    _validate_window(model, l0)
    table = table if table is not None else TransferTable()
    dim = 1 << l0
    half = dim >> 1

    if rho0 is None:
        seed = restrict(model, range(0, l0))
        w, v = table.seed_eig(seed)
        ln_z = float(logsumexp(-beta * w))
        rho = (v * np.exp(-beta * w - ln_z)) @ v.T
    else:
        if rho0.l0 != l0:
            raise ValueError("rho0 does not match the window length")
        rho = np.array(rho0.rho, dtype=float)
        ln_z = rho0.log_weight

    shift = 1e-10 * np.eye(dim)
    for k in range(1, n - l0 + 1):
        klass = _FIRST if k == 1 else _BULK
        key, o = table.op(klass, model, k, l0, beta)
        if ops is not None and key in ops:
            o = ops[key].o
        reduced = np.einsum("ibjb->ij", rho.reshape(half, 2, half, 2))
        grown = np.kron(np.eye(2), reduced)
        rho = o @ grown @ o.T
        rho = 0.5 * (rho + rho.T)
        tau = float(np.trace(rho))
        if not np.isfinite(tau) or tau <= 0.0:
            raise PositivityError(
                f"window normalization lost absorbing site {k + l0 - 1}",
                site=k + l0 - 1,
            )
        rho /= tau
        ln_z += math.log(tau)
        if check_positivity:
            try:
                np.linalg.cholesky(rho + shift)
            except np.linalg.LinAlgError:
                eigs = np.linalg.eigvalsh(rho)
                if eigs[0] < -1e-10 * np.abs(eigs).max():
                    raise PositivityError(
                        f"window state lost positivity absorbing site "
                        f"{k + l0 - 1} (window too short for this beta)",
                        site=k + l0 - 1,
                    ) from None

    key, o = table.op(_TAIL, model, n - l0, l0, beta)
    if ops is not None and key in ops:
        o = ops[key].o
    rho = o @ rho @ o.T
    rho = 0.5 * (rho + rho.T)
    tau = float(np.trace(rho))
    if not np.isfinite(tau) or tau <= 0.0:
        raise PositivityError(
            f"window normalization lost at the tail (site {n - 1})", site=n - 1
        )
    rho /= tau
    ln_z += math.log(tau)
    if return_state:
        return ln_z, WindowDensityMatrix(l0, rho, ln_z)
    return ln_z


def precompute_ops(
    model: LocalHamiltonian,
    l0: int,
    beta: float,
    h_offsets: tuple[float, ...] = (0.0,),
    dimer_offsets: tuple[float, ...] = (0.0,),
) -> dict[tuple, TransferOperator]:
    """Every transfer operator one sweep of ``model`` can request, at each
    requested field offset, keyed by (move class, window signature)."""
    if model.n_sites <= l0:
        return {}
    _validate_window(model, l0)
    table = TransferTable()
    ops: dict[tuple, TransferOperator] = {}
    for dh in h_offsets:
        for dl in dimer_offsets:
            m = model.with_fields(
                h_field=model.h_field + dh, dimer_field=model.dimer_field + dl
            )
            moves = [
                (_FIRST if k == 1 else _BULK, k) for k in range(1, m.n_sites - l0 + 1)
            ]
            moves.append((_TAIL, m.n_sites - l0))
            for klass, k in moves:
                key, o = table.op(klass, m, k, l0, beta)
                if key not in ops:
                    ops[key] = TransferOperator(key[1], o, beta)
    return ops


def _second_difference(values: tuple[float, float, float], step: float) -> float:
    above, centre, below = values
    d2 = above - 2.0 * centre + below
    if abs(d2) < 1e3 * np.finfo(float).eps * abs(centre):
        warnings.warn(
            "second difference of ln Z is below the floating-point "
            "cancellation floor; decrease the step or trust fewer digits",
            PrecisionLossWarning,
            stacklevel=3,
        )
    return d2 / step**2


def uniform_susceptibility(
    model: LocalHamiltonian,
    l0: int,
    beta: float,
    h_step: float = 1e-3,
    *,
    table: TransferTable | None = None,
) -> float:
    """Per-site uniform susceptibility ``(1/N) beta^-1 d^2 ln Z / dh^2``
    for a Zeeman term ``-h * sum_i Sz_i``, by central differences."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    table = table if table is not None else TransferTable()
    base = model.h_field
    lz = tuple(
        sweep(model.with_fields(h_field=base + s * h_step), l0, beta, table=table)
        for s in (1.0, 0.0, -1.0)
    )
    return _second_difference(lz, h_step) / (model.n_sites * beta)


def specific_heat(
    model: LocalHamiltonian,
    l0: int,
    beta: float,
    beta_step: float = 0.25,
    *,
    table: TransferTable | None = None,
) -> float:
    """Per-site specific heat ``(1/N) beta^2 d^2 ln Z / d beta^2`` by
    central differences on the beta grid."""
    if beta < beta_step:
        raise ValueError("beta must be at least beta_step")
    table = table if table is not None else TransferTable()
    lz = tuple(
        sweep(model, l0, beta + s * beta_step, table=table) for s in (1.0, 0.0, -1.0)
    )
    return beta**2 * _second_difference(lz, beta_step) / model.n_sites


def dimer_susceptibility(
    model: LocalHamiltonian,
    l0: int,
    beta: float,
    lambda_step: float = 1e-3,
    *,
    table: TransferTable | None = None,
) -> float:
    """Per-site staggered-dimerization response, reported as
    ``chi_dimer/beta = (1/N) beta^-2 d^2 ln Z / d lambda^2`` for a
    modulation ``lambda * sum_i (-1)^i S_i . S_{i+1}``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    table = table if table is not None else TransferTable()
    base = model.dimer_field
    lz = tuple(
        sweep(
            model.with_fields(dimer_field=base + s * lambda_step),
            l0,
            beta,
            table=table,
        )
        for s in (1.0, 0.0, -1.0)
    )
    return _second_difference(lz, lambda_step) / (model.n_sites * beta**2)

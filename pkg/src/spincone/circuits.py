"""Shallow quantum-circuit approximations of chain time evolution.

Two constructions approximate ``exp(-i H t)`` for a nearest-neighbour
chain, each returned as layers of gates with pairwise disjoint supports:

* the block circuit: a layer of decoupled block propagators
  ``exp(-i H_block t)`` followed by a layer of boundary-repair gates,
  each realized as the exact undo/redo pair
  ``exp(-i (H_win + h_cross) t) exp(+i H_win t)`` on a window of width
  ``l - 1`` centred on the crossing bond;

* the corner-transfer circuit: a layer of triangular substep stacks
  (slabs shrinking by one bond per substep, widest first), a layer of
  bridge gates that unwind the triangle flanks top-slab-first and then
  evolve the rectangle between adjacent triangle centres for ``t/2``,
  and the same two layers with all centres shifted by half a period.

Gates store explicit factor lists (window Hamiltonian, duration, sign),
so circuits can be checked against dense propagators, probed for
operator spreading, and exported as plain-text gate lists.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import InvariantError, PrecisionError, ResourceLimitError
from .hilbert import full_basis
from .models import BondTerm, LocalHamiltonian, assemble_dense, spin_wave_velocity


@dataclass(frozen=True)
class GateFactor:
    """One primitive exponential ``exp(-i * sign * H * duration)`` acting
    on the contiguous sites ``site_lo .. site_hi``; ``hamiltonian`` is
    indexed locally from 0."""

    site_lo: int
    site_hi: int
    duration: float
    sign: int
    hamiltonian: LocalHamiltonian

    def __post_init__(self):
        if self.site_hi - self.site_lo < 1:
            raise ValueError("a gate factor spans at least one bond")
        if self.duration < 0.0:
            raise ValueError("duration must be nonnegative")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        if self.hamiltonian.n_sites != self.site_hi - self.site_lo + 1:
            raise ValueError("window Hamiltonian does not match the site range")

    def bonds(self) -> list[int]:
        """Chain bond indices (left sites) the factor's terms touch."""
        return [self.site_lo + t.site_a for t in self.hamiltonian.terms]


@dataclass(frozen=True)
class Gate:
    """Ordered product of factors on one contiguous support;
    ``factors[0]`` is applied to the state first."""

    site_lo: int
    site_hi: int
    factors: tuple[GateFactor, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("a gate needs at least one factor")
        for f in self.factors:
            if f.site_lo < self.site_lo or f.site_hi > self.site_hi:
                raise ValueError("factor support outside the gate range")


@dataclass(frozen=True)
class CircuitLayer:
    """Gates with pairwise disjoint supports, applied simultaneously.
    ``label`` names the disjointness class the layer tiles."""

    label: str
    gates: tuple[Gate, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        spans = sorted((g.site_lo, g.site_hi) for g in self.gates)
        for (_, hi), (lo, _) in zip(spans, spans[1:]):
            if lo <= hi:
                raise InvariantError(
                    f"layer {self.label!r}: gate supports overlap at site {lo}"
                )


@dataclass(frozen=True)
class Circuit:
    """Layers applied in listed order; one pass approximates
    ``exp(-i H t)`` on a chain of ``n_sites``."""

    n_sites: int
    t: float
    layers: tuple[CircuitLayer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for layer in self.layers:
            for g in layer.gates:
                if g.site_lo < 0 or g.site_hi >= self.n_sites:
                    raise ValueError("gate outside the chain")

    def gate_count(self) -> int:
        return sum(len(layer.gates) for layer in self.layers)


def _nn_bond_map(h: LocalHamiltonian) -> dict[int, list[BondTerm]]:
    """Effective terms grouped by bond (left site); rejects chains the
    circuit constructions do not cover."""
    if h.h_field != 0.0:
        raise ValueError("circuit constructions require zero uniform field")
    by: dict[int, list[BondTerm]] = defaultdict(list)
    for t in h.effective_terms():
        if t.site_b - t.site_a != 1:
            raise ValueError("circuit constructions require nearest-neighbour chains")
        by[t.site_a].append(t)
    return by


def _factor_from_bonds(
    by_bond: dict[int, list[BondTerm]],
    bonds,
    duration: float,
    sign: int,
    n_sites: int,
) -> GateFactor | None:
    """Factor over the given chain bonds, clipped to the chain; ``None``
    when no Hamiltonian term survives the clipping."""
    kept = sorted(b for b in set(bonds) if 0 <= b <= n_sites - 2 and b in by_bond)
    if not kept:
        return None
    lo, hi = kept[0], kept[-1] + 1
    terms = tuple(
        BondTerm(t.site_a - lo, t.site_b - lo, t.j_xy, t.j_z)
        for b in kept
        for t in by_bond[b]
    )
    return GateFactor(lo, hi, duration, sign, LocalHamiltonian(hi - lo + 1, terms))


def _gate(factors) -> Gate | None:
    factors = [f for f in factors if f is not None]
    if not factors:
        return None
    return Gate(
        min(f.site_lo for f in factors),
        max(f.site_hi for f in factors),
        tuple(factors),
    )


def build_block_circuit(h: LocalHamiltonian, l: int, t: float) -> Circuit:
    """Two-layer circuit: decoupled length-``l`` block propagators, then
    one repair gate per crossing bond on the window of width ``l - 1``
    centred on it."""
    n = h.n_sites
    if l < 4 or l % 2 != 0:
        raise ValueError(f"block length must be even and at least 4, got {l}")
    if n % l != 0:
        raise ValueError(f"chain length {n} is not divisible by block length {l}")
    by = _nn_bond_map(h)
    blocks = []
    for k in range(n // l):
        f = _factor_from_bonds(by, range(k * l, (k + 1) * l - 1), t, 1, n)
        g = _gate([f])
        if g is not None:
            blocks.append(g)
    bridges = []
    for k in range(1, n // l):
        cross = k * l - 1
        if cross not in by:
            continue
        window = [
            b for b in range(k * l - l // 2, k * l + l // 2 - 2) if b != cross
        ]
        undo = _factor_from_bonds(by, window, t, -1, n)
        redo = _factor_from_bonds(by, window + [cross], t, 1, n)
        g = _gate([undo, redo])
        if g is not None:
            bridges.append(g)
    layers = (
        CircuitLayer("blocks", tuple(blocks)),
        CircuitLayer("bridges", tuple(bridges)),
    )
    return Circuit(n, t, layers)


@dataclass(frozen=True)
class CornerConfig:
    """Geometry of the corner-transfer circuit.

    ``l_prime`` sets the flattened triangle top (half-width
    ``l_prime // 2`` bonds); evolution time ``t`` is split into
    ``n0 >= v_lr * t / 2`` substeps of duration at most ``1 / v_lr``;
    triangle centres repeat with period ``l``, by default
    ``2 * l_prime + v_lr * t`` rounded up to even.  Unset fields are
    filled in by :meth:`resolved`.
    """

    l_prime: int
    t: float
    v_lr: float | None = None
    n0: int | None = None
    l: int | None = None

    def __post_init__(self):
        if self.l_prime < 1:
            raise ValueError("l_prime must be at least 1")
        if self.t < 0.0:
            raise ValueError("t must be nonnegative")

    def resolved(self, h: LocalHamiltonian | None = None) -> CornerConfig:
        """Config with ``v_lr``, ``n0`` and ``l`` filled in and checked."""
        v = self.v_lr if self.v_lr is not None else _velocity_bound(h)
        if v <= 0.0:
            raise ValueError("v_lr must be positive")
        n0 = self.n0
        if n0 is None:
            n0 = max(1, math.ceil(v * self.t / 2.0 - 1e-12))
        if n0 < 1:
            raise ValueError("n0 must be at least 1")
        if self.t / (2.0 * n0) > 1.0 / v + 1e-12:
            raise ValueError("substep duration exceeds 1 / v_lr")
        l = self.l if self.l is not None else 2 * self.l_prime + 2 * n0
        if l % 2 != 0:
            raise ValueError(f"period l must be even, got {l}")
        if l < 2 * (self.l_prime // 2) + 2 * n0:
            raise ValueError(
                f"period l={l} cannot hold disjoint triangles of base "
                f"half-width {self.l_prime // 2 + n0 - 1}"
            )
        return replace(self, v_lr=v, n0=n0, l=l)


def _velocity_bound(h: LocalHamiltonian | None) -> float:
    """Spin-wave velocity of a uniform |delta| <= 1 chain; anything else
    needs an explicit bound."""
    if h is None:
        raise ValueError("provide v_lr explicitly or a Hamiltonian to infer it from")
    couplings = {(t.j_xy, t.j_z) for t in h.effective_terms() if t.site_b - t.site_a == 1}
    if len(couplings) != 1:
        raise ValueError("non-uniform chain: provide v_lr explicitly")
    ((j_xy, j_z),) = couplings
    if j_xy == 0.0 or abs(j_z / j_xy) > 1.0:
        raise ValueError("no velocity formula for this chain: provide v_lr explicitly")
    return abs(j_xy) * spin_wave_velocity(j_z / j_xy)


def build_corner_circuit(h: LocalHamiltonian, cfg: CornerConfig) -> Circuit:
    """Four-layer circuit: triangle stacks at centres ``k*l``, bridge
    gates between them, and both layers again shifted by ``l/2``; one
    pass approximates ``exp(-i H t)``."""
    cfg = cfg.resolved(h)
    n = h.n_sites
    l, n0, t = cfg.l, cfg.n0, cfg.t
    if l <= n and n % l != 0:
        raise ValueError(f"chain length {n} is not divisible by period {l}")
    by = _nn_bond_map(h)
    tau = t / (2.0 * n0)
    widths = [cfg.l_prime // 2 + m for m in range(n0)]

    def triangle(c: int) -> Gate | None:
        return _gate(
            _factor_from_bonds(by, range(c - w, c + w + 1), tau, 1, n)
            for w in reversed(widths)
        )

    def flank_undo(c: int, side: str):
        for w in widths:
            bonds = range(c + 1, c + w + 1) if side == "R" else range(c - w, c)
            yield _factor_from_bonds(by, bonds, tau, -1, n)

    def bridge(c: int) -> Gate | None:
        factors = list(flank_undo(c + l, "L")) + list(flank_undo(c, "R"))
        factors.append(_factor_from_bonds(by, range(c + 1, c + l), t / 2.0, 1, n))
        return _gate(factors)

    def layer(label: str, shift: int, build) -> CircuitLayer:
        gates = []
        for k in range(-2, n // l + 3):
            g = build(k * l + shift)
            if g is not None:
                gates.append(g)
        return CircuitLayer(label, tuple(gates))

    layers = (
        layer("triangles", 0, triangle),
        layer("bridges", 0, bridge),
        layer("triangles-shifted", l // 2, triangle),
        layer("bridges-shifted", l // 2, bridge),
    )
    return Circuit(n, t, layers)


def factor_unitary(f: GateFactor) -> np.ndarray:
    """Dense unitary of one factor on its own site range."""
    hd = assemble_dense(f.hamiltonian, full_basis(f.hamiltonian.n_sites))
    evals, vecs = np.linalg.eigh(hd)
    phases = np.exp(-1j * f.sign * f.duration * evals)
    return (vecs * phases) @ vecs.conj().T


def gate_unitary(g: Gate) -> np.ndarray:
    """Dense unitary of a gate on its own site range."""
    width = g.site_hi - g.site_lo + 1
    u = np.eye(1 << width, dtype=complex)
    for f in g.factors:
        lo = 1 << (f.site_lo - g.site_lo)
        hi = 1 << (g.site_hi - f.site_hi)
        full = np.kron(np.kron(np.eye(hi), factor_unitary(f)), np.eye(lo))
        u = full @ u
    return u


def _apply_factor(mat: np.ndarray, f: GateFactor, side: str) -> np.ndarray:
    """``u @ mat`` (side "left") or ``mat @ u`` (side "right") with the
    factor's unitary embedded at its site range."""
    u = factor_unitary(f)
    dim = mat.shape[0]
    lo = 1 << f.site_lo
    mid = u.shape[0]
    hi = dim // (lo * mid)
    if side == "left":
        m = mat.reshape(hi, mid, lo * mat.shape[1])
        out = np.tensordot(u, m, axes=([1], [1])).transpose(1, 0, 2)
    else:
        m = mat.reshape(mat.shape[0] * hi, mid, lo)
        out = np.tensordot(m, u, axes=([1], [0])).transpose(0, 2, 1)
    return np.ascontiguousarray(out).reshape(mat.shape)


def circuit_matrix(circuit: Circuit) -> np.ndarray:
    """Dense matrix of one circuit pass (small chains only)."""
    if circuit.n_sites > 14:
        raise ResourceLimitError("dense circuit matrix capped at 14 sites")
    dim = 1 << circuit.n_sites
    mat = np.eye(dim, dtype=complex)
    for layer in circuit.layers:
        for gate in layer.gates:
            for f in gate.factors:
                mat = _apply_factor(mat, f, "left")
    return mat


def circuit_error(h: LocalHamiltonian, circuit: Circuit) -> float:
    """Operator-norm error ``|| exp(-i H t) - circuit ||_2`` computed
    densely; capped at 12 sites."""
    if h.n_sites != circuit.n_sites:
        raise ValueError("Hamiltonian and circuit chain lengths differ")
    if h.n_sites > 12:
        raise ResourceLimitError("dense circuit verification capped at 12 sites")
    basis = full_basis(h.n_sites)
    evals, vecs = np.linalg.eigh(assemble_dense(h, basis))
    phases = np.exp(-1j * evals * circuit.t)
    circ = circuit_matrix(circuit)
    dim = circ.shape[0]
    if dim <= 1024:
        exact = (vecs * phases) @ vecs.T
        return float(np.linalg.svd(circ - exact, compute_uv=False)[0])
    # larger chains: Lanczos on D^dag D with the exact propagator applied
    # through its eigensystem, so the reference matrix is never formed
    circ_h = circ.conj().T

    def apply_diff(x):
        return circ @ x - vecs @ (phases * (vecs.T @ x))

    def apply_diff_h(x):
        return circ_h @ x - vecs @ (phases.conj() * (vecs.T @ x))

    # random probes so no symmetry of the model can hide the difference
    # (a structured probe can be a common eigenvector of both propagators)
    rng = np.random.default_rng(7)
    probes = rng.normal(size=(3, dim)) + 1j * rng.normal(size=(3, dim))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    scale = max(float(np.linalg.norm(apply_diff(p))) for p in probes)
    if scale < 1e-12:
        return scale
    op = LinearOperator(
        (dim, dim), matvec=lambda x: apply_diff_h(apply_diff(x)), dtype=complex
    )
    try:
        lam = eigsh(
            op,
            k=1,
            which="LA",
            v0=probes[0],
            tol=1e-9,
            ncv=60,
            maxiter=5000,
            return_eigenvectors=False,
        )
    except ArpackNoConvergence as exc:  # pragma: no cover - defensive
        if len(exc.eigenvalues) == 0:
            raise PrecisionError("operator-norm iteration failed to converge") from exc
        lam = exc.eigenvalues
    return math.sqrt(max(float(lam[0]), 0.0))


def bond_exposure(circuit: Circuit) -> dict[int, float]:
    """Net signed evolution time accumulated on each chain bond over one
    circuit pass (per-term accounting)."""
    out: dict[int, float] = defaultdict(float)
    for layer in circuit.layers:
        for gate in layer.gates:
            for f in gate.factors:
                for b in f.bonds():
                    out[b] += f.sign * f.duration
    return dict(out)


def measure_circuit_velocity(
    circuit: Circuit,
    rounds: int,
    site: int | None = None,
    threshold: float = 1e-8,
) -> float:
    """Spreading velocity of a single-site operator under repeated
    circuit passes (dense Heisenberg picture, capped at 14 sites).

    The operator starts as sigma^z on ``site`` (default: centre); after
    ``rounds`` passes the support is every site whose removal changes
    the operator by more than ``threshold`` in relative Frobenius norm,
    and the velocity is the support radius per unit evolved time.
    """
    n = circuit.n_sites
    if n > 14:
        raise ResourceLimitError("dense operator tracking capped at 14 sites")
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    if site is None:
        site = n // 2
    if circuit.t == 0.0:
        return 0.0
    dim = 1 << n
    sz = np.diag([1.0, -1.0]).astype(complex)
    op = np.kron(np.kron(np.eye(dim >> (site + 1)), sz), np.eye(1 << site))
    factors = [
        f
        for layer in circuit.layers
        for gate in layer.gates
        for f in gate.factors
    ]
    for _ in range(rounds):
        for f in reversed(factors):
            op = _apply_factor(op, replace(f, sign=-f.sign), "left")
            op = _apply_factor(op, f, "right")
    norm2 = float(np.linalg.norm(op)) ** 2
    radius = 0
    for q in range(n):
        lo = 1 << q
        hi = dim >> (q + 1)
        m = op.reshape(hi, 2, lo, hi, 2, lo)
        traced = m[:, 0, :, :, 0, :] + m[:, 1, :, :, 1, :]
        kept = float(np.linalg.norm(traced)) ** 2 / 2.0
        weight = math.sqrt(max(norm2 - kept, 0.0) / norm2)
        if weight > threshold:
            radius = max(radius, abs(q - site))
    return radius / (rounds * circuit.t)


def export_gate_list(circuit: Circuit) -> str:
    """Plain-text gate list: one line per primitive factor with fields
    ``layer site_lo site_hi duration sign``."""
    lines = [f"{circuit.n_sites} {circuit.t:.12g}"]
    for i, layer in enumerate(circuit.layers):
        for gate in layer.gates:
            for f in gate.factors:
                lines.append(
                    f"{i} {f.site_lo} {f.site_hi} {f.duration:.12g} {f.sign:+d}"
                )
    return "\n".join(lines) + "\n"


def parse_gate_list(text: str) -> list[tuple[int, int, int, float, int]]:
    """Rows ``(layer, site_lo, site_hi, duration, sign)`` of an exported
    gate list; the header line is skipped."""
    rows = []
    lines = [ln for ln in text.splitlines() if ln.strip()]
    for ln in lines[1:]:
        layer, lo, hi, duration, sign = ln.split()
        rows.append((int(layer), int(lo), int(hi), float(duration), int(sign)))
    return rows


def operator_schmidt_ranks(
    u: np.ndarray, n_sites: int, tol: float = 1e-9
) -> list[int]:
    """Numerical operator-Schmidt rank of ``u`` across each of the
    ``n_sites - 1`` cuts (low-bit side size 1, 2, ...)."""
    dim = 1 << n_sites
    if u.shape != (dim, dim):
        raise ValueError("matrix does not match the site count")
    ranks = []
    for d in range(1, n_sites):
        lo = 1 << d
        hi = dim >> d
        m = u.reshape(hi, lo, hi, lo).transpose(1, 3, 0, 2).reshape(lo * lo, hi * hi)
        s = np.linalg.svd(m, compute_uv=False)
        ranks.append(int(np.sum(s > tol * s[0])))
    return ranks

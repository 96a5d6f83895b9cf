"""Light-cone sampling of local observables after a quantum quench.

The chain is reduced to a subchain of ``2l + 1`` sites (array
coordinates ``0 .. 2l``, physical labels ``-l .. +l``, center at
coordinate ``l``).  Each half-block of ``l`` sites is evolved for
``t_f / 2`` under its own block Hamiltonian and corrected backward on
its inner half, then decomposed over computational configurations of
its outer half.  Sampling those configurations with Born weights leaves
small states on the middle window of ``l + 1`` sites, which are evolved
under the middle-window Hamiltonian to estimate ``<O(t)>`` on the time
grid ``t_f, t_f - dt, ..., t_f / 2``.  Summing instead of sampling
reproduces the braided reference expectation exactly, which is the
correctness anchor used by the tests.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import InvariantError, ResourceLimitError
from .hilbert import (
    StateVector,
    basis_state,
    conditional_decompose,
    enumerate_sector,
    expectation_site,
    neel_bits,
    popcount,
)
from .models import LocalHamiltonian, assemble_sparse, build_xxz, restrict, subterms
from .propagation import DEFAULT_CONFIG, PropagatorConfig, evolve_taylor

SZ = np.diag([-0.5, 0.5])


@dataclass(frozen=True)
class SiteOperator:
    """Single-site observable at a physical position relative to the
    subchain center (0 = center); matrix in the (down, up) basis."""

    site: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.shape != (2, 2):
            raise ValueError("site operator must be a 2x2 matrix")
        if not np.allclose(m, m.conj().T, atol=1e-12):
            raise ValueError("site operator must be hermitian")
        object.__setattr__(self, "matrix", m)

    @property
    def is_diagonal(self) -> bool:
        return self.matrix[0, 1] == 0.0 and self.matrix[1, 0] == 0.0


def sz_center() -> SiteOperator:
    return SiteOperator(0, SZ)


@dataclass(frozen=True)
class LightconeConfig:
    """Parameters of one light-cone sampling run.

    ``l`` is the half-block size (even, >= 4); the subchain has 2l+1
    sites.  Times from ``t_f/2`` to ``t_f`` are recorded every ``dt``;
    ``dt`` must divide ``t_f/2``.  ``up_first=False`` starts from the
    alternating state whose central spin points down.  ``model`` maps a
    chain length to a Hamiltonian (default: XXZ with anisotropy
    ``delta``).  ``cache_pairs`` memoizes repeated configuration pairs;
    turn it off when timing per-sample cost.
    """

    l: int
    t_f: float
    delta: float = 0.0
    dt: float = 0.25
    n_it: int = 1000
    seed: int = 0
    observable: SiteOperator | None = None
    up_first: bool = False
    model: Callable[[int], LocalHamiltonian] | None = None
    propagator: PropagatorConfig = field(default_factory=PropagatorConfig)
    workers: int = 1
    collect_records: bool = False
    cache_pairs: bool = True

    def __post_init__(self):
        if self.l < 4 or self.l % 2 != 0:
            raise ValueError("l must be an even integer >= 4")
        if self.t_f <= 0 or self.dt <= 0:
            raise ValueError("t_f and dt must be positive")
        steps = (self.t_f / 2.0) / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("dt must divide t_f/2")
        if self.n_it < 1 or self.workers < 1:
            raise ValueError("n_it and workers must be positive")
        obs = self.observable if self.observable is not None else sz_center()
        if abs(obs.site) > self.l // 2:
            raise ValueError("observable site outside the middle window")
        object.__setattr__(self, "observable", obs)

    @property
    def n_times(self) -> int:
        return int(round((self.t_f / 2.0) / self.dt)) + 1

    @property
    def times(self) -> np.ndarray:
        """Recorded times, ascending from t_f/2 to t_f."""
        k = np.arange(self.n_times)
        return self.t_f - self.dt * k[::-1]

    def hamiltonian(self) -> LocalHamiltonian:
        n = 2 * self.l + 1
        h = self.model(n) if self.model is not None else build_xxz(n, self.delta)
        if h.n_sites != n:
            raise ValueError("model factory returned a chain of the wrong length")
        return h


@dataclass(frozen=True)
class SubchainSplits:
    """Re-based pieces of the subchain Hamiltonian: half blocks
    (``left``, ``right``), their inner-half corrections (``left_inner``,
    ``right_inner``, given on the block's own sites), the center-bond
    pair (``bridge``) and the middle window (``middle``)."""

    left: LocalHamiltonian
    right: LocalHamiltonian
    left_inner: LocalHamiltonian
    right_inner: LocalHamiltonian
    bridge: LocalHamiltonian
    middle: LocalHamiltonian


def split_hamiltonians(h_sub: LocalHamiltonian, l: int) -> SubchainSplits:
    if h_sub.n_sites != 2 * l + 1:
        raise ValueError("subchain length must be 2l + 1")
    left = restrict(h_sub, range(0, l))
    right = restrict(h_sub, range(l + 1, 2 * l + 1))
    left_inner = subterms(left, range(l // 2, l))
    right_inner = subterms(right, range(0, l // 2))
    bridge = restrict(h_sub, range(l - 1, l + 2))
    middle = restrict(h_sub, range(l // 2, l + l // 2 + 1))
    return SubchainSplits(left, right, left_inner, right_inner, bridge, middle)


def prepare_half_states(
    splits: SubchainSplits,
    psi_left: StateVector,
    psi_right: StateVector,
    t_f: float,
    propagator: PropagatorConfig = DEFAULT_CONFIG,
) -> tuple[StateVector, StateVector]:
    """Evolve each half-block state forward for ``t_f/2`` under its
    block Hamiltonian, then backward on its inner half — the
    preparation that leaves only outer-half entanglement to observe."""
    half = t_f / 2.0
    out = []
    for block, inner, psi in (
        (splits.left, splits.left_inner, psi_left),
        (splits.right, splits.right_inner, psi_right),
    ):
        amps = evolve_taylor(
            assemble_sparse(block, psi.basis), psi.amps, half, propagator
        )
        amps = evolve_taylor(
            assemble_sparse(inner, psi.basis), amps, -half, propagator
        )
        out.append(StateVector(psi.basis, amps))
    return out[0], out[1]


@dataclass(frozen=True)
class SampleRecord:
    iteration: int
    alpha_left: int
    alpha_right: int


@dataclass(frozen=True)
class Estimate:
    """Monte-Carlo estimate of <O(t)> on the swept grid (ascending
    times).  ``rms`` is the population spread of single-sample values
    and ``stderr = rms / sqrt(n_it)``."""

    times: np.ndarray
    mean: np.ndarray
    rms: np.ndarray
    stderr: np.ndarray
    n_it: int
    metadata: dict
    sampling_seconds: float
    records: tuple[SampleRecord, ...] | None = None
    values: np.ndarray | None = None


@dataclass(frozen=True)
class _HalfBranches:
    """Decomposition of one evolved half-block: outer configurations,
    their weights, and the inner remainder states shifted to middle-
    window bit positions."""

    alpha_bits: np.ndarray  # outer configuration per branch
    weights: np.ndarray  # Born probabilities, re-normalized to sum 1
    cdf: np.ndarray
    inner_bits: list[np.ndarray]  # nonzero inner states, window-shifted
    inner_amps: list[np.ndarray]
    inner_n_up: np.ndarray


class LightconeSampler:
    """Prepares the half-block decompositions for a configuration and
    evaluates sampled (or exhaustively summed) observable sweeps."""

    def __init__(self, cfg: LightconeConfig):
        self.cfg = cfg
        l = cfg.l
        h_sub = cfg.hamiltonian()
        self.splits = split_hamiltonians(h_sub, l)
        bits = neel_bits(2 * l + 1, cfg.up_first)
        left_bits = bits & ((1 << l) - 1)
        self.center_bit = (bits >> l) & 1
        right_bits = bits >> (l + 1)
        psi_lp, psi_rp = prepare_half_states(
            self.splits,
            basis_state(enumerate_sector(l, popcount(left_bits)), left_bits),
            basis_state(enumerate_sector(l, popcount(right_bits)), right_bits),
            cfg.t_f,
            cfg.propagator,
        )
        self.left = self._decompose_half(psi_lp, outer_low=True)
        self.right = self._decompose_half(psi_rp, outer_low=False)
        self._window_cache: dict[int, tuple] = {}
        self._pair_cache: dict[tuple[int, int], np.ndarray] = {}

    # -- preparation ---------------------------------------------------

    def _decompose_half(self, psi: StateVector, outer_low: bool) -> _HalfBranches:
        l = self.cfg.l
        outer = range(0, l // 2) if outer_low else range(l // 2, l)
        branches = conditional_decompose(psi, outer)
        shift = 0 if outer_low else l // 2 + 1
        alpha = np.array([b.outer_bits for b in branches], dtype=np.uint64)
        weights = np.array([b.amp**2 for b in branches])
        weights = weights / weights.sum()
        inner_bits, inner_amps, inner_n_up = [], [], []
        for b in branches:
            keep = np.abs(b.inner.amps) > 0.0
            inner_bits.append(b.inner.basis.states[keep] << np.uint64(shift))
            inner_amps.append(b.inner.amps[keep])
            inner_n_up.append(b.inner.basis.n_up)
        return _HalfBranches(
            alpha, weights, np.cumsum(weights), inner_bits, inner_amps,
            np.array(inner_n_up),
        )

    def _window_sector(self, n_up: int):
        entry = self._window_cache.get(n_up)
        if entry is None:
            cfg = self.cfg
            basis = enumerate_sector(cfg.l + 1, n_up)
            mat = assemble_sparse(self.splits.middle, basis)
            obs = cfg.observable
            coord = obs.site + cfg.l // 2
            if obs.is_diagonal:
                bit = ((basis.states >> np.uint64(coord)) & np.uint64(1)).astype(bool)
                diag = np.where(bit, obs.matrix[1, 1].real, obs.matrix[0, 0].real)
            else:
                diag = None
            entry = (basis, mat, diag, coord)
            self._window_cache[n_up] = entry
        return entry

    # -- evaluation ----------------------------------------------------

    @property
    def times(self) -> np.ndarray:
        return self.cfg.times

    def pair_values(self, i_left: int, i_right: int) -> np.ndarray:
        """Observable sweep for one configuration pair, aligned with
        ``times`` (ascending)."""
        key = (i_left, i_right)
        if self.cfg.cache_pairs:
            cached = self._pair_cache.get(key)
            if cached is not None:
                return cached
        cfg = self.cfg
        l = cfg.l
        bl, br = self.left, self.right
        n_up = int(bl.inner_n_up[i_left] + self.center_bit + br.inner_n_up[i_right])
        basis, mat, diag, coord = self._window_sector(n_up)
        bits = (
            bl.inner_bits[i_left][:, None]
            | br.inner_bits[i_right][None, :]
            | np.uint64(self.center_bit << (l // 2))
        ).ravel()
        if np.any(popcount(bits) != n_up):
            raise InvariantError("window composition broke magnetization bookkeeping")
        amps = np.zeros(basis.dim, dtype=np.complex128)
        amps[basis.index_of(bits)] = np.outer(
            bl.inner_amps[i_left], br.inner_amps[i_right]
        ).ravel()

        values = np.empty(cfg.n_times)
        amps = evolve_taylor(mat, amps, cfg.t_f, cfg.propagator)
        values[-1] = self._expect(basis, amps, diag, coord)
        for k in range(1, cfg.n_times):
            amps = evolve_taylor(mat, amps, -cfg.dt, cfg.propagator)
            values[-1 - k] = self._expect(basis, amps, diag, coord)
        if self.cfg.cache_pairs:
            self._pair_cache[key] = values
        return values

    def _expect(self, basis, amps, diag, coord) -> float:
        if diag is not None:
            p = amps.real**2 + amps.imag**2
            return float(diag @ p)
        psi = StateVector(basis, amps)
        return float(expectation_site(psi, coord, self.cfg.observable.matrix).real)

    def sample(self, iteration: int) -> tuple[int, int, np.ndarray]:
        """Draw the configuration pair for one iteration (deterministic
        in (seed, iteration)) and return (i_left, i_right, values)."""
        i_left = self._draw(2 * iteration, self.left.cdf)
        i_right = self._draw(2 * iteration + 1, self.right.cdf)
        return i_left, i_right, self.pair_values(i_left, i_right)

    def _draw(self, stream: int, cdf: np.ndarray) -> int:
        key = np.array([self.cfg.seed, stream], dtype=np.uint64)
        u = np.random.Generator(np.random.Philox(key=key)).random()
        return int(min(np.searchsorted(cdf, u, side="right"), cdf.size - 1))

    def exhaustive(self) -> np.ndarray:
        """Full weighted sum over configuration pairs; equals the
        braided reference expectation exactly."""
        out = np.zeros(self.cfg.n_times)
        for i, wl in enumerate(self.left.weights):
            for j, wr in enumerate(self.right.weights):
                out += wl * wr * self.pair_values(i, j)
        return out

    # -- driving -------------------------------------------------------

    def run(self) -> Estimate:
        cfg = self.cfg
        values = np.empty((cfg.n_it, cfg.n_times))
        records: list[SampleRecord] = []
        start = time.perf_counter()
        if cfg.workers == 1:
            for it in range(cfg.n_it):
                i_l, i_r, v = self.sample(it)
                values[it] = v
                if cfg.collect_records:
                    records.append(
                        SampleRecord(
                            it,
                            int(self.left.alpha_bits[i_l]),
                            int(self.right.alpha_bits[i_r]),
                        )
                    )
        else:
            chunk = -(-cfg.n_it // cfg.workers)
            spans = [
                (s, min(s + chunk, cfg.n_it)) for s in range(0, cfg.n_it, chunk)
            ]
            with ProcessPoolExecutor(
                max_workers=cfg.workers, initializer=_pool_init, initargs=(self,)
            ) as pool:
                for s, vals, recs in pool.map(_pool_chunk, spans):
                    values[s : s + vals.shape[0]] = vals
                    if cfg.collect_records:
                        records.extend(
                            SampleRecord(it, al, ar) for it, al, ar in recs
                        )
        elapsed = time.perf_counter() - start
        mean = values.mean(axis=0)
        rms = np.sqrt(np.mean((values - mean) ** 2, axis=0))
        obs = cfg.observable
        metadata = {
            "l": cfg.l,
            "t_f": cfg.t_f,
            "delta": cfg.delta,
            "dt": cfg.dt,
            "seed": cfg.seed,
            "up_first": cfg.up_first,
            "observable_site": obs.site,
            "workers": cfg.workers,
        }
        return Estimate(
            times=cfg.times,
            mean=mean,
            rms=rms,
            stderr=rms / np.sqrt(cfg.n_it),
            n_it=cfg.n_it,
            metadata=metadata,
            sampling_seconds=elapsed,
            records=tuple(records) if cfg.collect_records else None,
            values=values if cfg.collect_records else None,
        )


_POOL_SAMPLER: LightconeSampler | None = None


def _pool_init(sampler: LightconeSampler) -> None:
    global _POOL_SAMPLER
    _POOL_SAMPLER = sampler


def _pool_chunk(span: tuple[int, int]):
    s, stop = span
    sampler = _POOL_SAMPLER
    vals = np.empty((stop - s, sampler.cfg.n_times))
    recs = []
    for it in range(s, stop):
        i_l, i_r, v = sampler.sample(it)
        vals[it - s] = v
        if sampler.cfg.collect_records:
            recs.append(
                (
                    it,
                    int(sampler.left.alpha_bits[i_l]),
                    int(sampler.right.alpha_bits[i_r]),
                )
            )
    return s, vals, recs


def run_sampling(cfg: LightconeConfig) -> Estimate:
    return LightconeSampler(cfg).run()


def braided_reference(cfg: LightconeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Dense oracle for the sampler: evolve the full subchain with the
    braided sequence (half blocks forward t_f/2, inner halves backward,
    then the embedded middle window up to each recorded time) and read
    the observable directly.  Matches ``LightconeSampler.exhaustive``
    to numerical precision."""
    cfg = replace(cfg, n_it=1)
    l = cfg.l
    n = 2 * l + 1
    h_sub = cfg.hamiltonian()
    basis = enumerate_sector(n, popcount(neel_bits(n, cfg.up_first)))
    amps = basis_state(basis, neel_bits(n, cfg.up_first)).amps

    def emb(window):
        return assemble_sparse(subterms(h_sub, window), basis)

    half = cfg.t_f / 2.0
    amps = evolve_taylor(emb(range(0, l)), amps, half, cfg.propagator)
    amps = evolve_taylor(emb(range(l // 2, l)), amps, -half, cfg.propagator)
    amps = evolve_taylor(emb(range(l + 1, n)), amps, half, cfg.propagator)
    amps = evolve_taylor(emb(range(l + 1, l + l // 2 + 1)), amps, -half, cfg.propagator)

    middle = emb(range(l // 2, l + l // 2 + 1))
    obs = cfg.observable
    coord = obs.site + l
    values = np.empty(cfg.n_times)
    amps = evolve_taylor(middle, amps, cfg.t_f, cfg.propagator)
    values[-1] = expectation_site(StateVector(basis, amps), coord, obs.matrix).real
    for k in range(1, cfg.n_times):
        amps = evolve_taylor(middle, amps, -cfg.dt, cfg.propagator)
        values[-1 - k] = expectation_site(
            StateVector(basis, amps), coord, obs.matrix
        ).real
    return cfg.times, values


def rms_vs_time(cfg: LightconeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-time sample spread of the single-pair observable values —
    the causal-disconnection diagnostic (flat near zero until the outer
    regions can influence the observable)."""
    est = run_sampling(cfg)
    return est.times, est.rms


def exact_subchain_reference(
    l: int,
    model: LocalHamiltonian | Callable[[int], LocalHamiltonian] | None,
    t_f: float,
    dt: float = 0.25,
    observable: SiteOperator | None = None,
    up_first: bool = False,
    delta: float = 0.0,
    propagator: PropagatorConfig = DEFAULT_CONFIG,
) -> tuple[np.ndarray, np.ndarray]:
    """True subchain evolution <O(t)> on the grid 0 .. t_f — the
    direct-method baseline whose cost grows with the full subchain
    dimension.  ``model`` is a Hamiltonian on 2l+1 sites, a factory
    mapping the length to one, or None for XXZ with ``delta``."""
    n = 2 * l + 1
    if n > 24:
        raise ResourceLimitError(
            f"subchain of {n} sites exceeds the 24-site dense-reference cap"
        )
    if model is None:
        h_sub = build_xxz(n, delta)
    elif callable(model):
        h_sub = model(n)
    else:
        h_sub = model
    if h_sub.n_sites != n:
        raise ValueError("model must live on 2l + 1 sites")
    obs = observable if observable is not None else sz_center()
    bits = neel_bits(n, up_first)
    basis = enumerate_sector(n, popcount(bits))
    mat = assemble_sparse(h_sub, basis)
    amps = basis_state(basis, bits).amps
    coord = obs.site + l
    n_steps = int(round(t_f / dt))
    if abs(n_steps * dt - t_f) > 1e-9:
        raise ValueError("dt must divide t_f")
    times = np.arange(n_steps + 1) * dt
    values = np.empty(n_steps + 1)
    values[0] = expectation_site(StateVector(basis, amps), coord, obs.matrix).real
    for k in range(1, n_steps + 1):
        amps = evolve_taylor(mat, amps, dt, propagator)
        values[k] = expectation_site(
            StateVector(basis, amps), coord, obs.matrix
        ).real
    return times, values


def union_sweep(
    cfg: LightconeConfig, t_fs
) -> tuple[dict[str, np.ndarray], list[Estimate]]:
    """Combine runs at several final times into one curve.

    Each requested time is reported from the smallest ``t_f`` whose
    swept window contains it, so early times come from short (cheap,
    well-converged) runs.  Returns the combined table and the
    individual estimates ordered by ``t_f``.
    """
    t_fs = sorted(float(t) for t in t_fs)
    estimates = [run_sampling(replace(cfg, t_f=tf)) for tf in t_fs]
    claimed: dict[float, tuple] = {}
    for est in estimates:
        tf = est.metadata["t_f"]
        for k, t in enumerate(est.times):
            t_key = round(float(t), 9)
            if t_key not in claimed:
                claimed[t_key] = (est.mean[k], est.rms[k], est.stderr[k], tf)
    ts = np.array(sorted(claimed))
    table = {
        "t": ts,
        "mean": np.array([claimed[t][0] for t in ts]),
        "rms": np.array([claimed[t][1] for t in ts]),
        "stderr": np.array([claimed[t][2] for t in ts]),
        "t_f": np.array([claimed[t][3] for t in ts]),
    }
    return table, estimates

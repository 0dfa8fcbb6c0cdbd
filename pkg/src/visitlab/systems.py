"""Stationary stochastic systems and their seeded samplers.

Every system here produces stationary paths: the initial state is drawn from
the invariant law, and one-step evolution consumes an explicitly documented
pattern of draws from a ``numpy.random.Generator``.  Identical spec + seed +
call pattern therefore reproduce identical paths, and the runner's
per-trajectory seed schedule makes whole experiments reproducible.

Systems
-------
HouseOfCardsSpec
    Nonnegative integer chain that either resets to 0 (probability ``r_i``
    from state ``i``) or climbs to ``i + 1``.
RegenerativeSpec
    Concatenation of independent blocks: a symbol ``a`` with law ``p`` repeated
    for a random block length with law ``q_a``; the first block is drawn from
    the stationary (length-biased) start.
FiniteMarkovSpec
    Irreducible finite-state Markov chain given by its transition matrix.
ProductChainSpec
    m coupled copies of finite chains: independent product, maximal
    (entrywise-min diagonal) coupling, or the sticky parametrized coupling.
IntervalMapSpec
    Piecewise-linear expanding Markov interval map with exact rational
    invariant density.
DoeblinChainSpec
    Circle chain with transition density 1 + eta * cos(2*pi*(y - x)).
FactorProductSpec
    +/-1 spin products z_i = x_i * x_{i+1} of an i.i.d. sign sequence.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    ConvergenceError,
    NonStationaryError,
    ResourceLimitError,
    SpecError,
    StructureError,
)

_ROW_TOL = 1e-12
_INT_MIN = np.iinfo(np.int64).min


def as_rng(seed) -> np.random.Generator:
    """Pass Generators through; build a fresh one from anything else."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trajectory_rng(root_seed: int, index: int) -> np.random.Generator:
    """Counter-based per-trajectory generator: SeedSequence((root, index))."""
    return np.random.default_rng(np.random.SeedSequence((root_seed, index)))


# ---------------------------------------------------------------------------
# house-of-cards chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HouseOfCardsSpec:
    """Integer climb-or-reset chain, parametrised by its reset family.

    kinds:
      * ``constant``:    r_i = r
      * ``drifting``:    r_i = clip(r_limit + c / (i + 1), 0, 1)
      * ``alternating``: r_i = eps_even if i is even else eps_odd
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in ("constant", "drifting", "alternating"):
            raise SpecError(f"unknown house-of-cards kind {self.kind!r}")

    @classmethod
    def constant(cls, r: float) -> "HouseOfCardsSpec":
        if not (0.0 <= r <= 1.0):
            raise SpecError(f"reset probability must lie in [0, 1], got {r}")
        return cls("constant", (float(r),))

    @classmethod
    def drifting(cls, r_limit: float, c: float) -> "HouseOfCardsSpec":
        if not (0.0 <= r_limit <= 1.0):
            raise SpecError(f"limiting reset probability must lie in [0, 1], got {r_limit}")
        if not math.isfinite(c):
            raise SpecError("drift coefficient must be finite")
        return cls("drifting", (float(r_limit), float(c)))

    @classmethod
    def alternating(cls, eps_even: float, eps_odd: float) -> "HouseOfCardsSpec":
        for e in (eps_even, eps_odd):
            if not (0.0 <= e <= 1.0):
                raise SpecError(f"reset probability must lie in [0, 1], got {e}")
        return cls("alternating", (float(eps_even), float(eps_odd)))

    def reset_probs(self, states) -> np.ndarray:
        """Vector of reset probabilities r_i for the given state indices."""
        states = np.asarray(states)
        if self.kind == "constant":
            return np.full(states.shape, self.params[0])
        if self.kind == "drifting":
            r_limit, c = self.params
            return np.clip(r_limit + c / (states + 1.0), 0.0, 1.0)
        eps_even, eps_odd = self.params
        return np.where(states % 2 == 0, eps_even, eps_odd)

    def _decay_sup(self, j: int) -> float:
        """An upper bound on sup_{i >= j} (1 - r_i), used for tail bounds."""
        if self.kind == "constant":
            return 1.0 - self.params[0]
        if self.kind == "drifting":
            r_limit, c = self.params
            if c >= 0.0:
                return 1.0 - r_limit
            return 1.0 - float(self.reset_probs(np.array([j]))[0])
        eps_even, eps_odd = self.params
        return 1.0 - min(eps_even, eps_odd)


@dataclass(frozen=True)
class StationaryLaw:
    """Truncated stationary table with a certified relative tail bound."""

    probs: np.ndarray = field(repr=False)
    tail_bound: float


def hoc_stationary(
    spec: HouseOfCardsSpec, tail: float = 1e-12, cap: int = 2_000_000
) -> StationaryLaw:
    """Stationary law pi(k) proportional to prod_{i<k} (1 - r_i).

    Truncates once the geometric remainder bound drops below ``tail`` of the
    accumulated mass; raises :class:`NonStationaryError` when the weights are
    not summable (or not certifiably so) within ``cap`` states.
    """
    if not isinstance(spec, HouseOfCardsSpec):
        raise SpecError("expected a HouseOfCardsSpec")
    chunk = 4096
    weights = [np.array([1.0])]
    total = 1.0
    w_next = 1.0  # weight of the first state of the next chunk
    start = 0
    while start < cap:
        r = spec.reset_probs(np.arange(start, start + chunk))
        surv = np.cumprod(1.0 - r)
        w = w_next * surv  # weights for states start+1 .. start+chunk
        w_next = float(w[-1])
        q = spec._decay_sup(start + chunk)
        done = w_next == 0.0
        bound = 0.0
        if not done and q < 1.0:
            bound = w_next * q / (1.0 - q)
            done = bound <= tail * (total + float(np.sum(w)))
        if done:
            keep = np.concatenate(weights + [w])
            nz = np.nonzero(keep)[0]
            keep = keep[: nz[-1] + 1]
            s = float(np.sum(keep))
            return StationaryLaw(keep / s, bound / s)
        weights.append(w)
        total += float(np.sum(w))
        start += chunk
    raise NonStationaryError(
        "stationary weights for this reset family are not summable with a "
        f"certifiable geometric tail within {cap} states"
    )


def sample_house_of_cards(spec: HouseOfCardsSpec, n: int, rng, init: int | None = None):
    """n states of a stationary path; returns (states, carry=last state).

    With ``init=None`` the draw pattern is one uniform for the stationary
    start plus n - 1 reset uniforms, and the start itself is emitted first.
    With ``init`` given (stream continuation) all n states are fresh steps
    from ``init`` and n reset uniforms are drawn.  The ``constant`` family
    uses a vectorised reset-anchor scan; other families step sequentially.
    """
    rng = as_rng(rng)
    if n < 1:
        raise SpecError("path length must be >= 1")
    continuing = init is not None
    if not continuing:
        law = _hoc_law_cache(spec)
        cdf = np.cumsum(law.probs)
        init = int(np.searchsorted(cdf, rng.random(), side="right"))
        init = min(init, law.probs.size - 1)
        if n == 1:
            states = np.array([init], dtype=np.int64)
            return states, int(states[-1])
    steps = n if continuing else n - 1
    u = rng.random(steps)
    if spec.kind == "constant":
        resets = u < spec.params[0]
        # positions 1..steps after the anchor state; a reset at position t
        # plants a new anchor, otherwise the previous anchor persists
        pos = np.arange(1, steps + 1, dtype=np.int64)
        anchor = np.where(resets, pos, _INT_MIN)
        anchor = np.concatenate([np.array([-np.int64(init)]), anchor])
        last = np.maximum.accumulate(anchor)
        full = np.concatenate([np.array([0], dtype=np.int64), pos]) - last
        states = full[1:] if continuing else full
    else:
        states = np.empty(n, dtype=np.int64)
        x = init
        r_table = spec.reset_probs(np.arange(n + init + 2))
        out_at = 0
        if not continuing:
            states[0] = x
            out_at = 1
        for j in range(steps):
            x = 0 if u[j] < r_table[x] else x + 1
            states[out_at + j] = x
    return states, int(states[-1])


_HOC_LAWS: dict[tuple, StationaryLaw] = {}


def _hoc_law_cache(spec: HouseOfCardsSpec) -> StationaryLaw:
    key = (spec.kind, spec.params)
    if key not in _HOC_LAWS:
        _HOC_LAWS[key] = hoc_stationary(spec)
    return _HOC_LAWS[key]


# ---------------------------------------------------------------------------
# finite Markov chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteMarkovSpec:
    """Irreducible row-stochastic transition matrix on {0..M-1}."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        q = np.asarray(self.matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise SpecError("transition matrix must be square and nonempty")
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise SpecError("transition probabilities must be finite and nonnegative")
        rows = q.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > _ROW_TOL:
            raise SpecError("every transition row must sum to 1 within 1e-12")
        _require_strongly_connected(q)
        object.__setattr__(self, "matrix", q)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]


def _require_strongly_connected(q: np.ndarray) -> None:
    n_comp, _ = connected_components(
        csr_matrix(q > 0), directed=True, connection="strong"
    )
    if n_comp > 1:
        raise StructureError(
            "the positive pattern of the transition matrix is not strongly "
            "connected (reducible chain)"
        )


def markov_stationary(matrix, tol: float = 1e-10) -> np.ndarray:
    """Unique stationary row vector of an irreducible stochastic matrix."""
    if isinstance(matrix, FiniteMarkovSpec):
        q = matrix.matrix
    else:
        q = FiniteMarkovSpec(np.asarray(matrix, dtype=float)).matrix
    m = q.shape[0]
    a = q.T - np.eye(m)
    a[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    residual = float(np.max(np.abs(pi @ q - pi)))
    if residual > tol:
        raise ConvergenceError(f"stationary solve residual {residual} exceeds {tol}")
    return pi


def sample_markov(spec: FiniteMarkovSpec, n: int, rng, init: int | None = None):
    """n states of a stationary path; (states, carry=last state).

    Always draws n uniforms.  With ``init=None`` the first uniform selects
    the stationary start (which is emitted); with ``init`` given (stream
    continuation) every uniform drives a fresh step from ``init``.
    """
    rng = as_rng(rng)
    if n < 1:
        raise SpecError("path length must be >= 1")
    u = rng.random(n)
    cum = np.cumsum(spec.matrix, axis=1)
    cum[:, -1] = 1.0
    states = np.empty(n, dtype=np.int64)
    if init is None:
        cdf = np.cumsum(markov_stationary(spec))
        cdf[-1] = 1.0
        states[0] = int(np.searchsorted(cdf, u[0], side="right"))
    else:
        states[0] = int(np.searchsorted(cum[init], u[0], side="right"))
    x = int(states[0])
    for j in range(1, n):
        x = int(np.searchsorted(cum[x], u[j], side="right"))
        states[j] = x
    return states, int(states[-1])


def sample_markov_batch(spec: FiniteMarkovSpec, n: int, rngs) -> np.ndarray:
    """Stationary paths for many trajectories, one generator per row.

    Row i consumes rngs[i] exactly like :func:`sample_markov` (n uniforms),
    so a batch row equals the corresponding solo path.
    """
    rows = len(rngs)
    u = np.empty((rows, n))
    for i, rng in enumerate(rngs):
        u[i] = rng.random(n)
    cum = np.cumsum(spec.matrix, axis=1)
    cum[:, -1] = 1.0
    cdf = np.cumsum(markov_stationary(spec))
    cdf[-1] = 1.0
    states = np.empty((rows, n), dtype=np.int64)
    states[:, 0] = np.searchsorted(cdf, u[:, 0], side="right")
    for t in range(1, n):
        states[:, t] = (cum[states[:, t - 1]] <= u[:, t, None]).sum(axis=1)
    return states


# ---------------------------------------------------------------------------
# coupled product chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProductChainSpec:
    """m >= 2 coupled finite chains over a common alphabet.

    couplings:
      * ``independent``: components move independently.
      * ``maximal``: m = 2; from a diagonal state the pair synchronises with
        the largest possible probability (entrywise min), and the leftover
        mass moves through independent residuals (which, for two chains,
        have disjoint supports, so the synchronised mass is exactly the min).
      * ``parametrized``: m = 2 binary chains; from a diagonal state (a, a)
        each component moves with the sticky marginal
        (1 - gamma) * Q_i(a, .) + gamma * point mass at a, independently.

    Off-diagonal states always move as independent products of the original
    marginals.
    """

    components: tuple
    coupling: str = "independent"
    gamma: float | None = None

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, FiniteMarkovSpec) else FiniteMarkovSpec(np.asarray(c, dtype=float))
            for c in self.components
        )
        if len(comps) < 2:
            raise SpecError("a product chain needs at least two components")
        sizes = {c.n_states for c in comps}
        if len(sizes) != 1:
            raise SpecError("all components must share one alphabet size")
        if self.coupling not in ("independent", "maximal", "parametrized"):
            raise SpecError(f"unknown coupling {self.coupling!r}")
        if self.coupling == "parametrized":
            if len(comps) != 2 or comps[0].n_states != 2:
                raise SpecError("parametrized coupling is defined for two binary chains")
            if self.gamma is None or not (0.0 <= self.gamma <= 1.0):
                raise SpecError("parametrized coupling needs gamma in [0, 1]")
        elif self.coupling == "maximal" and len(comps) != 2:
            raise SpecError("maximal coupling simulation supports exactly two chains")
        object.__setattr__(self, "components", comps)

    @property
    def n_states(self) -> int:
        return self.components[0].n_states

    @property
    def n_chains(self) -> int:
        return len(self.components)


def sync_kernel(spec: ProductChainSpec) -> np.ndarray:
    """Matrix of joint agreement moves from diagonal states.

    Entry (a, b) is the probability that, started at the diagonal state
    (a, ..., a), every component lands on b in one step.  Its spectral radius
    drives the synchronisation-cylinder laws.
    """
    mats = [c.matrix for c in spec.components]
    if spec.coupling == "independent":
        out = mats[0].copy()
        for m in mats[1:]:
            out = out * m
        return out
    if spec.coupling == "maximal":
        return np.minimum.reduce(mats)
    # parametrized, binary
    g = float(spec.gamma)
    out = np.empty((2, 2))
    for a in (0, 1):
        for b in (0, 1):
            prob = 1.0
            for m in mats:
                p1 = (1.0 - g) * m[a, 1] + g * a
                prob *= p1 if b == 1 else 1.0 - p1
            out[a, b] = prob
    return out


def _sticky_row(matrix: np.ndarray, a: int, gamma: float) -> np.ndarray:
    row = (1.0 - gamma) * matrix[a].copy()
    row[a] += gamma
    return row


def pair_kernel(spec: ProductChainSpec) -> np.ndarray:
    """Full transition matrix of the coupled pair on tuples of states.

    Tuples are encoded in row-major order (state = sum_i a_i * M^(m-1-i)).
    """
    m_states = spec.n_states
    n_chains = spec.n_chains
    size = m_states**n_chains
    if size > 4096:
        raise ResourceLimitError(f"coupled state space of size {size} exceeds 4096")
    mats = [c.matrix for c in spec.components]
    if spec.coupling == "independent":
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out
    out = np.zeros((size, size))
    for joint in itertools.product(range(m_states), repeat=n_chains):
        row = _encode(joint, m_states)
        on_diag = len(set(joint)) == 1
        if not on_diag:
            dist = mats[0][joint[0]]
            for i in range(1, n_chains):
                dist = np.kron(dist, mats[i][joint[i]])
            out[row] = dist
            continue
        a = joint[0]
        if spec.coupling == "parametrized":
            dist = _sticky_row(mats[0], a, spec.gamma)
            for i in range(1, n_chains):
                dist = np.kron(dist, _sticky_row(mats[i], a, spec.gamma))
            out[row] = dist
        else:  # maximal, two chains
            low = np.minimum(mats[0][a], mats[1][a])
            sync_mass = float(low.sum())
            res0 = mats[0][a] - low
            res1 = mats[1][a] - low
            for b in range(m_states):
                out[row, _encode((b, b), m_states)] += low[b]
            if sync_mass < 1.0:
                out[row] += np.kron(res0, res1) / (1.0 - sync_mass)
    return out


def _encode(joint, m_states: int) -> int:
    code = 0
    for a in joint:
        code = code * m_states + int(a)
    return code


def decode_states(codes: np.ndarray, m_states: int, n_chains: int) -> np.ndarray:
    """Inverse of the row-major tuple encoding; returns (..., n_chains)."""
    out = np.empty(codes.shape + (n_chains,), dtype=np.int64)
    rem = codes.astype(np.int64)
    for i in range(n_chains - 1, -1, -1):
        out[..., i] = rem % m_states
        rem = rem // m_states
    return out


def pair_stationary(spec: ProductChainSpec) -> np.ndarray:
    """Stationary law of the coupled pair chain (errors when reducible)."""
    return markov_stationary(pair_kernel(spec))


def sample_product_chain(spec: ProductChainSpec, n: int, rng, init: int | None = None):
    """n steps of the coupled chain, shape (n, n_chains); (states, carry).

    Always draws n uniforms; with ``init=None`` the first selects the initial
    tuple from the coupled stationary law (and is emitted), otherwise every
    uniform drives a fresh step from the carried encoded state.
    """
    rng = as_rng(rng)
    kernel = pair_kernel(spec)
    cum = np.cumsum(kernel, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(n)
    codes = np.empty(n, dtype=np.int64)
    if init is None:
        cdf = np.cumsum(pair_stationary(spec))
        cdf[-1] = 1.0
        codes[0] = int(np.searchsorted(cdf, u[0], side="right"))
    else:
        codes[0] = int(np.searchsorted(cum[init], u[0], side="right"))
    x = int(codes[0])
    for j in range(1, n):
        x = int(np.searchsorted(cum[x], u[j], side="right"))
        codes[j] = x
    return decode_states(codes, spec.n_states, spec.n_chains), int(codes[-1])


def sample_product_chain_batch(spec: ProductChainSpec, n: int, rngs) -> np.ndarray:
    """Batch version of :func:`sample_product_chain`; rows match solo paths."""
    rows = len(rngs)
    u = np.empty((rows, n))
    for i, rng in enumerate(rngs):
        u[i] = rng.random(n)
    kernel = pair_kernel(spec)
    cum = np.cumsum(kernel, axis=1)
    cum[:, -1] = 1.0
    cdf = np.cumsum(pair_stationary(spec))
    cdf[-1] = 1.0
    codes = np.empty((rows, n), dtype=np.int64)
    codes[:, 0] = np.searchsorted(cdf, u[:, 0], side="right")
    for t in range(1, n):
        codes[:, t] = (cum[codes[:, t - 1]] <= u[:, t, None]).sum(axis=1)
    return decode_states(codes, spec.n_states, spec.n_chains)


# ---------------------------------------------------------------------------
# regenerative block processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegenerativeSpec:
    """Blocks of a repeated symbol with independent lengths.

    ``length_model`` is either ``shared`` (one integer law ``shared_q`` for
    every symbol; ``shared_q[k-1]`` = P(length = k)) or ``smith`` (symbol
    ``a >= 1`` takes length a + 1 with probability 1/a, else length 1, so
    every symbol has mean block length exactly 2).
    """

    symbols: tuple
    symbol_probs: np.ndarray = field(repr=False)
    length_model: str = "shared"
    shared_q: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        symbols = tuple(int(a) for a in self.symbols)
        if len(symbols) == 0 or len(set(symbols)) != len(symbols):
            raise SpecError("symbols must be distinct and nonempty")
        if any(symbols[i] >= symbols[i + 1] for i in range(len(symbols) - 1)):
            raise SpecError("symbols must be strictly increasing")
        probs = np.asarray(self.symbol_probs, dtype=float)
        if probs.shape != (len(symbols),) or np.any(probs < 0):
            raise SpecError("symbol_probs must be nonnegative, one per symbol")
        s = float(probs.sum())
        if abs(s - 1.0) > 1e-9:
            raise SpecError("symbol probabilities must sum to 1")
        probs = probs / s
        if self.length_model == "shared":
            q = np.asarray(self.shared_q, dtype=float)
            if q.ndim != 1 or q.size == 0 or np.any(q < 0):
                raise SpecError("shared_q must be a nonempty nonnegative vector")
            sq = float(q.sum())
            if abs(sq - 1.0) > 1e-9:
                raise SpecError("shared block-length law must sum to 1 (tail < 1e-9)")
            object.__setattr__(self, "shared_q", q / sq)
        elif self.length_model == "smith":
            if any(a < 1 for a in symbols):
                raise SpecError("smith lengths require symbols >= 1")
            if self.shared_q is not None:
                raise SpecError("smith model takes no shared length law")
        else:
            raise SpecError(f"unknown length model {self.length_model!r}")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "symbol_probs", probs)

    @classmethod
    def with_shared_lengths(cls, symbols, probs, q) -> "RegenerativeSpec":
        return cls(tuple(symbols), np.asarray(probs, float), "shared", np.asarray(q, float))

    @classmethod
    def smith(cls, symbols, probs) -> "RegenerativeSpec":
        return cls(tuple(symbols), np.asarray(probs, float), "smith", None)

    def mean_block_by_symbol(self) -> np.ndarray:
        """nu_a = E[block length | symbol a]."""
        if self.length_model == "shared":
            k = np.arange(1, self.shared_q.size + 1, dtype=float)
            return np.full(len(self.symbols), float(k @ self.shared_q))
        return np.full(len(self.symbols), 2.0)

    def mean_block(self) -> float:
        """nu = sum_a p(a) nu_a, the long-run mean block length."""
        return float(self.symbol_probs @ self.mean_block_by_symbol())

    def length_law(self, a: int) -> np.ndarray:
        """q_a as a vector (index k-1 <-> length k)."""
        if self.length_model == "shared":
            return self.shared_q
        q = np.zeros(a + 1)
        q[0] = 1.0 - 1.0 / a
        q[a] = 1.0 / a
        return q

    def stationary_symbol_probs(self) -> np.ndarray:
        """Length-biased symbol law of the block covering a stationary time."""
        nu_a = self.mean_block_by_symbol()
        w = self.symbol_probs * nu_a
        return w / w.sum()


def _stationary_first_block(spec: RegenerativeSpec, u_sym: float, u_len: float):
    """Symbol and REMAINING length of the block covering time 0."""
    pbar = spec.stationary_symbol_probs()
    cdf = np.cumsum(pbar)
    cdf[-1] = 1.0
    ai = int(np.searchsorted(cdf, u_sym, side="right"))
    a = spec.symbols[ai]
    nu_a = spec.mean_block_by_symbol()[ai]
    q = spec.length_law(a)
    # residual-length law: P(rem = k) = sum_{l >= k} q(l) / nu_a
    rem_law = np.cumsum(q[::-1])[::-1] / nu_a
    cdf_rem = np.cumsum(rem_law)
    cdf_rem[-1] = max(cdf_rem[-1], 1.0)
    rem = 1 + int(np.searchsorted(cdf_rem, u_len, side="right"))
    return ai, min(rem, q.size)


def sample_regenerative(spec: RegenerativeSpec, n: int, rng, carry=None):
    """One stationary path of n symbols; (symbols, carry).

    Draw pattern: two uniforms for the stationary first block (symbol, then
    residual length) unless a carry is given, then repeated rounds of paired
    uniform blocks (symbols, lengths) until n symbols are produced.  The
    carry is (symbol index, remaining length) of the unfinished final block.
    """
    rng = as_rng(rng)
    if n < 1:
        raise SpecError("path length must be >= 1")
    symbols = np.asarray(spec.symbols, dtype=np.int64)
    pieces = []
    produced = 0
    if carry is None:
        ai, rem = _stationary_first_block(spec, rng.random(), rng.random())
    else:
        ai, rem = carry
    take = min(rem, n)
    pieces.append(np.full(take, symbols[ai], dtype=np.int64))
    produced += take
    rem -= take
    cdf_sym = np.cumsum(spec.symbol_probs)
    cdf_sym[-1] = 1.0
    nu = spec.mean_block()
    if spec.length_model == "shared":
        cdf_len = np.cumsum(spec.shared_q)
        cdf_len[-1] = 1.0
    sym_arr = np.asarray(spec.symbols, dtype=np.int64)
    while produced < n:
        need = n - produced
        batch = max(16, int(need / nu * 1.25) + 8)
        us = rng.random(batch)
        ul = rng.random(batch)
        ais = np.searchsorted(cdf_sym, us, side="right")
        if spec.length_model == "shared":
            lens = 1 + np.searchsorted(cdf_len, ul, side="right")
        else:
            a_vals = sym_arr[ais]
            lens = np.where(ul < 1.0 - 1.0 / a_vals, 1, a_vals + 1)
        flat = np.repeat(sym_arr[ais], lens)
        if flat.size >= need:
            # locate the block containing symbol index `need - 1`
            ends = np.cumsum(lens)
            bi = int(np.searchsorted(ends, need, side="left"))
            ai = int(ais[bi])
            rem = int(ends[bi] - need)
            pieces.append(flat[:need])
            produced = n
        else:
            pieces.append(flat)
            produced += flat.size
    return np.concatenate(pieces), (ai, rem)


# ---------------------------------------------------------------------------
# piecewise-linear Markov interval maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalMapSpec:
    """Expanding piecewise-linear map with a Markov branch structure.

    On cell i = [breaks[i], breaks[i+1]) the map is x -> slopes[i] * x +
    intercepts[i]; every branch image must be a union of cells with endpoints
    on the break grid (checked exactly with Fractions).
    """

    breaks: tuple
    slopes: tuple
    intercepts: tuple

    def __post_init__(self):
        breaks = tuple(Fraction(b) for b in self.breaks)
        slopes = tuple(Fraction(s) for s in self.slopes)
        icepts = tuple(Fraction(c) for c in self.intercepts)
        if len(breaks) < 2 or breaks[0] != 0 or breaks[-1] != 1:
            raise SpecError("breaks must run from 0 to 1")
        if any(breaks[i] >= breaks[i + 1] for i in range(len(breaks) - 1)):
            raise SpecError("breaks must be strictly increasing")
        ncells = len(breaks) - 1
        if len(slopes) != ncells or len(icepts) != ncells:
            raise SpecError("need one slope and intercept per cell")
        if any(abs(s) <= 1 for s in slopes):
            raise SpecError("the map must be expanding (|slope| > 1 on every cell)")
        grid = set(breaks)
        for i in range(ncells):
            lo = slopes[i] * breaks[i] + icepts[i]
            hi = slopes[i] * breaks[i + 1] + icepts[i]
            lo, hi = min(lo, hi), max(lo, hi)
            if lo < 0 or hi > 1:
                raise SpecError(f"branch {i} maps outside [0, 1]")
            if lo not in grid or hi not in grid:
                raise StructureError(
                    f"branch {i} image ({lo}, {hi}) is not a union of cells: "
                    "the partition is not Markov for this map"
                )
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "intercepts", icepts)
        object.__setattr__(self, "_float_breaks", np.array([float(b) for b in breaks]))

    @property
    def n_cells(self) -> int:
        return len(self.breaks) - 1

    def cell_lengths(self) -> tuple:
        return tuple(self.breaks[i + 1] - self.breaks[i] for i in range(self.n_cells))

    def covers(self, i: int, j: int) -> bool:
        """Does the image of cell i cover cell j?"""
        lo = self.slopes[i] * self.breaks[i] + self.intercepts[i]
        hi = self.slopes[i] * self.breaks[i + 1] + self.intercepts[i]
        lo, hi = min(lo, hi), max(lo, hi)
        return lo <= self.breaks[j] and self.breaks[j + 1] <= hi

    def transition_matrix_exact(self) -> list:
        """Symbol-chain transition matrix as exact Fractions.

        Row i gives 1/|slope_i| to every cell covered by branch i; rows sum
        to 1 because branch images are unions of cells of total length
        |slope_i| * (cell i length) ... scaled back by the slope.
        """
        lengths = self.cell_lengths()
        out = []
        for i in range(self.n_cells):
            inv = 1 / abs(self.slopes[i])
            row = [inv if self.covers(i, j) else Fraction(0) for j in range(self.n_cells)]
            covered = sum(lengths[j] for j in range(self.n_cells) if self.covers(i, j))
            if covered != abs(self.slopes[i]) * lengths[i]:
                raise StructureError(
                    f"branch {i} image is not exactly a union of cells: "
                    "the partition is not Markov for this map"
                )
            out.append(row)
        return out

    def transition_matrix(self) -> np.ndarray:
        return np.array(
            [[float(v) for v in row] for row in self.transition_matrix_exact()]
        )


def _solve_left_eigvec_exact(rows: list) -> list:
    """Exact left fixed vector h Q = h of a rational stochastic matrix."""
    m = len(rows)
    # build (Q^T - I) with an appended normalisation row, solve by Gauss
    a = [[rows[j][i] - (1 if i == j else 0) for j in range(m)] for i in range(m)]
    a[-1] = [Fraction(1)] * m
    b = [Fraction(0)] * (m - 1) + [Fraction(1)]
    mat = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(m):
        piv = next((r for r in range(col, m) if mat[r][col] != 0), None)
        if piv is None:
            raise StructureError("invariant-density system is singular")
        mat[col], mat[piv] = mat[piv], mat[col]
        pval = mat[col][col]
        mat[col] = [v / pval for v in mat[col]]
        for r in range(m):
            if r != col and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [v - f * w for v, w in zip(mat[r], mat[col])]
    return [mat[i][m] for i in range(m)]


def interval_map_invariant(spec: IntervalMapSpec) -> tuple:
    """Exact piecewise-constant invariant density (one Fraction per cell),
    normalised so that sum_i h_i * |cell_i| = 1."""
    q = spec.transition_matrix_exact()
    _require_strongly_connected(spec.transition_matrix())
    h = _solve_left_eigvec_exact(q)
    total = sum(hi * li for hi, li in zip(h, spec.cell_lengths()))
    h = [hi / total for hi in h]
    if any(hi <= 0 for hi in h):
        raise StructureError("invariant density is not strictly positive")
    return tuple(h)


def interval_symbol_stationary(spec: IntervalMapSpec) -> tuple:
    """Exact stationary law of the itinerary chain: pi_i = h_i * |cell_i|."""
    h = interval_map_invariant(spec)
    return tuple(hi * li for hi, li in zip(h, spec.cell_lengths()))


def sample_interval_map(spec: IntervalMapSpec, n: int, rng, x0: float | None = None):
    """n orbit points (floats in [0,1)); (orbit, carry=last point).

    Draw pattern: two uniforms select the stationary start (cell by exact
    invariant mass, then position within the cell); the orbit itself is
    deterministic.  With ``x0`` given (stream continuation) no uniforms are
    drawn and the first emitted point is the image of ``x0``.
    """
    rng = as_rng(rng)
    if n < 1:
        raise SpecError("path length must be >= 1")
    bf = spec._float_breaks
    slopes = np.array([float(s) for s in spec.slopes])
    icepts = np.array([float(c) for c in spec.intercepts])
    top = np.nextafter(1.0, 0.0)
    inner = bf[1:-1]

    def step(x):
        cell = int(np.searchsorted(inner, x, side="right"))
        return min(max(slopes[cell] * x + icepts[cell], 0.0), top)

    if x0 is None:
        u, v = rng.random(2)
        masses = np.array([float(p) for p in interval_symbol_stationary(spec)])
        cdf = np.cumsum(masses)
        cdf[-1] = 1.0
        cell = int(np.searchsorted(cdf, u, side="right"))
        x = bf[cell] + v * (bf[cell + 1] - bf[cell])
    else:
        x = step(float(x0))
    xs = np.empty(n)
    for j in range(n):
        xs[j] = x
        x = step(x)
    return xs, float(xs[-1])


def sample_interval_map_batch(spec: IntervalMapSpec, n: int, rngs) -> np.ndarray:
    """Orbit matrix, one per-row generator; rows equal solo orbits."""
    rows = len(rngs)
    u = np.empty((rows, 2))
    for i, rng in enumerate(rngs):
        u[i] = rng.random(2)
    bf = spec._float_breaks
    slopes = np.array([float(s) for s in spec.slopes])
    icepts = np.array([float(c) for c in spec.intercepts])
    masses = np.array([float(p) for p in interval_symbol_stationary(spec)])
    cdf = np.cumsum(masses)
    cdf[-1] = 1.0
    cells = np.searchsorted(cdf, u[:, 0], side="right")
    x = bf[cells] + u[:, 1] * (bf[cells + 1] - bf[cells])
    xs = np.empty((rows, n))
    top = np.nextafter(1.0, 0.0)
    inner = bf[1:-1]
    for t in range(n):
        xs[:, t] = x
        cell = np.searchsorted(inner, x, side="right")
        x = np.clip(slopes[cell] * x + icepts[cell], 0.0, top)
    return xs


def interval_itinerary(spec: IntervalMapSpec, orbit: np.ndarray) -> np.ndarray:
    """Cell indices visited by an orbit array."""
    return np.searchsorted(spec._float_breaks[1:-1], orbit, side="right").astype(np.int64)


# ---------------------------------------------------------------------------
# Doeblin circle chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DoeblinChainSpec:
    """Markov chain on [0, 1) with density kernel 1 + eta * cos(2 pi (y - x)).

    Lebesgue measure is invariant (the kernel is doubly stochastic); the
    density is bounded between 1 - eta and 1 + eta, so for eta < 1 the chain
    is uniformly Doeblin with sup-density 1 + eta.
    """

    eta: float
    n_chains: int = 2

    def __post_init__(self):
        if not (0.0 <= self.eta < 1.0):
            raise SpecError(f"eta must lie in [0, 1), got {self.eta}")
        if self.n_chains < 1:
            raise SpecError("need at least one chain")

    def kernel_density(self, x, y):
        return 1.0 + self.eta * np.cos(2.0 * np.pi * (np.asarray(y) - np.asarray(x)))

    @property
    def density_sup(self) -> float:
        return 1.0 + self.eta


def _doeblin_increments(eta: float, m: int, rng) -> np.ndarray:
    """m i.i.d. draws from the density 1 + eta*cos(2 pi d) by rejection.

    Each round draws a (proposal, acceptance) uniform pair block for the
    still-missing count, so consumption is a deterministic function of the
    generator state.
    """
    if eta == 0.0:
        return rng.random(m)
    out = np.empty(m)
    filled = 0
    bound = 1.0 + eta
    while filled < m:
        need = m - filled
        props = rng.random(need)
        us = rng.random(need)
        ok = us * bound <= 1.0 + eta * np.cos(2.0 * np.pi * props)
        took = int(ok.sum())
        out[filled : filled + took] = props[ok]
        filled += took
    return out


def sample_doeblin(spec: DoeblinChainSpec, n: int, rng, carry=None):
    """Stationary independent chains, shape (n, n_chains); (paths, carry).

    Draw pattern per chain: one uniform for the start (unless carried), then
    rejection rounds for the remaining increments; chains are consumed in
    order.  With a carry, all n points are fresh steps from the carried
    positions.
    """
    rng = as_rng(rng)
    if n < 1:
        raise SpecError("path length must be >= 1")
    out = np.empty((n, spec.n_chains))
    last = []
    for c in range(spec.n_chains):
        if carry is None:
            x0 = rng.random()
            incr = _doeblin_increments(spec.eta, n - 1, rng) if n > 1 else np.empty(0)
            col = np.empty(n)
            col[0] = x0
            if n > 1:
                col[1:] = (x0 + np.cumsum(incr)) % 1.0
        else:
            incr = _doeblin_increments(spec.eta, n, rng)
            col = (carry[c] + np.cumsum(incr)) % 1.0
        out[:, c] = col
        last.append(float(col[-1]))
    return out, tuple(last)


# ---------------------------------------------------------------------------
# sign-product factor chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FactorProductSpec:
    """z_i = x_i * x_{i+1} for i.i.d. signs with P(x = +1) = plus_prob.

    The sign marginal must be asymmetric (plus_prob != 1/2); otherwise the
    lift degenerates and the cylinder laws below lose their meaning.
    """

    plus_prob: float

    def __post_init__(self):
        if not (0.0 < self.plus_prob < 1.0):
            raise SpecError("plus_prob must lie strictly between 0 and 1")
        if self.plus_prob == 0.5:
            raise SpecError("plus_prob = 1/2 is degenerate for this factor system")


def sample_factor_product(spec: FactorProductSpec, n: int, rng, carry=None):
    """n product symbols (+-1); (symbols, carry=last underlying sign).

    Draw pattern: n + 1 sign uniforms when starting fresh, n when carried.
    """
    rng = as_rng(rng)
    if n < 1:
        raise SpecError("path length must be >= 1")
    fresh = n + 1 if carry is None else n
    x = np.where(rng.random(fresh) < spec.plus_prob, 1, -1).astype(np.int64)
    if carry is not None:
        x = np.concatenate([[np.int64(carry)], x])
    return x[:-1] * x[1:], int(x[-1])


# ---------------------------------------------------------------------------
# generic path generation
# ---------------------------------------------------------------------------


def sample_path(spec, n: int, rng):
    """Single stationary path for any system spec (dispatch helper)."""
    if isinstance(spec, HouseOfCardsSpec):
        return sample_house_of_cards(spec, n, rng)[0]
    if isinstance(spec, FiniteMarkovSpec):
        return sample_markov(spec, n, rng)[0]
    if isinstance(spec, ProductChainSpec):
        return sample_product_chain(spec, n, rng)[0]
    if isinstance(spec, RegenerativeSpec):
        return sample_regenerative(spec, n, rng)[0]
    if isinstance(spec, IntervalMapSpec):
        return sample_interval_map(spec, n, rng)[0]
    if isinstance(spec, DoeblinChainSpec):
        return sample_doeblin(spec, n, rng)[0]
    if isinstance(spec, FactorProductSpec):
        return sample_factor_product(spec, n, rng)[0]
    raise SpecError(f"unknown system spec {type(spec).__name__}")


def sample_paths(spec, n: int, rngs) -> np.ndarray:
    """Stationary paths for many trajectories (one generator per row).

    Row i always equals ``sample_path(spec, n, rngs[i])``; column-stepped
    systems (Markov, product chains, interval maps) use a vectorised batch
    route with identical per-row consumption.
    """
    if isinstance(spec, FiniteMarkovSpec):
        return sample_markov_batch(spec, n, rngs)
    if isinstance(spec, ProductChainSpec):
        return sample_product_chain_batch(spec, n, rngs)
    if isinstance(spec, IntervalMapSpec):
        return sample_interval_map_batch(spec, n, rngs)
    rows = [sample_path(spec, n, rng) for rng in rngs]
    return np.stack(rows)


class SymbolStream:
    """Resumable stationary stream over any system spec.

    ``take(k)`` returns the next k states (symbols, tuples, or points
    depending on the system).  Two streams with equal spec, seed, and call
    pattern yield identical output.
    """

    def __init__(self, spec, seed):
        self.spec = spec
        self._rng = as_rng(seed)
        self._carry = None
        self._started = False

    def take(self, k: int) -> np.ndarray:
        if k < 1:
            raise SpecError("take() needs k >= 1")
        spec = self.spec
        carry = self._carry if self._started else None
        if isinstance(spec, HouseOfCardsSpec):
            out, self._carry = sample_house_of_cards(spec, k, self._rng, init=carry)
        elif isinstance(spec, FiniteMarkovSpec):
            out, self._carry = sample_markov(spec, k, self._rng, init=carry)
        elif isinstance(spec, ProductChainSpec):
            out, self._carry = sample_product_chain(spec, k, self._rng, init=carry)
        elif isinstance(spec, RegenerativeSpec):
            out, self._carry = sample_regenerative(spec, k, self._rng, carry=carry)
        elif isinstance(spec, IntervalMapSpec):
            out, self._carry = sample_interval_map(spec, k, self._rng, x0=carry)
        elif isinstance(spec, DoeblinChainSpec):
            out, self._carry = sample_doeblin(spec, k, self._rng, carry=carry)
        elif isinstance(spec, FactorProductSpec):
            out, self._carry = sample_factor_product(spec, k, self._rng, carry=carry)
        else:
            raise SpecError(f"unknown system spec {type(spec).__name__}")
        self._started = True
        return out

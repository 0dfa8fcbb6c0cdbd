"""Shrinking target families: window membership tests and reference measures.

Each target turns a batch of stationary paths into a boolean indicator array
(one column per window start).  Where the (system, target) pair admits a
closed-form stationary measure the module evaluates it exactly; otherwise a
seeded Monte Carlo fallback reports a standard error alongside the value.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InsufficientDataError, SpecError, StructureError
from .systems import (
    DoeblinChainSpec,
    FactorProductSpec,
    FiniteMarkovSpec,
    HouseOfCardsSpec,
    IntervalMapSpec,
    ProductChainSpec,
    RegenerativeSpec,
    hoc_stationary,
    interval_itinerary,
    interval_map_invariant,
    markov_stationary,
    pair_stationary,
    sample_paths,
    sync_kernel,
    trajectory_rng,
)

# index namespace for auxiliary draws (keeps trajectory seeds untouched)
_MEASURE_INDEX_BASE = 2**48


@dataclass(frozen=True)
class RunLengthTarget:
    """Membership: the current state is >= level and stays there n more steps.

    A window therefore spans n + 1 consecutive symbols, all >= level; this is
    the convention under which the exact stationary measure below telescopes
    into survival products.
    """

    n: int
    level: int = 1

    def __post_init__(self):
        if self.n < 0:
            raise SpecError("run parameter n must be >= 0")
        if self.level < 1:
            raise SpecError("level must be >= 1")

    @property
    def window(self) -> int:
        return self.n + 1

    def indicators(self, paths) -> np.ndarray:
        paths = np.asarray(paths)
        return _window_all(paths >= self.level, self.window)


@dataclass(frozen=True)
class HalfLineTarget:
    """Membership: the current symbol is >= n."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise SpecError("half-line threshold must be >= 1")

    @property
    def window(self) -> int:
        return 1

    def indicators(self, paths) -> np.ndarray:
        return np.asarray(paths) >= self.n


@dataclass(frozen=True)
class CylinderTarget:
    """Membership: the next len(word) symbols spell out ``word`` exactly."""

    word: tuple

    def __post_init__(self):
        word = tuple(int(a) for a in self.word)
        if len(word) == 0 or any(a < 0 for a in word):
            raise SpecError("cylinder word must be nonempty over nonnegative symbols")
        object.__setattr__(self, "word", word)

    @property
    def window(self) -> int:
        return len(self.word)

    def indicators(self, paths) -> np.ndarray:
        return _match_word(np.asarray(paths), self.word)


@dataclass(frozen=True)
class SignCylinderTarget:
    """Membership: the next len(word) product symbols match a +-1 word."""

    word: tuple

    def __post_init__(self):
        word = tuple(int(a) for a in self.word)
        if len(word) == 0 or any(a not in (-1, 1) for a in word):
            raise SpecError("sign word must be nonempty over {-1, +1}")
        object.__setattr__(self, "word", word)

    @property
    def window(self) -> int:
        return len(self.word)

    def indicators(self, paths) -> np.ndarray:
        return _match_word(np.asarray(paths), self.word)


@dataclass(frozen=True)
class SyncCylinderTarget:
    """Membership: all parallel components agree for n consecutive steps."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise SpecError("synchronisation length must be >= 1")

    @property
    def window(self) -> int:
        return self.n

    def indicators(self, paths) -> np.ndarray:
        paths = np.asarray(paths)
        if paths.ndim != 3 or paths.shape[2] < 2:
            raise SpecError("synchronisation targets need (batch, time, component) paths")
        agree = np.all(paths == paths[:, :, :1], axis=2)
        return _window_all(agree, self.n)


@dataclass(frozen=True)
class GeoDiagonalTarget:
    """Membership: real coordinates pairwise within delta of each other."""

    delta: float

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise SpecError("delta must lie strictly between 0 and 1")

    @property
    def window(self) -> int:
        return 1

    def indicators(self, paths) -> np.ndarray:
        paths = np.asarray(paths, dtype=float)
        if paths.ndim != 3 or paths.shape[2] < 2:
            raise SpecError("diagonal targets need (batch, time, coordinate) paths")
        m = paths.shape[2]
        ok = np.ones(paths.shape[:2], dtype=bool)
        for i in range(m):
            for j in range(i + 1, m):
                ok &= np.abs(paths[:, :, i] - paths[:, :, j]) <= self.delta
        return ok


TARGET_KINDS = (
    RunLengthTarget,
    HalfLineTarget,
    CylinderTarget,
    SignCylinderTarget,
    SyncCylinderTarget,
    GeoDiagonalTarget,
)


def _window_all(mask: np.ndarray, w: int) -> np.ndarray:
    """All-true test over every length-w window of a boolean array."""
    mask = np.atleast_2d(mask)
    if w == 1:
        return mask.copy()
    if mask.shape[1] < w:
        return np.zeros((mask.shape[0], 0), dtype=bool)
    c = np.zeros((mask.shape[0], mask.shape[1] + 1), dtype=np.int64)
    np.cumsum(mask, axis=1, out=c[:, 1:])
    return (c[:, w:] - c[:, :-w]) == w


def _match_word(paths: np.ndarray, word: tuple) -> np.ndarray:
    paths = np.atleast_2d(paths)
    k = len(word)
    stop = paths.shape[1] - k + 1
    if stop <= 0:
        return np.zeros((paths.shape[0], 0), dtype=bool)
    out = paths[:, 0:stop] == word[0]
    for j in range(1, k):
        out &= paths[:, j : stop + j] == word[j]
    return out


def hits(paths, target, horizon: int) -> np.ndarray:
    """Indicator rows I_0 .. I_horizon (window start times) for each path.

    Paths must carry at least ``horizon + target.window`` time steps; windows
    that would run past the simulated data are never counted.
    """
    ind = target.indicators(paths)
    if ind.shape[1] < horizon + 1:
        raise SpecError(
            f"paths support {ind.shape[1]} windows, horizon needs {horizon + 1}"
        )
    return ind[:, : horizon + 1]


# ---------------------------------------------------------------------------
# reference measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetMeasure:
    """Stationary measure of one target set.

    ``method`` records how the number was obtained; exact formulas carry zero
    standard error.
    """

    value: float
    se: float = 0.0
    method: str = "exact"

    def __post_init__(self):
        if not (self.value > 0.0):
            raise SpecError(f"target measure must be positive, got {self.value}")


def sign_cylinder_measure(plus_prob, word):
    """Measure of a +-1 product-symbol cylinder via its two sign lifts.

    Works in the arithmetic of ``plus_prob``: pass a Fraction for an exact
    rational answer, a float for a float.
    """
    eps = plus_prob
    one = eps / eps  # 1 in the right arithmetic
    x = 1
    k_plus = 1  # the lift starts at +1
    for z in word:
        if z not in (-1, 1):
            raise SpecError("sign word must be over {-1, +1}")
        x *= z
        if x == 1:
            k_plus += 1
    k_minus = (len(word) + 1) - k_plus
    return eps**k_plus * (one - eps) ** k_minus + eps**k_minus * (one - eps) ** k_plus


def interval_cylinder_measure(spec: IntervalMapSpec, word) -> Fraction:
    """Exact invariant measure of an itinerary cylinder of a Markov map.

    Uses the Markov identity: the cylinder's length is the last cell's length
    scaled down the branch derivatives along the word, and the invariant
    density is constant on the first cell.
    """
    word = tuple(int(a) for a in word)
    cells = spec.n_cells
    if any(a < 0 or a >= cells for a in word):
        raise StructureError("itinerary word leaves the cell alphabet")
    for a, b in zip(word, word[1:]):
        if not spec.covers(a, b):
            raise StructureError(f"transition {a}->{b} is not admissible; empty cylinder")
    h = interval_map_invariant(spec)
    lengths = spec.cell_lengths()
    lam = lengths[word[-1]]
    for a in word[:-1]:
        lam /= abs(spec.slopes[a])
    return h[word[0]] * lam


def measure_exact(target, system) -> TargetMeasure:
    """Closed-form stationary measure for a supported (system, target) pair.

    Raises SpecError when no formula is known; see :func:`measure` for the
    Monte Carlo fallback.
    """
    if isinstance(system, HouseOfCardsSpec) and isinstance(target, RunLengthTarget):
        return TargetMeasure(_hoc_run_measure(system, target), 0.0, "exact:survival-sum")
    if isinstance(system, RegenerativeSpec) and isinstance(target, HalfLineTarget):
        pbar = system.stationary_symbol_probs()
        mask = np.asarray(system.symbols) >= target.n
        value = float(pbar[mask].sum())
        return TargetMeasure(value, 0.0, "exact:length-biased-tail")
    if isinstance(system, FiniteMarkovSpec) and isinstance(target, CylinderTarget):
        pi = markov_stationary(system.matrix)
        w = target.word
        if max(w) >= system.n_states:
            raise StructureError("cylinder word leaves the state alphabet")
        value = float(pi[w[0]])
        for a, b in zip(w, w[1:]):
            value *= float(system.matrix[a, b])
        if value == 0.0:
            raise StructureError("cylinder word has zero stationary measure")
        return TargetMeasure(value, 0.0, "exact:path-product")
    if isinstance(system, IntervalMapSpec) and isinstance(target, CylinderTarget):
        return TargetMeasure(
            float(interval_cylinder_measure(system, target.word)),
            0.0,
            "exact:invariant-density",
        )
    if isinstance(system, ProductChainSpec) and isinstance(target, SyncCylinderTarget):
        return TargetMeasure(_sync_measure(system, target.n), 0.0, "exact:diagonal-iteration")
    if isinstance(system, DoeblinChainSpec) and isinstance(target, GeoDiagonalTarget):
        if system.n_chains != 2:
            raise SpecError("closed-form diagonal measure implemented for two chains")
        d = target.delta
        return TargetMeasure(2.0 * d - d * d, 0.0, "exact:strip-area")
    if isinstance(system, FactorProductSpec) and isinstance(target, SignCylinderTarget):
        value = float(sign_cylinder_measure(system.plus_prob, target.word))
        return TargetMeasure(value, 0.0, "exact:sign-lift")
    raise SpecError(
        f"no exact measure for ({type(system).__name__}, {type(target).__name__})"
    )


def _hoc_run_measure(system: HouseOfCardsSpec, target: RunLengthTarget) -> float:
    """P(state >= level now and no reset for n further steps), stationary.

    Written as sum_s pi(s) * prod_{u=s}^{s+n-1}(1 - r_u) over start states
    s >= level; the product is evaluated in log space to dodge underflow.
    """
    law = hoc_stationary(system)
    j_max = law.probs.size - 1
    n = target.n
    if n == 0:
        return float(law.probs[target.level :].sum())
    r = system.reset_probs(np.arange(j_max + n))
    if np.any(r >= 1.0):
        # a certain reset inside some window: fall back to direct products
        surv_steps = 1.0 - r
        mu = 0.0
        for s in range(target.level, j_max + 1):
            mu += float(law.probs[s]) * float(np.prod(surv_steps[s : s + n]))
        return mu
    logs = np.concatenate([[0.0], np.cumsum(np.log1p(-r))])
    s_idx = np.arange(target.level, j_max + 1)
    surv = np.exp(logs[s_idx + n] - logs[s_idx])
    return float(np.dot(law.probs[target.level :], surv))


def _sync_measure(system: ProductChainSpec, n: int) -> float:
    """Probability that all components agree on n consecutive letters."""
    pair = pair_stationary(system)
    m = system.n_states
    diag_idx = [_diag_code(a, m, system.n_chains) for a in range(m)]
    nu0 = pair[diag_idx]
    d = sync_kernel(system)
    v = np.ones(m)
    for _ in range(n - 1):
        v = d @ v
    return float(nu0 @ v)


def _diag_code(a: int, m: int, chains: int) -> int:
    code = 0
    for _ in range(chains):
        code = code * m + a
    return code


def measure_mc(target, system, samples: int, seed: int, path_len: int | None = None) -> TargetMeasure:
    """Monte Carlo window frequency with a trajectory-clustered standard error."""
    if samples < 2:
        raise InsufficientDataError("need at least two trajectories", count=samples)
    w = target.window
    length = path_len if path_len is not None else max(8 * w, w + 63)
    means = np.empty(samples)
    batch = 4096
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        rngs = [trajectory_rng(seed, _MEASURE_INDEX_BASE + done + i) for i in range(m)]
        paths = sample_paths(system, length, rngs)
        if isinstance(system, IntervalMapSpec) and isinstance(target, CylinderTarget):
            paths = interval_itinerary(system, paths)
        ind = target.indicators(paths)
        means[done : done + m] = ind.mean(axis=1)
        done += m
    value = float(means.mean())
    se = float(means.std(ddof=1) / np.sqrt(samples))
    if value <= 0.0:
        raise InsufficientDataError(
            "no window ever landed in the target; cannot report a positive measure",
            count=0,
        )
    return TargetMeasure(value, se, "monte-carlo")


def measure(target, system, samples: int = 100_000, seed: int = 0) -> TargetMeasure:
    """Exact measure when a formula exists, Monte Carlo otherwise."""
    try:
        return measure_exact(target, system)
    except SpecError:
        return measure_mc(target, system, samples, seed)


def outer_target(target, j: int):
    """The j-step outer approximation U^j of a target (U^j contains U).

    Nested symbolic families shrink along their own parameter; point targets
    (half-line, diagonal) are their own outer approximation at every j.
    """
    if j < 0:
        raise SpecError("outer index must be >= 0")
    if isinstance(target, RunLengthTarget):
        return RunLengthTarget(min(j, target.n), target.level)
    if isinstance(target, (CylinderTarget, SignCylinderTarget)):
        k = min(max(j, 1), len(target.word))
        return type(target)(target.word[:k])
    if isinstance(target, SyncCylinderTarget):
        return SyncCylinderTarget(min(max(j, 1), target.n))
    if isinstance(target, (HalfLineTarget, GeoDiagonalTarget)):
        return target
    raise SpecError(f"no outer family for {type(target).__name__}")


def outer_measures(target, system, j_values) -> list:
    """mu(U^j) along j_values, for the tail sums of the error brackets."""
    out = []
    for j in j_values:
        out.append(measure(outer_target(target, int(j)), system).value)
    return out

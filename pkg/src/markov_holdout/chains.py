"""Exact diagnostics for finite-state Markov chains.

A chain is a row-stochastic matrix over a finite state space.  Everything
in this module is computed densely and exactly (up to float64 round-off):
stationary law, total variation distance to stationarity, mixing profile
and mixing time, time reversal, pseudo-spectral gap, and the embedding of
higher-order chains as first-order chains on tuple states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    EigensolverFailureError,
    HorizonExceededError,
    NonPrimitiveError,
    NumericalFailureError,
    RangeError,
    SizeOverflowError,
    ZeroStationaryMassError,
)

LN2 = math.log(2.0)

# default tolerances; every consumer can override through keyword arguments
ROW_SUM_TOL = 1e-12
STATIONARY_RESIDUAL_TOL = 1e-10
REVERSAL_ROW_SUM_TOL = 1e-10
ZERO_MASS_TOL = 1e-14
MONOTONE_SLACK = 1e-12
GAP_K_CAP = 64
MARKOVIZE_STATE_CAP = 4096


@dataclass(frozen=True)
class StateSpace:
    """Finite state space: a size and optional human-readable labels."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise RangeError("state space must have at least one state")
        if self.labels is not None and len(self.labels) != self.size:
            raise DimensionMismatchError(
                f"{len(self.labels)} labels for {self.size} states")


class TransitionKernel:
    """Validated row-stochastic matrix.

    Parameters
    ----------
    matrix : array_like, shape (S, S)
        Row ``x`` is the law of the next state given current state ``x``.
    require_primitive : bool
        When True (default) reject kernels that are not primitive
        (irreducible and aperiodic); primitivity is what guarantees a
        unique stationary law and uniform ergodicity.  Deterministic 0/1
        kernels fail this; pass False to study them anyway.
    row_sum_tol : float
        Largest tolerated deviation of a row sum from 1.

    Raises
    ------
    DimensionMismatchError
        Non-square or empty input.
    RangeError
        Entries outside [0, 1] or a row sum off by more than ``row_sum_tol``
        (the message names the offending row).
    NonPrimitiveError
        Kernel not primitive and ``require_primitive`` is True.
    """

    def __init__(self, matrix, require_primitive: bool = True,
                 row_sum_tol: float = ROW_SUM_TOL):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise DimensionMismatchError(
                f"kernel must be a non-empty square matrix, got shape {m.shape}")
        if np.any(m < 0.0) or np.any(m > 1.0):
            raise RangeError("kernel entries must lie in [0, 1]")
        sums = m.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > row_sum_tol)[0]
        if bad.size:
            raise RangeError(
                f"row {bad[0]} sums to {sums[bad[0]]:.17g}, not 1")
        m.setflags(write=False)
        self.matrix = m
        self.size = int(m.shape[0])
        self._primitive: bool | None = None
        if require_primitive and not self.primitive:
            raise NonPrimitiveError(
                "kernel is not primitive (irreducible and aperiodic)")

    @property
    def primitive(self) -> bool:
        if self._primitive is None:
            self._primitive = is_primitive(self.matrix)
        return self._primitive

    def __repr__(self):  # pragma: no cover
        return f"TransitionKernel(size={self.size})"


def is_primitive(matrix: np.ndarray) -> bool:
    """Primitivity test by boolean matrix powers.

    Repeatedly squares the positivity pattern until the exponent passes the
    Wielandt bound (S-1)^2 + 1, returning early on the first all-positive
    power.  Once some power is all-positive every later power is too (each
    row has a positive entry), so squaring cannot skip over positivity.
    """
    s = matrix.shape[0]
    if s == 1:
        return matrix[0, 0] > 0.0
    # positivity pattern in {0,1}; float dtype so BLAS does the matmul
    c = (matrix > 0.0).astype(float)
    bound = (s - 1) ** 2 + 1
    exponent = 1
    while True:
        if np.all(c > 0.0):
            return True
        if exponent >= bound:
            return False
        c = ((c @ c) > 0.0).astype(float)
        exponent *= 2


def stationary_distribution(kernel: TransitionKernel,
                            residual_tol: float = STATIONARY_RESIDUAL_TOL) -> np.ndarray:
    """Stationary law Q solving QK = Q, sum(Q) = 1.

    Direct linear solve with the last balance equation replaced by the
    normalization constraint; for a primitive kernel the solution is unique
    and strictly positive.

    Raises
    ------
    NumericalFailureError
        Singular system, negative mass beyond round-off, or residual
        ||QK - Q||_1 above ``residual_tol``.
    """
    k = kernel.matrix
    s = kernel.size
    a = k.T - np.eye(s)
    a[-1, :] = 1.0
    rhs = np.zeros(s)
    rhs[-1] = 1.0
    try:
        q = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"stationary solve failed: {exc}") from exc
    if np.any(q < -1e-12):
        raise NumericalFailureError("stationary solve produced negative mass")
    q = np.clip(q, 0.0, None)
    q /= q.sum()
    residual = np.abs(q @ k - q).sum()
    if residual > residual_tol:
        raise NumericalFailureError(
            f"stationary residual {residual:.3e} exceeds {residual_tol:.1e}")
    return q


def _stationary_by_power_iteration(matrix: np.ndarray, tol: float = 1e-13,
                                   max_steps: int = 10 ** 6) -> np.ndarray:
    # slow independent oracle for the direct solve; used by tests
    s = matrix.shape[0]
    q = np.full(s, 1.0 / s)
    for _ in range(max_steps):
        nxt = q @ matrix
        if np.abs(nxt - q).sum() <= tol:
            return nxt / nxt.sum()
        q = nxt
    raise NumericalFailureError("power iteration did not converge")


def total_variation(p, q) -> float:
    """Total variation distance between two laws on the same finite space."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise DimensionMismatchError(
            f"laws must be 1-d with equal length, got {p.shape} and {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def distance_profile(kernel: TransitionKernel, q: np.ndarray,
                     horizon: int) -> np.ndarray:
    """Worst-start distances d(t) = max_x TV(K^t(x, .), Q) for t = 0..horizon.

    Computed from exact dense matrix powers; d(0) = 1 - min(Q).
    """
    if horizon < 0:
        raise RangeError("horizon must be >= 0")
    k = kernel.matrix
    power = np.eye(kernel.size)
    out = np.empty(horizon + 1)
    for t in range(horizon + 1):
        out[t] = 0.5 * np.abs(power - q[None, :]).sum(axis=1).max()
        if t < horizon:
            power = power @ k
    return out


@dataclass(frozen=True)
class MixingProfile:
    """Distance-to-stationarity profile with the induced mixing certificate.

    ``d_values[t]`` is the worst-start TV distance after t steps; ``t_mix``
    the first t with d(t) <= epsilon_level; (certificate_c, certificate_rho)
    = (2, 2^(-1/t_mix)) dominates the profile: d(t) <= C * rho^t.
    """

    d_values: np.ndarray
    t_mix: int
    epsilon_level: float = 0.25
    certificate_c: float = 2.0
    certificate_rho: float = field(default=0.0)

    def __post_init__(self):
        if self.t_mix < 1:
            raise RangeError("mixing time must be >= 1")
        d = np.asarray(self.d_values, dtype=float)
        if np.any(d[1:] - d[:-1] > MONOTONE_SLACK):
            raise NumericalFailureError("distance profile is not non-increasing")
        object.__setattr__(self, "d_values", d)
        if self.certificate_rho == 0.0:
            object.__setattr__(self, "certificate_rho",
                               math.exp(-LN2 / self.t_mix))

    def certificate_curve(self, horizon: int) -> np.ndarray:
        t = np.arange(horizon + 1)
        return self.certificate_c * self.certificate_rho ** t


def mixing_time(kernel: TransitionKernel, level: float = 0.25,
                q: np.ndarray | None = None, horizon: int | None = None,
                cap: int | None = None) -> MixingProfile:
    """Mixing profile up to max(t_mix, horizon) at threshold ``level``.

    Parameters
    ----------
    level : float
        TV threshold defining t_mix, in (0, 1); default 1/4.
    horizon : int, optional
        Extend the stored profile past t_mix (for plotting/domination tests).
    cap : int, optional
        Step cap for the search, default 10 * S**2.

    Raises
    ------
    HorizonExceededError
        d(t) stays above ``level`` through the cap.
    """
    if not 0.0 < level < 1.0:
        raise RangeError("level must lie in (0, 1)")
    if q is None:
        q = stationary_distribution(kernel)
    if cap is None:
        cap = 10 * kernel.size ** 2
    k = kernel.matrix
    power = np.eye(kernel.size)
    d_values = []
    t_mix = None
    t = 0
    while True:
        d = 0.5 * np.abs(power - q[None, :]).sum(axis=1).max()
        d_values.append(d)
        if t_mix is None and d <= level:
            t_mix = t
        if t_mix is not None and (horizon is None or t >= horizon):
            break
        if t_mix is None and t >= cap:
            raise HorizonExceededError(
                f"d(t) > {level} for all t <= {cap}")
        power = power @ k
        t += 1
    # d(0) = 1 - min(Q) >= 1/2 for S >= 2, so t_mix >= 1 at any level <= 1/2;
    # guard anyway for exotic levels
    t_mix = max(int(t_mix), 1)
    return MixingProfile(d_values=np.array(d_values), t_mix=t_mix,
                         epsilon_level=level)


def time_reversal(kernel: TransitionKernel, q: np.ndarray,
                  zero_mass_tol: float = ZERO_MASS_TOL,
                  row_sum_tol: float = REVERSAL_ROW_SUM_TOL) -> TransitionKernel:
    """Time-reversed kernel K*(x, z) = Q(z) K(z, x) / Q(x).

    Raises
    ------
    ZeroStationaryMassError
        Some Q(x) <= ``zero_mass_tol``.
    NumericalFailureError
        A reversed row sum drifts from 1 by more than ``row_sum_tol``.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (kernel.size,):
        raise DimensionMismatchError("stationary law has wrong length")
    if np.any(q <= zero_mass_tol):
        raise ZeroStationaryMassError(
            f"stationary mass <= {zero_mass_tol:.1e} at state "
            f"{int(np.argmin(q))}")
    rev = (q[None, :] * kernel.matrix.T) / q[:, None]
    sums = rev.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > row_sum_tol):
        raise NumericalFailureError("reversed rows do not sum to 1")
    rev /= sums[:, None]
    # reversal preserves the positivity pattern transpose, hence primitivity
    return TransitionKernel(rev, require_primitive=False)


@dataclass(frozen=True)
class SpectralDiagnostics:
    """Pseudo-spectral gap search result.

    ``gammas[i]`` is gamma_k at k = i + 1, where gamma_k =
    (1 - lambda_2((K*)^k K^k)) / k; ``gamma_ps`` is the max over the searched
    range and ``argmax_k`` its argument.  ``k_stop`` is where the search
    terminated: the first k >= 1/max (no later k can beat the running max,
    because gamma_k <= 1/k) or the hard cap.
    """

    gamma_ps: float
    argmax_k: int
    gammas: tuple[float, ...]
    k_stop: int


def pseudo_spectral_gap(kernel: TransitionKernel, q: np.ndarray | None = None,
                        k_cap: int = GAP_K_CAP) -> SpectralDiagnostics:
    """Pseudo-spectral gap gamma_ps = max_k gamma((K*)^k K^k) / k.

    Each multiplicative reversiblization A_k = (K*)^k K^k is similar to a
    symmetric matrix via D = diag(sqrt(Q)), so its spectrum is computed with
    a symmetric eigensolver on D A_k D^{-1}.  Early k can give gamma_k = 0
    (A_k rank-deficient happens for embedded higher-order chains); the stop
    rule k >= 1/max only engages once the running max is positive.

    Raises
    ------
    EigensolverFailureError
        LAPACK failed to converge.
    NumericalFailureError
        Symmetrized matrix has asymmetry beyond tolerance (wrong Q) or an
        eigenvalue far outside [0, 1].
    """
    if kernel.size < 2:
        raise DimensionMismatchError("need at least 2 states for a spectral gap")
    if q is None:
        q = stationary_distribution(kernel)
    rev = time_reversal(kernel, q).matrix
    k_mat = kernel.matrix
    sqrt_q = np.sqrt(q)
    forward = np.eye(kernel.size)
    backward = np.eye(kernel.size)
    gammas = []
    best = 0.0
    best_k = 0
    k = 0
    while k < k_cap:
        k += 1
        forward = forward @ k_mat
        backward = backward @ rev
        a_k = backward @ forward
        sym = sqrt_q[:, None] * a_k / sqrt_q[None, :]
        asym = np.abs(sym - sym.T).max()
        if asym > 1e-8:
            raise NumericalFailureError(
                f"reversiblization not symmetric (residual {asym:.3e}); "
                "stationary law is inconsistent with the kernel")
        try:
            eigenvalues = np.linalg.eigvalsh(0.5 * (sym + sym.T))
        except np.linalg.LinAlgError as exc:
            raise EigensolverFailureError(str(exc)) from exc
        lam2 = eigenvalues[-2]
        if lam2 > 1.0 + 1e-8 or lam2 < -1e-8:
            raise NumericalFailureError(
                f"eigenvalue {lam2!r} of A_{k} outside [0, 1]")
        lam2 = min(max(lam2, 0.0), 1.0)
        gammas.append((1.0 - lam2) / k)
        if gammas[-1] > best:
            best = gammas[-1]
            best_k = k
        if best > 0.0 and k >= 1.0 / best:
            break
    return SpectralDiagnostics(gamma_ps=best, argmax_k=best_k,
                               gammas=tuple(gammas), k_stop=k)


@dataclass(frozen=True)
class HigherOrderChainSpec:
    """Order-k chain on symbols {0..S-1} given by its conditional law.

    ``conditional`` has shape (S**order, S): row c is the law of the next
    symbol given the last ``order`` symbols, where context c encodes those
    symbols most-recent-first (the previous symbol is the most significant
    base-S digit).
    """

    symbols: int
    order: int
    conditional: np.ndarray

    def __post_init__(self):
        if self.symbols < 2:
            raise RangeError("need at least 2 symbols")
        if self.order < 1:
            raise RangeError("order must be >= 1")
        cond = np.array(self.conditional, dtype=float)
        expected = (self.symbols ** self.order, self.symbols)
        if cond.shape != expected:
            raise DimensionMismatchError(
                f"conditional must have shape {expected}, got {cond.shape}")
        if np.any(cond < 0.0) or np.any(cond > 1.0):
            raise RangeError("conditional entries must lie in [0, 1]")
        sums = cond.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
        if bad.size:
            raise RangeError(
                f"conditional row {bad[0]} sums to {sums[bad[0]]:.17g}, not 1")
        cond.setflags(write=False)
        object.__setattr__(self, "conditional", cond)

    @classmethod
    def from_kernel(cls, matrix) -> "HigherOrderChainSpec":
        """Order-1 spec from a plain transition matrix."""
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError("kernel must be square")
        return cls(symbols=m.shape[0], order=1, conditional=m)


class MarkovizedChain:
    """First-order chain on tuples (Y_t, ..., Y_{t-p}) embedding an order-k chain.

    Composite labels are base-S integers with the most recent symbol most
    significant: x = Y_t * S^p + Y_{t-1} * S^{p-1} + ... + Y_{t-p}.  A step
    appending symbol y maps x to y * S^p + x // S.  Derived indices:

    - target(x)    = x // S^p           (the symbol a predictor must guess)
    - features(x)  = x mod S^p          (the p symbols it may look at)
    - a memory-q predictor reads features(x) // S^(p-q)
    - the next-symbol law of x is conditional row x // S^(p+1-k)

    Construct through :func:`markovize`.
    """

    def __init__(self, base: HigherOrderChainSpec, embedding_order: int,
                 kernel: TransitionKernel, stationary: np.ndarray):
        self.base = base
        self.embedding_order = embedding_order
        self.kernel = kernel
        self.stationary = stationary
        s = base.symbols
        p = embedding_order
        n = kernel.size
        self.n_states = n
        self.states = StateSpace(
            size=n,
            labels=tuple(",".join(map(str, self.decode(x))) for x in range(n)))
        xs = np.arange(n)
        self.targets = xs // s ** p
        self.feature_index = xs % s ** p
        # per-row inverse-cdf tables for the sampler; the forced final 1.0
        # makes u < 1 always select a positive-mass successor
        self._cum_rows = []
        for row in kernel.matrix:
            c = np.cumsum(row)
            c[-1] = 1.0
            self._cum_rows.append(c.tolist())
        c = np.cumsum(stationary)
        c[-1] = 1.0
        self._cum_stationary = c.tolist()

    @property
    def symbols(self) -> int:
        return self.base.symbols

    def decode(self, label: int) -> tuple[int, ...]:
        """Composite label -> (Y_t, Y_{t-1}, ..., Y_{t-p})."""
        s = self.base.symbols
        out = []
        for _ in range(self.embedding_order + 1):
            out.append(label % s)
            label //= s
        return tuple(reversed(out))

    def encode(self, syms) -> int:
        """(Y_t, Y_{t-1}, ..., Y_{t-p}) -> composite label."""
        syms = tuple(int(v) for v in syms)
        if len(syms) != self.embedding_order + 1:
            raise DimensionMismatchError(
                f"need {self.embedding_order + 1} symbols, got {len(syms)}")
        s = self.base.symbols
        label = 0
        for v in syms:
            if not 0 <= v < s:
                raise RangeError(f"symbol {v} outside [0, {s})")
            label = label * s + v
        return label

    def context_index(self, order_q: int):
        """Per-state memory-q context indices (vectorized)."""
        p = self.embedding_order
        if not 0 <= order_q <= p:
            raise RangeError(f"memory order must lie in [0, {p}]")
        return self.feature_index // self.base.symbols ** (p - order_q)

    def symbol_marginal(self) -> np.ndarray:
        """Stationary law of a single symbol (projection of the tuple law)."""
        out = np.zeros(self.base.symbols)
        np.add.at(out, self.targets, self.stationary)
        return out


def markovize(base: HigherOrderChainSpec, embedding_order: int,
              state_cap: int = MARKOVIZE_STATE_CAP,
              require_primitive: bool = True) -> MarkovizedChain:
    """Embed an order-k chain as a first-order chain on (p+1)-tuples.

    Parameters
    ----------
    base : HigherOrderChainSpec
    embedding_order : int
        p >= base.order; predictors built on the result may consult up to
        p past symbols.
    state_cap : int
        Reject composite spaces larger than this (S**(p+1) states).
    require_primitive : bool
        The composite kernel of a strictly positive conditional is always
        primitive; conditionals with structural zeros leave unreachable
        tuple states and fail the check.  Pass False to build anyway (e.g.
        to study deterministic chains).

    Raises
    ------
    RangeError, SizeOverflowError, NonPrimitiveError
    """
    k = base.order
    p = embedding_order
    s = base.symbols
    if p < k:
        raise RangeError(f"embedding order {p} < base order {k}")
    n = s ** (p + 1)
    if n > state_cap:
        raise SizeOverflowError(
            f"composite space needs {n} states, cap is {state_cap}")
    xs = np.arange(n)
    shifted = xs // s
    ctx = xs // s ** (p + 1 - k)
    matrix = np.zeros((n, n))
    for y in range(s):
        matrix[xs, y * s ** p + shifted] = base.conditional[ctx, y]
    kernel = TransitionKernel(matrix, require_primitive=require_primitive)
    if kernel.primitive:
        stationary = stationary_distribution(kernel)
    else:
        # no unique stationary law; use a uniform placeholder so sampling
        # from explicit starts still works
        stationary = np.full(n, 1.0 / n)
    return MarkovizedChain(base, p, kernel, stationary)

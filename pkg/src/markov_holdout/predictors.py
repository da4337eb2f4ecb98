"""Finite-memory predictors, losses, and exact/empirical risks.

A predictor is a lookup table from the q most recent past symbols to a
predicted next symbol.  Risks are taken under the composite stationary law
(exact) or along a sampled validation segment (empirical).  Ties are always
broken toward the lowest symbol / lowest candidate index; with argmin-style
numpy reductions that is the first minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import MarkovizedChain
from .errors import (
    DimensionMismatchError,
    EmptySegmentError,
    RangeError,
)


@dataclass(frozen=True)
class LossSpec:
    """Loss table L[prediction, outcome] with entries in [0, 1]."""

    table: np.ndarray
    name: str = "loss"

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 2:
            raise DimensionMismatchError(
                f"loss table must be square with >= 2 symbols, got {t.shape}")
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise RangeError("loss entries must lie in [0, 1]")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def symbols(self) -> int:
        return self.table.shape[0]

    @classmethod
    def misclassification(cls, symbols: int) -> "LossSpec":
        return cls(table=1.0 - np.eye(symbols), name="misclassification")


@dataclass(frozen=True)
class PredictorTable:
    """Memory-q predictor: table[context] = predicted symbol.

    Contexts code the q most recent past symbols most-recent-first, exactly
    like composite feature indices, so an order-q predictor applied to a
    chain embedded at order p >= q reads features // S**(p-q).
    """

    order: int
    symbols: int
    table: np.ndarray

    def __post_init__(self):
        if self.order < 0:
            raise RangeError("memory order must be >= 0")
        if self.symbols < 2:
            raise RangeError("need at least 2 symbols")
        t = np.array(self.table, dtype=np.int64)
        if t.shape != (self.symbols ** self.order,):
            raise DimensionMismatchError(
                f"table must have length {self.symbols ** self.order}, "
                f"got {t.shape}")
        if np.any(t < 0) or np.any(t >= self.symbols):
            raise RangeError("predictions must be symbols in [0, S)")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def predictions(self, chain: MarkovizedChain) -> np.ndarray:
        """Predicted symbol for every composite state of ``chain``."""
        if self.symbols != chain.symbols:
            raise DimensionMismatchError("symbol count mismatch")
        return self.table[chain.context_index(self.order)]


def state_losses(predictor: PredictorTable, chain: MarkovizedChain,
                 loss: LossSpec) -> np.ndarray:
    """Per-composite-state loss: L(g(features(x)), target(x))."""
    if loss.symbols != chain.symbols:
        raise DimensionMismatchError("loss table symbol count mismatch")
    return loss.table[predictor.predictions(chain), chain.targets]


def exact_risk(predictor: PredictorTable, chain: MarkovizedChain,
               loss: LossSpec) -> float:
    """Stationary risk E_Q[L(g(features), target)]."""
    return float(chain.stationary @ state_losses(predictor, chain, loss))


def loss_variance(predictor: PredictorTable, chain: MarkovizedChain,
                  loss: LossSpec) -> float:
    """Exact stationary variance of the per-state loss (canonical V proxy)."""
    ell = state_losses(predictor, chain, loss)
    mean = chain.stationary @ ell
    return float(chain.stationary @ (ell - mean) ** 2)


def empirical_risk(predictor: PredictorTable, chain: MarkovizedChain,
                   segment: np.ndarray, loss: LossSpec, burn: int = 0) -> float:
    """Mean loss over segment[burn:].

    Raises
    ------
    EmptySegmentError
        Fewer than one state remains after the burn-in.
    """
    segment = np.asarray(segment)
    if burn < 0:
        raise RangeError("burn-in must be >= 0")
    if len(segment) - burn < 1:
        raise EmptySegmentError(
            f"segment of {len(segment)} states with burn-in {burn} is empty")
    ell = state_losses(predictor, chain, loss)
    return float(ell[segment[burn:]].mean())


def bayes_predictor(chain: MarkovizedChain, loss: LossSpec) -> PredictorTable:
    """Risk-minimizing full-memory predictor, ties to the lowest symbol.

    For each length-p context the prediction minimizes the expected loss
    under the base conditional law of the next symbol.
    """
    base = chain.base
    s = base.symbols
    p = chain.embedding_order
    contexts = np.arange(s ** p)
    rows = base.conditional[contexts // s ** (p - base.order)]
    expected = rows @ loss.table.T          # (S^p, S): cost of predicting y
    return PredictorTable(order=p, symbols=s,
                          table=np.argmin(expected, axis=1))


def erm_fit(chain: MarkovizedChain, order_q: int, learn: np.ndarray,
            loss: LossSpec) -> PredictorTable:
    """Per-context empirical risk minimizer over the learning states.

    Every learning state contributes one (context, target) pair; each seen
    context predicts the symbol minimizing the summed training loss against
    the observed targets (ties to the lowest symbol).  Contexts never seen
    fall back to the globally most frequent target.
    """
    learn = np.asarray(learn)
    if len(learn) < 1:
        raise EmptySegmentError("cannot fit on an empty learning segment")
    s = chain.symbols
    contexts = chain.context_index(order_q)[learn]
    targets = chain.targets[learn]
    counts = np.zeros((s ** order_q, s))
    np.add.at(counts, (contexts, targets), 1.0)
    cost = counts @ loss.table.T
    table = np.argmin(cost, axis=1)
    seen = counts.sum(axis=1) > 0
    if not seen.all():
        global_counts = np.bincount(targets, minlength=s)
        table[~seen] = int(np.argmax(global_counts))
    return PredictorTable(order=order_q, symbols=s, table=table)


@dataclass(frozen=True)
class CandidateFamily:
    """Memory orders to fit as competing candidates."""

    orders: tuple[int, ...]

    def __post_init__(self):
        if len(self.orders) < 1:
            raise RangeError("need at least one candidate order")
        if any(q < 0 for q in self.orders):
            raise RangeError("orders must be >= 0")
        if len(set(self.orders)) != len(self.orders):
            raise RangeError("orders must be distinct")

    def fit(self, chain: MarkovizedChain, learn: np.ndarray,
            loss: LossSpec) -> list[PredictorTable]:
        return [erm_fit(chain, q, learn, loss) for q in self.orders]


@dataclass(frozen=True)
class RiskReport:
    """Exact and empirical risk of one candidate plus its excess over Bayes."""

    exact: float
    empirical: float
    excess: float


def holdout_select(candidates, chain: MarkovizedChain, segment: np.ndarray,
                   loss: LossSpec, burn: int = 0):
    """Index of the empirical-risk minimizer on the validation segment.

    Returns (index, empirical risks); ties go to the lowest index.
    """
    if len(candidates) < 1:
        raise RangeError("need at least one candidate")
    risks = np.array([empirical_risk(g, chain, segment, loss, burn)
                      for g in candidates])
    return int(np.argmin(risks)), risks


def oracle_select(candidates, chain: MarkovizedChain, loss: LossSpec):
    """Index of the exact-risk minimizer; ties go to the lowest index."""
    if len(candidates) < 1:
        raise RangeError("need at least one candidate")
    risks = np.array([exact_risk(g, chain, loss) for g in candidates])
    return int(np.argmin(risks)), risks


def conditional_risk(predictor: PredictorTable, chain: MarkovizedChain,
                     x_last: int, horizon_b: int, loss: LossSpec) -> float:
    """Risk of the state b+1 steps after conditioning on X_n = x_last."""
    if not 0 <= x_last < chain.n_states:
        raise RangeError(f"state {x_last} outside [0, {chain.n_states})")
    if horizon_b < 0:
        raise RangeError("horizon must be >= 0")
    row = np.linalg.matrix_power(chain.kernel.matrix, horizon_b + 1)[x_last]
    return float(row @ state_losses(predictor, chain, loss))


def disagreement_variance(g: PredictorTable, g_star: PredictorTable,
                          chain: MarkovizedChain) -> float:
    """Variance D(1-D) of the disagreement indicator under the tuple law."""
    d = float(chain.stationary @ (g.predictions(chain) !=
                                  g_star.predictions(chain)))
    return d * (1.0 - d)

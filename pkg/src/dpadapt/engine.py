"""Adaptive FDR control loop over masked noisy p-values.

The loop owns the information barrier: threshold updaters only ever see a
MaskedTable, which exposes the fold minimum min(p, 1-p) for every hypothesis
and the actual value only once it lies strictly between the thresholds
(where it can no longer be rejected or serve as a control). Thresholds may
only shrink, so values revealed once stay revealed, and the analyst's
knowledge grows monotonically while the estimate

    fdr_hat = (1 + A_t) / max(R_t, 1)

uses the large-value count A_t as a stand-in for false rejections among the
R_t small ones. The loop stops the first time fdr_hat <= alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .privacy import PrivacyBudget
from .selection import mirror_peel
from .transform import TransformKernel, clamp_unit


class StallError(RuntimeError):
    """Updater failed to shrink the candidate set; the loop would not terminate."""


class ThresholdMonotonicityError(RuntimeError):
    """Updater proposed thresholds above the current ones."""


@dataclass(frozen=True)
class MaskedPValue:
    """Single-hypothesis masked view: fold minimum always, value only if open."""

    id: int
    masked_min: float
    revealed: float | None

    def __post_init__(self):
        if not 0.0 <= self.masked_min <= 0.5:
            raise ValueError(f"masked_min must lie in [0, 0.5], got {self.masked_min!r}")
        if self.revealed is not None:
            folded = min(self.revealed, 1.0 - self.revealed)
            if not math.isclose(folded, self.masked_min, rel_tol=0.0, abs_tol=1e-12):
                raise ValueError("revealed value inconsistent with masked_min")


@dataclass(frozen=True)
class MaskedTable:
    """Vectorized masked view handed to threshold updaters.

    revealed is NaN wherever the value is still hidden; nothing in this
    structure allows reconstructing which side of 1/2 a hidden value is on.
    """

    ids: np.ndarray
    masked_min: np.ndarray
    revealed: np.ndarray

    @property
    def size(self) -> int:
        return int(self.ids.size)

    def records(self) -> list[MaskedPValue]:
        out = []
        for i in range(self.size):
            r = self.revealed[i]
            out.append(
                MaskedPValue(
                    id=int(self.ids[i]),
                    masked_min=float(self.masked_min[i]),
                    revealed=None if np.isnan(r) else float(r),
                )
            )
        return out


@dataclass
class ThresholdState:
    """Per-hypothesis thresholds plus the counters derived from them."""

    s: np.ndarray
    t: int
    a_t: int
    r_t: int


@dataclass(frozen=True)
class RejectionReport:
    """Outcome of one adaptive run.

    selected/noisy_p give the privatized values in selection order; rejected
    is the subset with noisy_p <= final threshold. trajectory rows are
    (t, A_t, R_t, fdr_hat) for every step including the stopping one.
    """

    rejected: tuple[int, ...]
    selected: tuple[int, ...]
    noisy_p: tuple[float, ...]
    trajectory: tuple[tuple[int, int, int, float], ...]
    stop_t: int
    final_thresholds: tuple[float, ...]
    config: dict
    model: dict | None

    def final_state(self) -> "ThresholdState":
        t, a_t, r_t, _ = self.trajectory[-1]
        return ThresholdState(s=np.array(self.final_thresholds), t=t, a_t=a_t, r_t=r_t)


@runtime_checkable
class ThresholdUpdater(Protocol):
    """Contract for threshold update rules.

    propose receives only the masked view, public covariates, the counters,
    and the current thresholds; it must return elementwise smaller-or-equal
    thresholds that strictly shrink the candidate set {masked_min <= s}.
    """

    def propose(
        self,
        masked: MaskedTable,
        x: np.ndarray | None,
        a_t: int,
        r_t: int,
        s: np.ndarray,
    ) -> np.ndarray: ...


def fdr_hat(a_t: int, r_t: int) -> float:
    """(1 + A_t) / max(R_t, 1)."""
    if a_t < 0 or r_t < 0:
        raise ValueError("counters must be non-negative")
    return (1.0 + a_t) / max(r_t, 1)


def _adapt_loop(
    ids: np.ndarray,
    pvals: np.ndarray,
    x: np.ndarray | None,
    alpha: float,
    s0: float,
    updater: ThresholdUpdater,
    config: dict,
) -> RejectionReport:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not 0.0 < s0 < 0.5:
        raise ValueError(f"s0 must lie in (0, 0.5), got {s0!r}")
    p = clamp_unit(np.asarray(pvals, dtype=float))
    m = p.size
    ids = np.array(ids, dtype=int)
    masked_min = np.minimum(p, 1.0 - p)
    # the views handed to updaters alias these arrays; freeze them
    ids.setflags(write=False)
    masked_min.setflags(write=False)
    s = np.full(m, float(s0))
    trajectory = []
    t = 0
    while True:
        r_t = int(np.count_nonzero(p <= s))
        a_t = int(np.count_nonzero(p >= 1.0 - s))
        fh = fdr_hat(a_t, r_t)
        trajectory.append((t, a_t, r_t, fh))
        candidates = masked_min <= s
        n_candidates = int(np.count_nonzero(candidates))
        if fh <= alpha:
            rejected = ids[p <= s]
            break
        if n_candidates == 0:
            rejected = ids[:0]
            break
        revealed = np.where(~candidates, p, np.nan)
        revealed.setflags(write=False)
        table = MaskedTable(ids=ids, masked_min=masked_min, revealed=revealed)
        s_new = np.asarray(updater.propose(table, x, a_t, r_t, s.copy()), dtype=float)
        if s_new.shape != s.shape:
            raise ValueError("updater returned thresholds of the wrong shape")
        if np.any(s_new > s):
            raise ThresholdMonotonicityError("thresholds may only shrink")
        if np.array_equal(s_new, s):
            raise StallError("updater returned unchanged thresholds")
        if int(np.count_nonzero(masked_min <= s_new)) >= n_candidates:
            raise StallError("updater did not shrink the candidate set")
        s = np.maximum(s_new, 0.0)
        t += 1
        if t > m + 1:  # unreachable given the shrink checks; belt and braces
            raise StallError("loop exceeded the maximum possible step count")
    model = None
    diag = getattr(updater, "diagnostics", None)
    if callable(diag):
        model = diag()
    return RejectionReport(
        rejected=tuple(int(i) for i in rejected),
        selected=tuple(int(i) for i in ids),
        noisy_p=tuple(float(v) for v in p),
        trajectory=tuple(trajectory),
        stop_t=t,
        final_thresholds=tuple(float(v) for v in s),
        config=config,
        model=model,
    )


def run_dp_adapt(
    pvalues,
    x: np.ndarray | None,
    kernel: TransformKernel,
    delta_g: float,
    budget: PrivacyBudget,
    m: int,
    alpha: float,
    updater: ThresholdUpdater,
    rng: np.random.Generator,
    *,
    s0: float = 0.45,
    noise_family: str = "gaussian",
    zero_noise: bool = False,
) -> RejectionReport:
    """Privately pre-select m hypotheses, then run the adaptive loop on them.

    noise_family "gaussian" draws on the budget's mu; "laplace" requires the
    budget to carry its (epsilon, delta) pair. zero_noise disables all
    perturbation for oracle tests and marks the run non-private.
    """
    p = np.asarray(pvalues, dtype=float)
    if noise_family == "laplace" and not zero_noise and budget.epsilon is None:
        raise ValueError("laplace mode requires a budget built from (epsilon, delta)")
    selection = mirror_peel(
        p,
        kernel,
        delta_g,
        budget.mu,
        m,
        rng,
        noise_family=noise_family,
        epsilon=budget.epsilon,
        delta=budget.delta,
        zero_noise=zero_noise,
    )
    sel_x = None
    if x is not None:
        sel_x = np.asarray(x)[selection.indices]
    config = {
        "method": "dp-adapt",
        "n": int(p.size),
        "m": int(m),
        "alpha": float(alpha),
        "s0": float(s0),
        "delta_g": float(delta_g),
        "mu": float(budget.mu),
        "epsilon": budget.epsilon,
        "delta": budget.delta,
        "noise_family": noise_family,
        "kernel": kernel.name,
        "private": selection.private,
    }
    return _adapt_loop(selection.indices, selection.values, sel_x, alpha, s0, updater, config)


def run_adapt_nonprivate(
    pvalues,
    x: np.ndarray | None,
    alpha: float,
    updater: ThresholdUpdater,
    rng: np.random.Generator | None = None,
    *,
    s0: float = 0.45,
) -> RejectionReport:
    """Same loop without selection or noise: all hypotheses, raw p-values.

    rng is accepted for interface symmetry; the loop itself is deterministic.
    """
    del rng
    p = np.asarray(pvalues, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    ids = np.arange(p.size)
    config = {
        "method": "adapt",
        "n": int(p.size),
        "m": int(p.size),
        "alpha": float(alpha),
        "s0": float(s0),
        "private": False,
    }
    sel_x = np.asarray(x) if x is not None else None
    return _adapt_loop(ids, p, sel_x, alpha, s0, updater, config)

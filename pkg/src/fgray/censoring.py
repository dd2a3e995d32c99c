"""Kaplan-Meier estimate of the censoring distribution and IPCW risk grids.

The weighting scheme keeps subjects with a competing event in the
cause-1 risk set: their weight at a grid time t is the ratio of the
censoring survival at t to its value at their own event time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CAUSE1, CAUSE2, CENSORED, CompetingRisksData
from .errors import DataError, NumericError


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous piecewise-constant survival function.

    ``values[k]`` is the function value at and after ``jump_times[k]``;
    the value before the first jump is 1.
    """

    jump_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=np.float64)
        va = np.asarray(self.values, dtype=np.float64)
        if jt.shape != va.shape or jt.ndim != 1:
            raise ValueError("jump_times and values must be 1-d of equal length")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", va)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        padded = np.concatenate(([1.0], self.values))
        idx = np.searchsorted(self.jump_times, t, side="right")
        out = padded[idx]
        return out if out.ndim else float(out)


def km_censoring(data: CompetingRisksData) -> StepSurvival:
    """Product-limit estimator of the censoring survival function.

    Censorings (status 0) are the events of this curve; cause-1/2 events
    act as censorings for it.  The risk set at u is everyone with
    observed time >= u, which keeps subjects failing exactly at u in the
    denominator (events precede censorings at tied times).
    """
    X = data.times
    is_cens = data.status == CENSORED
    if not np.any(is_cens):
        return StepSurvival(np.empty(0), np.empty(0))
    cens_times, counts = np.unique(X[is_cens], return_counts=True)
    # at-risk count: #{i : X_i >= u}; X sorted once, suffix count via searchsorted
    Xs = np.sort(X)
    at_risk = data.n - np.searchsorted(Xs, cens_times, side="left")
    factors = 1.0 - counts / at_risk
    return StepSurvival(cens_times, np.cumprod(factors))


@dataclass(frozen=True)
class RiskGrid:
    """Cause-1 event-time grid with the IPCW weight matrix.

    weights[i, k] is the effective at-risk weight of subject i at event
    time k: 1 while t_k <= X_i, 0 after censoring or a cause-1 event,
    and G(t_k)/G(X_i) after a competing event.  ``at_risk_flags`` is the
    0/1 observable at-risk indicator before weighting.  Censoring times
    and the empirical at-risk proportion ``pi_hat`` are carried along
    for the influence-function integrals.
    """

    event_times: np.ndarray        # (K,) distinct, ascending, <= horizon
    event_counts: np.ndarray       # (K,) multiplicity of each event time
    weights: np.ndarray            # (n, K)
    at_risk_flags: np.ndarray      # (n, K) uint8
    censor_times: np.ndarray       # (C,) distinct observed censoring times
    censor_counts: np.ndarray      # (C,)
    pi_hat: np.ndarray             # (C,) n^{-1} #{X_j >= t_c}
    g_at_events: np.ndarray        # (K,) censoring survival at event times
    g_at_x: np.ndarray             # (n,) censoring survival at own time

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def n_event_times(self) -> int:
        return self.event_times.shape[0]


def build_risk_grid(data: CompetingRisksData, g_hat: StepSurvival) -> RiskGrid:
    """Materialize the IPCW weights on the cause-1 event-time grid.

    ``g_hat`` must come from :func:`km_censoring` on the same data.
    Raises :class:`NumericError` when a competing-event subject needs a
    weight past a time where the censoring survival has hit zero; that
    indicates the study horizon is too late for the observed follow-up.
    """
    X = data.times
    status = data.status
    is1 = status == CAUSE1
    if not np.any(is1):
        raise DataError("no cause-1 events: cannot build a risk grid")
    event_times, event_counts = np.unique(X[is1], return_counts=True)

    g_events = np.atleast_1d(g_hat(event_times))
    g_x = np.atleast_1d(g_hat(X))

    is2 = status == CAUSE2
    t_last = event_times[-1]
    degenerate = is2 & (g_x == 0.0) & (X < t_last)
    if np.any(degenerate):
        i = int(np.flatnonzero(degenerate)[0])
        raise NumericError(
            f"censoring survival is 0 at time {X[i]} but subject {i} "
            f"(competing event) still needs weights at later event times; "
            f"lower the study horizon"
        )

    before = X[:, None] >= event_times[None, :]          # t_k <= X_i
    flags = (before | is2[:, None]).astype(np.uint8)
    ratio = np.divide(
        np.broadcast_to(g_events[None, :], before.shape),
        np.broadcast_to(g_x[:, None], before.shape),
        out=np.zeros(before.shape),
        where=g_x[:, None] > 0,
    )
    weights = np.where(before, 1.0, np.where(is2[:, None], ratio, 0.0))

    is_cens = status == CENSORED
    if np.any(is_cens):
        censor_times, censor_counts = np.unique(X[is_cens], return_counts=True)
        Xs = np.sort(X)
        pi_hat = (data.n - np.searchsorted(Xs, censor_times, side="left")) / data.n
    else:
        censor_times = np.empty(0)
        censor_counts = np.empty(0, dtype=np.int64)
        pi_hat = np.empty(0)

    return RiskGrid(
        event_times=event_times,
        event_counts=event_counts,
        weights=weights,
        at_risk_flags=flags,
        censor_times=censor_times,
        censor_counts=censor_counts,
        pi_hat=pi_hat,
        g_at_events=g_events,
        g_at_x=g_x,
    )

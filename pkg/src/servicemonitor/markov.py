"""Markov-chain transition model of one application's service requests.

Each cataloged function is a state. For every position i in the event
sequence, later positions j are scanned upward and the edge
state(i) -> state(j) accumulates weight 1/(j - i); the scan stops at
the first reappearance of state(i), so an occurrence only links to
targets before its own next occurrence. Row-normalizing the resulting
weight matrix yields the transition-probability matrix.

Inverse-distance weighting makes near pairs dominate: an edge mostly
reflects direct request dependencies, with fading credit for longer
range ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import ServiceCatalog
from .errors import BoundsError, DomainError
from .trace import FunctionTrace

ROW_SUM_TOLERANCE = 1e-9


@dataclass
class TransitionModel:
    """Weight and probability matrices over the catalog's state space."""

    state_count: int
    weights: np.ndarray        # (s, s) non-negative, zero diagonal
    probabilities: np.ndarray  # (s, s) rows sum to 1 or are all zero


def transition_weights(events, state_count: int) -> np.ndarray:
    """Accumulate the inverse-distance edge weights for one event sequence.

    The scan from position i covers j = i+1 .. (next occurrence of the
    same state) - 1, adding 1/(j - i) to the edge toward state(j). The
    diagonal is never touched. Total work is O(state_count * len(events)):
    each state's scan gaps telescope to at most the trace length.
    """
    ev = np.asarray(list(events), dtype=np.int64)
    weights = np.zeros((state_count, state_count), dtype=np.float64)
    n = len(ev)
    if n and (ev.min() < 0 or ev.max() >= state_count):
        bad = int(ev[(ev < 0) | (ev >= state_count)][0])
        raise BoundsError(f"event id {bad} outside state space of size {state_count}")
    if n < 2:
        return weights

    # Position of the next occurrence of the same state, or n when none.
    next_same = np.full(n, n, dtype=np.int64)
    last_seen: dict[int, int] = {}
    for i in range(n - 1, -1, -1):
        s = int(ev[i])
        next_same[i] = last_seen.get(s, n)
        last_seen[s] = i

    inv_distance = 1.0 / np.arange(1, n, dtype=np.float64)

    # Group each position's scan segment by source state so each row is
    # accumulated with one bincount; bincount sums sequentially, keeping
    # the same addition order as the literal double loop.
    targets: list[list[np.ndarray]] = [[] for _ in range(state_count)]
    contribs: list[list[np.ndarray]] = [[] for _ in range(state_count)]
    for i in range(n):
        end = int(next_same[i])
        length = end - i - 1
        if length <= 0:
            continue
        src = int(ev[i])
        targets[src].append(ev[i + 1 : end])
        contribs[src].append(inv_distance[:length])
    for src in range(state_count):
        if not targets[src]:
            continue
        idx = np.concatenate(targets[src])
        wts = np.concatenate(contribs[src])
        weights[src] += np.bincount(idx, weights=wts, minlength=state_count)
    return weights


def normalize_rows(weights: np.ndarray) -> np.ndarray:
    """Divide each positive-sum row by its sum; all-zero rows stay zero."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise DomainError("transition weights must be non-negative")
    sums = w.sum(axis=1, keepdims=True)
    safe = np.where(sums > 0, sums, 1.0)
    return np.where(sums > 0, w / safe, 0.0)


def build_model(trace: FunctionTrace, catalog: ServiceCatalog) -> TransitionModel:
    """Weights plus row-normalized probabilities for one application."""
    state_count = len(catalog)
    weights = transition_weights(trace.events, state_count)
    return TransitionModel(
        state_count=state_count,
        weights=weights,
        probabilities=normalize_rows(weights),
    )

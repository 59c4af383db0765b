"""Action selection from a highway graph plus converged value tables.

Known intersections pick the argmax-Q first action, states inside a highway
replay the recorded action at their offset, and unseen states fall back to a
uniform random valid action.  An epsilon-greedy wrapper adds exploration on
top.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .highway_graph import HighwayGraph, locate, INTERSECTION, ON_HIGHWAY
from .transition_model import StateId, ActionId
from .value_iteration import ValueTables


@dataclass
class PolicySnapshot:
    """Immutable bundle of everything action selection needs.

    The tables must have been produced from exactly this graph topology.
    Randomness (unknown states, exploration) is fully determined by rng_seed
    unless the caller supplies its own generator per call.
    """

    graph: HighwayGraph
    tables: ValueTables
    action_count: int
    rng_seed: int = 0
    # optional hook: state -> iterable of valid actions (unused by the
    # bundled environments, which have no state-dependent masks)
    action_mask: Optional[Callable] = None
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        if self.action_count < 1:
            raise ValueError("action_count must be >= 1")
        self._rng = random.Random(self.rng_seed)


def greedy_action(graph: HighwayGraph, tables: ValueTables, s: StateId) -> ActionId | None:
    """Argmax-Q first action at an intersection; ties go to the lowest action.

    Returns None when the intersection has no outgoing highways.
    """
    best_a = None
    best_q = None
    for a in sorted(graph.out_edges.get(s, {})):
        q = tables.q[(s, a)]
        if best_q is None or q > best_q:
            best_a, best_q = a, q
    return best_a


def _random_action(snapshot: PolicySnapshot, s: StateId, rng: random.Random) -> ActionId:
    if snapshot.action_mask is not None:
        valid = list(snapshot.action_mask(s))
        return valid[rng.randrange(len(valid))]
    return rng.randrange(snapshot.action_count)


def select_action(snapshot: PolicySnapshot, s: StateId,
                  rng: random.Random | None = None) -> ActionId:
    """Greedy policy: argmax Q at intersections, recorded action on highways,
    uniform random for unknown states."""
    rng = rng if rng is not None else snapshot._rng
    loc = locate(snapshot.graph, s)
    if loc.kind == INTERSECTION:
        a = greedy_action(snapshot.graph, snapshot.tables, s)
        if a is not None:
            return a
        # terminal or frontier intersection: nothing recorded, act randomly
        return _random_action(snapshot, s, rng)
    if loc.kind == ON_HIGHWAY:
        return snapshot.graph.highways[loc.highway].actions[loc.offset]
    return _random_action(snapshot, s, rng)


def epsilon_greedy(snapshot: PolicySnapshot, s: StateId, epsilon: float,
                   rng: random.Random | None = None) -> ActionId:
    """With probability epsilon take a uniform random action, else be greedy."""
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError("epsilon must be in [0, 1]")
    rng = rng if rng is not None else snapshot._rng
    if epsilon > 0.0 and rng.random() < epsilon:
        return _random_action(snapshot, s, rng)
    return select_action(snapshot, s, rng)

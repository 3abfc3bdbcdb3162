"""Hybrid per-transition reward: oracle scores plus graph-derived terms.

The total is a plain sum of four components: oracle-judged progress and
semantic consistency (each in [0, 1]), the change in state potential, and
the binary novelty bonus. Ablation switches zero out the two graph-derived
components for the whole run.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractViolation
from .graph import StateGraph


@dataclass(frozen=True)
class RewardSwitches:
    """Run-level ablation toggles for the graph-derived components."""

    state: bool = True
    novel: bool = True


@dataclass(frozen=True)
class RewardBreakdown:
    progress: float
    semantics: float
    state: float
    novel: float

    @property
    def total(self) -> float:
        return self.progress + self.semantics + self.state + self.novel

    def to_dict(self) -> dict:
        return {
            "progress": self.progress,
            "semantics": self.semantics,
            "state": self.state,
            "novel": self.novel,
            "total": self.total,
        }


def evaluate_transition(graph: StateGraph, src: int, dst: int, is_new_dst: bool,
                        oracle_scores: tuple[float, float],
                        switches: RewardSwitches = RewardSwitches()) -> RewardBreakdown:
    """Combine oracle scores with graph rewards for one transition.

    Call this before recording the transition's skill edge: the state term
    must reflect pre-existing knowledge, not the edge being created.
    """
    progress, semantics = oracle_scores
    for name, score in (("progress", progress), ("semantics", semantics)):
        if not (0.0 <= score <= 1.0):
            raise ContractViolation(f"oracle {name} score {score} outside [0, 1]")
    state = graph.reward_state(src, dst) if switches.state else 0.0
    novel = graph.reward_novel(is_new_dst) if switches.novel else 0.0
    return RewardBreakdown(progress=progress, semantics=semantics, state=state, novel=novel)

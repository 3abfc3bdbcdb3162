"""Experience-driven skill evolution over a state-action graph memory."""

from .embedding import Embedding, SimilarityClass, SimilarityThresholds, classify, cosine
from .engine import Engine, EngineConfig, softmax, uct_score
from .graph import GraphConfig, GraphStats, StateGraph, skill_edge_weight
from .memory import AtomicAction, Operate, Skill, SkillMemory, SkillStatus, UIObject
from .oracle import ScriptedOracle
from .rewards import RewardBreakdown, RewardSwitches, evaluate_transition
from .trace import EpisodeTrace, episode_metrics
from .world import Simulator, World, generate_world

__version__ = "0.1.0"

__all__ = [
    "AtomicAction",
    "Embedding",
    "Engine",
    "EngineConfig",
    "EpisodeTrace",
    "GraphConfig",
    "GraphStats",
    "Operate",
    "RewardBreakdown",
    "RewardSwitches",
    "ScriptedOracle",
    "SimilarityClass",
    "SimilarityThresholds",
    "Simulator",
    "Skill",
    "SkillMemory",
    "SkillStatus",
    "StateGraph",
    "UIObject",
    "World",
    "classify",
    "cosine",
    "episode_metrics",
    "evaluate_transition",
    "generate_world",
    "skill_edge_weight",
    "softmax",
    "uct_score",
    "__version__",
]

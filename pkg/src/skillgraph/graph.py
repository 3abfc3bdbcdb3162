"""State-action graph: merged state nodes, similarity links, weighted skill edges.

Nodes are perceptual states deduplicated by cosine similarity. Undirected
similarity edges connect look-alike (but distinct) states so that skills
learned on one transfer to the other; directed skill edges record which
skill moved the agent between two states and how useful that move was.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol

import numpy as np

from .embedding import Embedding, SimilarityThresholds, classify, cosine, SimilarityClass
from .errors import ContractViolation, EmptyCandidatesError, NotFoundError

# Novelty bonus for discovering a new state vs revisiting a known one.
NEW_STATE_BONUS = 1.0
KNOWN_STATE_BONUS = 0.015


class SkillRegistry(Protocol):
    def has_skill(self, skill_id: int) -> bool: ...


@dataclass(frozen=True)
class GraphConfig:
    """Run-level knobs for graph construction and skill-edge weighting.

    ``alpha`` blends immediate visual change against accumulated skill
    fitness; ``fitness_half_saturation`` is the fitness value at which the
    fitness term reaches one half. ``similarity_edges=False`` is the
    isolation ablation: no merging and no similarity links, so every
    observation becomes its own node.
    """

    thresholds: SimilarityThresholds = field(default_factory=SimilarityThresholds)
    alpha: float = 0.7
    fitness_half_saturation: float = 5.0
    similarity_edges: bool = True

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ContractViolation("alpha must be in [0, 1]")
        if not self.fitness_half_saturation > 0:
            raise ContractViolation("fitness_half_saturation must be positive")


@dataclass
class StateNode:
    id: int
    embedding: Embedding
    visit_count: int
    first_seen_step: int


@dataclass
class SimilarityEdge:
    """Undirected link between two visually distinct, related states."""

    a: int
    b: int
    weight: float


@dataclass
class SkillEdge:
    """Directed record of a skill execution from ``src`` to ``dst``."""

    src: int
    dst: int
    skill_id: int
    weight: float
    traversal_count: int
    last_delta: float


@dataclass(frozen=True)
class GraphStats:
    nodes: int
    skill_edges: int
    similarity_edges: int


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def skill_edge_weight(delta: float, fitness: float, cfg: GraphConfig) -> float:
    """Edge weight: sigmoid of blended visual change and saturating fitness.

    Strictly increasing in both arguments, always inside (0, 1).
    """
    if not (0.0 <= delta <= 1.0):
        raise ContractViolation(f"delta {delta} outside [0, 1]")
    if fitness < 0:
        raise ContractViolation("fitness must be nonnegative")
    c0 = cfg.fitness_half_saturation
    z = cfg.alpha * delta + (1.0 - cfg.alpha) * fitness / (fitness + c0)
    return sigmoid(z)


class StateGraph:
    """Single-writer graph store with vectorized similarity scans."""

    def __init__(self, config: GraphConfig | None = None, dimension: int | None = None,
                 skill_registry: SkillRegistry | None = None):
        self.config = config or GraphConfig()
        self.dimension = dimension
        self.skill_registry = skill_registry
        self.nodes: dict[int, StateNode] = {}
        self.similarity_edges: dict[tuple[int, int], SimilarityEdge] = {}
        self.skill_edges: dict[tuple[int, int, int], SkillEdge] = {}
        self._next_id = 0
        # Unit-normalized node embeddings, row i = node id i (ids are dense).
        self._unit_matrix = np.zeros((0, 0), dtype=np.float64)
        self._rows = 0

    # -- node ingestion ----------------------------------------------------

    def ingest(self, embedding: Embedding, step: int) -> tuple[int, bool]:
        """Merge the observation into an existing node or create a new one.

        Returns ``(node_id, is_new)``. Merging picks the highest-cosine node
        above the merge threshold (ties to the lowest id) and bumps its visit
        count. A new node gets similarity edges to every node in the link
        band. With similarity edges disabled, every call creates a node.
        """
        if self.dimension is None:
            self.dimension = embedding.dimension
        elif embedding.dimension != self.dimension:
            raise ContractViolation(
                f"embedding dimension {embedding.dimension} != graph dimension {self.dimension}"
            )

        thresholds = self.config.thresholds
        sims = self._similarities_to_all(embedding)

        if self.config.similarity_edges and self._rows:
            above = sims > thresholds.merge_threshold
            if above.any():
                candidates = np.flatnonzero(above)
                best = candidates[np.argmax(sims[candidates])]
                # argmax returns the first (lowest-id) maximum, which is the
                # documented tie-break.
                node = self.nodes[int(best)]
                node.visit_count += 1
                return node.id, False

        node_id = self._append_node(embedding, step)
        if self.config.similarity_edges and self._rows > 1:
            for other_id in np.flatnonzero(
                (sims > thresholds.link_threshold) & (sims <= thresholds.merge_threshold)
            ):
                self._add_similarity_edge(int(other_id), node_id, float(sims[other_id]))
        return node_id, True

    def _append_node(self, embedding: Embedding, step: int) -> int:
        node_id = self._next_id
        self._next_id += 1
        self.nodes[node_id] = StateNode(node_id, embedding, visit_count=1, first_seen_step=step)
        unit = embedding.values / np.linalg.norm(embedding.values)
        if self._unit_matrix.shape[1] != embedding.dimension:
            self._unit_matrix = np.zeros((16, embedding.dimension), dtype=np.float64)
        if self._rows == self._unit_matrix.shape[0]:
            grown = np.zeros((self._rows * 2, embedding.dimension), dtype=np.float64)
            grown[: self._rows] = self._unit_matrix[: self._rows]
            self._unit_matrix = grown
        self._unit_matrix[self._rows] = unit
        self._rows += 1
        return node_id

    def _similarities_to_all(self, embedding: Embedding) -> np.ndarray:
        if self._rows == 0:
            return np.zeros(0, dtype=np.float64)
        unit = embedding.values / np.linalg.norm(embedding.values)
        return self._unit_matrix[: self._rows] @ unit

    def _add_similarity_edge(self, a: int, b: int, weight: float) -> None:
        if a == b:
            return
        key = (min(a, b), max(a, b))
        if key not in self.similarity_edges:
            self.similarity_edges[key] = SimilarityEdge(key[0], key[1], weight)

    # -- skill edges ---------------------------------------------------------

    def record_transition(self, src: int, dst: int, skill_id: int,
                          delta: float, fitness: float) -> SkillEdge:
        """Create or refresh the (src, dst, skill) edge with a new weight."""
        self._require_node(src)
        self._require_node(dst)
        if self.skill_registry is not None and not self.skill_registry.has_skill(skill_id):
            raise NotFoundError(f"skill {skill_id} not found")
        weight = skill_edge_weight(delta, fitness, self.config)
        key = (src, dst, skill_id)
        edge = self.skill_edges.get(key)
        if edge is None:
            edge = SkillEdge(src, dst, skill_id, weight, traversal_count=1, last_delta=delta)
            self.skill_edges[key] = edge
        else:
            edge.weight = weight
            edge.traversal_count += 1
            edge.last_delta = delta
        return edge

    def remove_skill_edges(self, skill_id: int) -> int:
        """Drop every edge referencing the skill; returns how many."""
        doomed = [k for k in self.skill_edges if k[2] == skill_id]
        for key in doomed:
            del self.skill_edges[key]
        return len(doomed)

    # -- queries ---------------------------------------------------------------

    def neighborhood(self, node_id: int) -> set[int]:
        """The node plus everything reachable over one similarity edge.

        The node itself is included so skills learned in place stay
        available. Under the isolation ablation no links exist, so this is
        always a singleton.
        """
        self._require_node(node_id)
        linked = {node_id}
        for (a, b) in self.similarity_edges:
            if a == node_id:
                linked.add(b)
            elif b == node_id:
                linked.add(a)
        return linked

    def candidate_skills(self, node_id: int) -> list[tuple[int, float]]:
        """High-quality skills pooled over the neighborhood's outgoing edges.

        A skill reachable via several edges takes its maximum weight.
        Returned sorted by skill id for reproducibility.
        """
        pool = self.neighborhood(node_id)
        best: dict[int, float] = {}
        for (src, _dst, skill_id), edge in self.skill_edges.items():
            if src in pool:
                prev = best.get(skill_id)
                if prev is None or edge.weight > prev:
                    best[skill_id] = edge.weight
        return sorted(best.items())

    @staticmethod
    def sample_skill(candidates: list[tuple[int, float]], rng: np.random.Generator) -> int:
        """Sample a skill id with probability proportional to its weight."""
        if not candidates:
            raise EmptyCandidatesError("no candidate skills to sample")
        weights = np.array([w for _, w in candidates], dtype=np.float64)
        if np.any(weights <= 0):
            raise ContractViolation("candidate weights must be positive")
        probs = weights / weights.sum()
        idx = int(rng.choice(len(candidates), p=probs))
        return candidates[idx][0]

    def state_potential(self, node_id: int) -> float:
        """Sum of outgoing skill-edge weights (self-loops count once)."""
        self._require_node(node_id)
        return sum(e.weight for (src, _d, _s), e in self.skill_edges.items() if src == node_id)

    def reward_state(self, src: int, dst: int) -> float:
        """Potential improvement of the transition, destination minus source.

        Must be computed before the transition's own edge is recorded so the
        reward reflects pre-existing knowledge only.
        """
        return self.state_potential(dst) - self.state_potential(src)

    @staticmethod
    def reward_novel(is_new_node: bool) -> float:
        return NEW_STATE_BONUS if is_new_node else KNOWN_STATE_BONUS

    def stats(self) -> GraphStats:
        return GraphStats(len(self.nodes), len(self.skill_edges), len(self.similarity_edges))

    def _require_node(self, node_id: int) -> StateNode:
        node = self.nodes.get(node_id)
        if node is None:
            raise NotFoundError(f"node {node_id} not found")
        return node

    # -- validation -------------------------------------------------------------

    def validate(self, check_merge_pairs: bool = True) -> None:
        """Re-check structural invariants; raises ContractViolation naming any breach.

        Used on snapshot load. The pairwise merge check is skipped when the
        isolation ablation is active (duplicates are then expected).
        """
        t = self.config.thresholds
        for node in self.nodes.values():
            if node.visit_count < 1:
                raise ContractViolation(f"invariant visit_count>=1 violated at node {node.id}")
            if self.dimension is not None and node.embedding.dimension != self.dimension:
                raise ContractViolation(f"invariant embedding-dimension violated at node {node.id}")
        if check_merge_pairs and self.config.similarity_edges and len(self.nodes) > 1:
            unit = self._unit_matrix[: self._rows]
            # Blockwise pairwise scan keeps memory bounded on big graphs.
            block = 512
            for start in range(0, self._rows, block):
                sims = unit[start : start + block] @ unit.T
                for i in range(sims.shape[0]):
                    row = start + i
                    hot = np.flatnonzero(sims[i] > t.merge_threshold)
                    hot = hot[hot != row]
                    if hot.size:
                        raise ContractViolation(
                            f"invariant no-merge-pair violated: nodes {row} and {int(hot[0])}"
                        )
        for (a, b), edge in self.similarity_edges.items():
            if a == b:
                raise ContractViolation(f"invariant no-self-similarity violated at node {a}")
            if a not in self.nodes or b not in self.nodes:
                raise ContractViolation(f"invariant similarity-endpoints violated on ({a}, {b})")
            if not (t.link_threshold < edge.weight <= t.merge_threshold):
                raise ContractViolation(
                    f"invariant similarity-weight-band violated on ({a}, {b}): {edge.weight}"
                )
        for (src, dst, skill_id), edge in self.skill_edges.items():
            if src not in self.nodes or dst not in self.nodes:
                raise ContractViolation(
                    f"invariant skill-edge-endpoints violated on ({src}, {dst}, {skill_id})"
                )
            if not (0.0 < edge.weight < 1.0):
                raise ContractViolation(
                    f"invariant skill-weight-range violated on ({src}, {dst}, {skill_id})"
                )
            if edge.traversal_count < 1:
                raise ContractViolation(
                    f"invariant traversal-count violated on ({src}, {dst}, {skill_id})"
                )
            if self.skill_registry is not None and not self.skill_registry.has_skill(skill_id):
                raise ContractViolation(
                    f"invariant skill-edge-refers-to-live-skill violated: skill {skill_id}"
                )

    # -- export / import -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "config": {
                "merge_threshold": self.config.thresholds.merge_threshold,
                "link_threshold": self.config.thresholds.link_threshold,
                "alpha": self.config.alpha,
                "fitness_half_saturation": self.config.fitness_half_saturation,
                "similarity_edges": self.config.similarity_edges,
                "dimension": self.dimension,
                "format_version": 1,
            },
            "nodes": [
                {
                    "id": n.id,
                    "embedding": n.embedding.tolist(),
                    "visit_count": n.visit_count,
                    "first_seen_step": n.first_seen_step,
                }
                for n in self.nodes.values()
            ],
            "similarity_edges": [
                {"a": e.a, "b": e.b, "weight": e.weight}
                for e in self.similarity_edges.values()
            ],
            "skill_edges": [
                {
                    "src": e.src,
                    "dst": e.dst,
                    "skill_id": e.skill_id,
                    "weight": e.weight,
                    "traversal_count": e.traversal_count,
                    "last_delta": e.last_delta,
                }
                for e in self.skill_edges.values()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, skill_registry: SkillRegistry | None = None) -> "StateGraph":
        cfg_d = data["config"]
        cfg = GraphConfig(
            thresholds=SimilarityThresholds(cfg_d["merge_threshold"], cfg_d["link_threshold"]),
            alpha=cfg_d["alpha"],
            fitness_half_saturation=cfg_d["fitness_half_saturation"],
            similarity_edges=cfg_d.get("similarity_edges", True),
        )
        graph = cls(cfg, dimension=cfg_d.get("dimension"), skill_registry=skill_registry)
        for nd in sorted(data["nodes"], key=lambda n: n["id"]):
            node_id = graph._append_node(Embedding(nd["embedding"]), nd["first_seen_step"])
            if node_id != nd["id"]:
                raise ContractViolation(
                    f"invariant dense-node-ids violated: expected {node_id}, got {nd['id']}"
                )
            graph.nodes[node_id].visit_count = nd["visit_count"]
        for ed in data["similarity_edges"]:
            a, b = int(ed["a"]), int(ed["b"])
            graph.similarity_edges[(min(a, b), max(a, b))] = SimilarityEdge(
                min(a, b), max(a, b), float(ed["weight"])
            )
        for ed in data["skill_edges"]:
            key = (int(ed["src"]), int(ed["dst"]), int(ed["skill_id"]))
            graph.skill_edges[key] = SkillEdge(
                key[0], key[1], key[2],
                float(ed["weight"]), int(ed["traversal_count"]), float(ed["last_delta"]),
            )
        return graph

    def to_dot(self, skill_names: Callable[[int], str] | None = None) -> str:
        """DOT rendering: blue undirected similarity links, red directed skill edges."""
        lines = ["digraph stategraph {"]
        for node in self.nodes.values():
            lines.append(f'  n{node.id} [label="s{node.id} ({node.visit_count}x)"];')
        for e in self.similarity_edges.values():
            lines.append(
                f'  n{e.a} -> n{e.b} [color=blue, dir=none, label="{e.weight:.3f}"];'
            )
        for e in self.skill_edges.values():
            name = skill_names(e.skill_id) if skill_names else f"skill {e.skill_id}"
            lines.append(
                f'  n{e.src} -> n{e.dst} [color=red, label="{name} {e.weight:.3f}"];'
            )
        lines.append("}")
        return "\n".join(lines) + "\n"

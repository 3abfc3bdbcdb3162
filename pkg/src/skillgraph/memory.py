"""Skill memory: the skill table, action clusters, UI objects, search stats.

Skills are ordered action sequences with a free-text descriptor and a
cumulative fitness score. Clusters group skills by the state embedding they
were learned in, so retrieval can stay contextual. Per-state bandit counts
live in :class:`SearchStats` and are kept separate from a skill's global
execution counter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .embedding import Embedding, cosine
from .errors import ContractViolation, NotFoundError


class Operate(Enum):
    CLICK = "Click"
    DRAG = "Drag"
    SCROLL = "Scroll"
    TYPE = "Type"


@dataclass(frozen=True)
class AtomicAction:
    operate: Operate
    object_id: int
    object_name: str = ""
    payload: str | None = None

    def to_dict(self) -> dict:
        d = {"operate": self.operate.value, "object_id": self.object_id,
             "object_name": self.object_name}
        if self.payload is not None:
            d["payload"] = self.payload
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AtomicAction":
        return cls(Operate(d["operate"]), int(d["object_id"]),
                   d.get("object_name", ""), d.get("payload"))


class SkillStatus(Enum):
    ACTIVE = "active"
    PRUNED = "pruned"


@dataclass
class Skill:
    id: int
    name: str
    descriptor: str
    actions: tuple[AtomicAction, ...]
    fitness: float = 0.0
    exec_count: int = 0
    created_step: int = 0
    status: SkillStatus = SkillStatus.ACTIVE
    last_total_reward: float | None = None

    @property
    def object_ids(self) -> tuple[int, ...]:
        return tuple(a.object_id for a in self.actions)


@dataclass
class UIObject:
    id: int
    name: str
    reference_descriptor: str = ""


@dataclass
class ActionCluster:
    id: int
    centroid: Embedding
    skill_ids: set[int] = field(default_factory=set)


@dataclass
class SearchStats:
    """Per-state bandit bookkeeping: selection counts and value sums."""

    node_id: int
    visits: dict[int, int] = field(default_factory=dict)        # skill -> n_k
    value_sums: dict[int, float] = field(default_factory=dict)  # skill -> sum of totals

    @property
    def total(self) -> int:
        return sum(self.visits.values())

    def record(self, skill_id: int, value: float) -> None:
        self.visits[skill_id] = self.visits.get(skill_id, 0) + 1
        self.value_sums[skill_id] = self.value_sums.get(skill_id, 0.0) + value

    def drop_skill(self, skill_id: int) -> None:
        self.visits.pop(skill_id, None)
        self.value_sums.pop(skill_id, None)


class SkillMemory:
    """Mutable store for skills, clusters, objects, and search stats."""

    def __init__(self, cluster_threshold: float = 0.88):
        self.cluster_threshold = cluster_threshold
        self.skills: dict[int, Skill] = {}
        self.clusters: dict[int, ActionCluster] = {}
        self.objects: dict[int, UIObject] = {}
        self.search_stats: dict[int, SearchStats] = {}
        self._next_skill_id = 0
        self._next_cluster_id = 0
        self._by_actions: dict[tuple, int] = {}

    # -- skills -----------------------------------------------------------

    def add_skill(self, name: str, descriptor: str,
                  actions: list[AtomicAction] | tuple[AtomicAction, ...],
                  created_step: int = 0) -> int:
        """Register a skill; identical action sequences dedup to one entry."""
        if not actions:
            raise ContractViolation("skill needs at least one action")
        key = tuple(actions)
        existing = self._by_actions.get(key)
        if existing is not None and self.skills[existing].status is SkillStatus.ACTIVE:
            return existing
        skill_id = self._next_skill_id
        self._next_skill_id += 1
        self.skills[skill_id] = Skill(skill_id, name, descriptor, key,
                                      created_step=created_step)
        self._by_actions[key] = skill_id
        return skill_id

    def get_skill(self, skill_id: int) -> Skill:
        skill = self.skills.get(skill_id)
        if skill is None:
            raise NotFoundError(f"skill {skill_id} not found")
        return skill

    def has_skill(self, skill_id: int) -> bool:
        skill = self.skills.get(skill_id)
        return skill is not None and skill.status is SkillStatus.ACTIVE

    def active_skills(self) -> list[Skill]:
        return [s for s in self.skills.values() if s.status is SkillStatus.ACTIVE]

    def update_fitness(self, skill_id: int, total_reward: float) -> float:
        """Accumulate clipped-positive reward; bumps the execution counter."""
        skill = self.get_skill(skill_id)
        if skill.status is SkillStatus.PRUNED:
            raise ContractViolation(f"skill {skill_id} is pruned")
        skill.fitness += max(0.0, total_reward)
        skill.exec_count += 1
        skill.last_total_reward = total_reward
        return skill.fitness

    def prune_skill(self, skill_id: int, graph=None) -> None:
        """Retire a skill and cascade: graph edges, cluster membership, stats.

        Idempotent; passing the graph removes its skill edges in the same
        call so samplers can never see a dead skill.
        """
        skill = self.get_skill(skill_id)
        if skill.status is SkillStatus.PRUNED:
            return
        skill.status = SkillStatus.PRUNED
        if self._by_actions.get(skill.actions) == skill_id:
            del self._by_actions[skill.actions]
        for cluster_id in list(self.clusters):
            cluster = self.clusters[cluster_id]
            cluster.skill_ids.discard(skill_id)
            if not cluster.skill_ids:
                del self.clusters[cluster_id]
        for stats in self.search_stats.values():
            stats.drop_skill(skill_id)
        if graph is not None:
            graph.remove_skill_edges(skill_id)

    # -- clusters ----------------------------------------------------------

    def cluster_for_state(self, embedding: Embedding) -> ActionCluster | None:
        """Best-matching cluster by centroid cosine, or None below threshold."""
        best: ActionCluster | None = None
        best_sim = self.cluster_threshold
        for cluster_id in sorted(self.clusters):
            sim = cosine(self.clusters[cluster_id].centroid, embedding)
            if sim > best_sim:
                best = self.clusters[cluster_id]
                best_sim = sim
        return best

    def assign_to_cluster(self, skill_id: int, embedding: Embedding) -> int:
        """Attach the skill to the best cluster, founding one if none match."""
        self.get_skill(skill_id)
        cluster = self.cluster_for_state(embedding)
        if cluster is None:
            cluster_id = self._next_cluster_id
            self._next_cluster_id += 1
            cluster = ActionCluster(cluster_id, embedding)
            self.clusters[cluster_id] = cluster
        # Keep clusters disjoint: a skill lives in exactly one.
        for other in self.clusters.values():
            if other.id != cluster.id:
                other.skill_ids.discard(skill_id)
        cluster.skill_ids.add(skill_id)
        return cluster.id

    def cluster_of_skill(self, skill_id: int) -> ActionCluster | None:
        for cluster in self.clusters.values():
            if skill_id in cluster.skill_ids:
                return cluster
        return None

    # -- objects -----------------------------------------------------------

    def register_object(self, obj: UIObject) -> None:
        self.objects[obj.id] = obj

    # -- search stats --------------------------------------------------------

    def tree_stats(self, node_id: int) -> SearchStats:
        stats = self.search_stats.get(node_id)
        if stats is None:
            stats = SearchStats(node_id)
            self.search_stats[node_id] = stats
        return stats

    # -- counts / export ----------------------------------------------------

    def library_size(self) -> int:
        return len(self.active_skills())

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "skills": [
                {
                    "id": s.id,
                    "name": s.name,
                    "descriptor": s.descriptor,
                    "actions": [a.to_dict() for a in s.actions],
                    "fitness": s.fitness,
                    "exec_count": s.exec_count,
                    "created_step": s.created_step,
                    "status": s.status.value,
                    "last_total_reward": s.last_total_reward,
                }
                for s in self.skills.values()
            ],
            "clusters": [
                {
                    "id": c.id,
                    "centroid": c.centroid.tolist(),
                    "skill_ids": sorted(c.skill_ids),
                }
                for c in self.clusters.values()
            ],
            "objects": [
                {"id": o.id, "name": o.name, "reference_descriptor": o.reference_descriptor}
                for o in self.objects.values()
            ],
            "tree_stats": [
                {
                    "node_id": st.node_id,
                    "visits": [[k, v] for k, v in sorted(st.visits.items())],
                    "value_sums": [[k, v] for k, v in sorted(st.value_sums.items())],
                }
                for st in self.search_stats.values()
            ],
            "cluster_threshold": self.cluster_threshold,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SkillMemory":
        mem = cls(cluster_threshold=data.get("cluster_threshold", 0.88))
        for sd in sorted(data["skills"], key=lambda s: s["id"]):
            actions = tuple(AtomicAction.from_dict(a) for a in sd["actions"])
            skill = Skill(
                id=int(sd["id"]), name=sd["name"], descriptor=sd["descriptor"],
                actions=actions, fitness=float(sd["fitness"]),
                exec_count=int(sd["exec_count"]), created_step=int(sd["created_step"]),
                status=SkillStatus(sd["status"]),
                last_total_reward=sd.get("last_total_reward"),
            )
            mem.skills[skill.id] = skill
            if skill.status is SkillStatus.ACTIVE:
                mem._by_actions[actions] = skill.id
            mem._next_skill_id = max(mem._next_skill_id, skill.id + 1)
        for cd in data["clusters"]:
            cluster = ActionCluster(int(cd["id"]), Embedding(cd["centroid"]),
                                    set(int(s) for s in cd["skill_ids"]))
            mem.clusters[cluster.id] = cluster
            mem._next_cluster_id = max(mem._next_cluster_id, cluster.id + 1)
        for od in data["objects"]:
            mem.objects[int(od["id"])] = UIObject(int(od["id"]), od["name"],
                                                  od.get("reference_descriptor", ""))
        for td in data["tree_stats"]:
            stats = SearchStats(int(td["node_id"]))
            stats.visits = {int(k): int(v) for k, v in td["visits"]}
            stats.value_sums = {int(k): float(v) for k, v in td["value_sums"]}
            mem.search_stats[stats.node_id] = stats
        return mem

    def validate(self) -> None:
        """Re-check store invariants; raises ContractViolation naming any breach."""
        for skill in self.skills.values():
            if not skill.actions:
                raise ContractViolation(f"invariant nonempty-actions violated at skill {skill.id}")
            if skill.fitness < 0:
                raise ContractViolation(f"invariant fitness>=0 violated at skill {skill.id}")
            if skill.exec_count < 0:
                raise ContractViolation(f"invariant exec_count>=0 violated at skill {skill.id}")
        seen: set[int] = set()
        for cluster in self.clusters.values():
            overlap = seen & cluster.skill_ids
            if overlap:
                raise ContractViolation(
                    f"invariant cluster-disjointness violated: skill {min(overlap)}"
                )
            seen |= cluster.skill_ids
            for skill_id in cluster.skill_ids:
                if not self.has_skill(skill_id):
                    raise ContractViolation(
                        f"invariant cluster-members-active violated: skill {skill_id}"
                    )

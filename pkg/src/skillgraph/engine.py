"""The decision loop: graph-sampled skills, UCT fallback, skill augmentation.

Each step works through three stages in order. Stage one samples up to
``max_attempts`` skills from the current node's similarity neighborhood,
weight-proportionally and without replacement, breaking early when a
transition's total reward clears the success threshold. If that is
exhausted, stage two asks the oracle for candidate skills and picks one by
temperature-softmax over UCT utilities (unvisited skills first). If the
oracle offers nothing, the agent grows a new skill by appending oracle-
proposed atomic actions one at a time until something recognizable happens.

All memory and graph mutations happen here, in a fixed order per executed
attempt: evaluate rewards against the pre-transition graph, update skill
fitness, then record the skill edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotFoundError, OracleTransportError
from .graph import StateGraph
from .memory import AtomicAction, Skill, SkillMemory
from .oracle import (
    OPERATIONS,
    AugmentRequest,
    EvaluateRequest,
    InvokeRequest,
    Oracle,
    RefineRequest,
    SkillView,
    observation_ref,
)
from .rewards import RewardSwitches, evaluate_transition
from .trace import (
    STAGE_AUGMENT,
    STAGE_KG,
    STAGE_REFINE,
    STAGE_UCT,
    AttemptRecord,
    EpisodeTrace,
    StepRecord,
)
from .world import Observation, Simulator

OPERATIONS = tuple(OPERATIONS)  # frozen copy of the offered operation set


@dataclass(frozen=True)
class EngineConfig:
    max_attempts: int = 5
    success_threshold: float = 1.0
    removal_threshold: float = 0.1
    refine_trigger_count: int = 3
    exploration_weight: float = 5.0   # UCT bonus scale
    temperature: float = 1.0          # softmax temperature
    max_chain_length: int = 3         # augmentation depth cap
    switches: RewardSwitches = field(default_factory=RewardSwitches)

    def __post_init__(self):
        if self.max_attempts < 1 or self.max_chain_length < 1 or self.refine_trigger_count < 1:
            raise ValueError("count parameters must be positive")
        if self.temperature <= 0 or self.exploration_weight <= 0:
            raise ValueError("temperature and exploration weight must be positive")


def uct_score(fitness: float, total_selections: int, skill_selections: int,
              penalty: float, exploration_weight: float) -> float:
    """Exploitation-plus-exploration utility for one candidate skill.

    A never-selected skill scores +inf so it is always tried first.
    """
    if skill_selections == 0:
        return math.inf
    return fitness + exploration_weight * math.sqrt(
        math.log(total_selections) / skill_selections
    ) - penalty


def softmax(scores: list[float], temperature: float) -> list[float]:
    scaled = np.asarray(scores, dtype=np.float64) / temperature
    scaled -= scaled.max()
    exps = np.exp(scaled)
    probs = exps / exps.sum()
    return [float(p) for p in probs]


class Engine:
    """Runs episodes over one simulator with shared persistent stores."""

    def __init__(self, sim: Simulator, oracle: Oracle, memory: SkillMemory,
                 graph: StateGraph, config: EngineConfig | None = None, seed: int = 0):
        self.sim = sim
        self.oracle = oracle
        self.memory = memory
        self.graph = graph
        self.config = config or EngineConfig()
        self.seed = seed
        self.rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE47)))
        self.step = 0  # global across episodes, marks node/skill creation times
        self._episode = 0
        self._obs: Observation | None = None
        self._node: int = -1
        self._reached: set[str] = set()

    # -- episode driver -------------------------------------------------------

    def run_episode(self, max_steps: int = 100, episode: int = 0) -> EpisodeTrace:
        # Fresh per-episode stream so a run resumed from a snapshot draws the
        # same samples as one that never stopped.
        self._episode = episode
        self.rng = np.random.default_rng(np.random.SeedSequence((self.seed, 0xE47, episode)))
        obs = self.sim.reset(episode)
        self._register_objects(obs)
        node, _ = self.graph.ingest(obs.embedding, self.step)
        self._obs, self._node = obs, node
        self._reached = set()
        trace = EpisodeTrace(episode=episode, seed=self.seed, step_cap=max_steps)

        all_milestones = set(self.sim.world.milestones)
        for _ in range(max_steps):
            if self._reached >= all_milestones:
                trace.ended = "milestones-complete"
                break
            record = self._run_step()
            trace.steps.append(record)
            self.step += 1
        return trace

    def _run_step(self) -> StepRecord:
        cost_before = self.oracle.cost_total()
        record = StepRecord(step=self.step, node_id=self._node, stage=STAGE_KG)
        milestones_before = set(self._reached)

        succeeded = self._stage_kg_sample(record)
        if not succeeded:
            offered = self._stage_oracle_invoke(record)
            if offered:
                record.stage = STAGE_UCT
            else:
                record.stage = STAGE_AUGMENT
                self._stage_augment(record)
            self._maybe_refine(record)

        record.oracle_cost_delta = self.oracle.cost_total() - cost_before
        record.milestones_reached = sorted(self._reached - milestones_before)
        return record

    # -- stage one: sample from the graph neighborhood ---------------------------

    def _stage_kg_sample(self, record: StepRecord) -> bool:
        """Try up to max_attempts neighborhood skills; True on an early break."""
        candidates = self.graph.candidate_skills(self._node)
        pool = list(candidates)
        attempts = 0
        while pool and attempts < self.config.max_attempts:
            skill_id = self.graph.sample_skill(pool, self.rng)
            pool = [c for c in pool if c[0] != skill_id]
            attempts += 1
            attempt = self._execute_skill(skill_id, STAGE_KG)
            record.attempts.append(attempt)
            if attempt.reward["total"] > self.config.success_threshold:
                return True
        return False

    # -- stage two: oracle invocation + UCT selection -----------------------------

    def _stage_oracle_invoke(self, record: StepRecord) -> bool:
        """Ask the oracle for candidates; returns False when none were offered."""
        offered = self._invoke_candidates()
        if not offered:
            return False
        chosen, probs = self._select_by_uct(offered)
        attempt = self._execute_skill(chosen, STAGE_UCT, probs=probs)
        record.attempts.append(attempt)
        stats = self.memory.tree_stats(attempt.src_node)
        stats.record(chosen, attempt.reward["total"])
        if attempt.reward["total"] < self.config.removal_threshold:
            self.memory.prune_skill(chosen, graph=self.graph)
            record.pruned.append(chosen)
        return True

    def _invoke_candidates(self) -> list[int]:
        cluster = self.memory.cluster_for_state(self._obs.embedding)
        if cluster is not None:
            skills = [self.memory.skills[sid] for sid in sorted(cluster.skill_ids)
                      if self.memory.has_skill(sid)]
        else:
            skills = sorted(self.memory.active_skills(), key=lambda s: s.id)
        if not skills:
            return []
        request = InvokeRequest(
            observation=observation_ref(self._obs),
            candidates=tuple(self._skill_view(s) for s in skills),
        )
        try:
            return self.oracle.invoke(request)
        except OracleTransportError:
            return []

    def _select_by_uct(self, offered: list[int]) -> tuple[int, list[list]]:
        stats = self.memory.tree_stats(self._node)
        on_screen = {o.id for o in self._obs.visible_elements}
        ordered = sorted(offered)
        unvisited = [sid for sid in ordered if stats.visits.get(sid, 0) == 0]
        if unvisited:
            chosen = unvisited[0]
            return chosen, [[chosen, 1.0]]
        total = stats.total
        scores = []
        for sid in ordered:
            skill = self.memory.get_skill(sid)
            penalty = float(sum(1 for oid in skill.object_ids if oid not in on_screen))
            scores.append(uct_score(skill.fitness, total, stats.visits[sid],
                                    penalty, self.config.exploration_weight))
        probs = softmax(scores, self.config.temperature)
        chosen = ordered[int(self.rng.choice(len(ordered), p=np.asarray(probs)))]
        return chosen, [[sid, p] for sid, p in zip(ordered, probs)]

    # -- stage three: grow a new skill --------------------------------------------

    def _stage_augment(self, record: StepRecord) -> int | None:
        """Append oracle-proposed actions until one chain does something."""
        prefix: list[AtomicAction] = []
        for _ in range(self.config.max_chain_length):
            request = AugmentRequest(
                observation=observation_ref(self._obs),
                operations=OPERATIONS,
                objects=tuple(o.id for o in self._obs.visible_elements),
                prefix=tuple(prefix),
            )
            try:
                proposal = self.oracle.augment(request)
            except OracleTransportError:
                proposal = None
            if proposal is None:
                return None
            chain = prefix + [proposal]
            attempt = self._execute_actions(chain, STAGE_AUGMENT, skill_id=None)
            record.attempts.append(attempt)
            recognizable = (
                attempt.outcome["latent_changed"]
                or attempt.reward["total"] > self.config.success_threshold
            )
            if recognizable and not attempt.outcome["grounding_failed"]:
                skill_id = self._register_skill(chain, attempt, record)
                return skill_id
            prefix = chain
        return None

    def _register_skill(self, actions: list[AtomicAction], attempt: AttemptRecord,
                        record: StepRecord) -> int:
        names = "+".join(a.object_name or str(a.object_id) for a in actions)
        known_before = set(self.memory.skills)
        skill_id = self.memory.add_skill(
            name=f"use {names}",
            descriptor=f"{len(actions)}-step interaction with {names}",
            actions=tuple(actions),
            created_step=self.step,
        )
        if skill_id not in known_before:
            record.augmented.append(skill_id)
        # The embedding where the chain started anchors its cluster context.
        src_embedding = self.graph.nodes[attempt.src_node].embedding
        self.memory.assign_to_cluster(skill_id, src_embedding)
        self.memory.update_fitness(skill_id, attempt.reward["total"])
        self._record_edge_if_effective(attempt, skill_id)
        attempt.skill_id = skill_id
        return skill_id

    # -- refinement -----------------------------------------------------------------

    def _maybe_refine(self, record: StepRecord) -> None:
        """Rewrite the weakest local skill when practicable options run thin."""
        on_screen = {o.id for o in self._obs.visible_elements}
        practicable = [
            s for s in self.memory.active_skills()
            if all(oid in on_screen for oid in s.object_ids)
        ]
        if len(practicable) >= self.config.refine_trigger_count:
            return
        cluster = self.memory.cluster_for_state(self._obs.embedding)
        if cluster is None:
            return
        members = [self.memory.skills[sid] for sid in sorted(cluster.skill_ids)
                   if self.memory.has_skill(sid)]
        members = [s for s in members if s.last_total_reward is not None and len(s.actions) > 1]
        if not members:
            return
        target = min(members, key=lambda s: (s.fitness, s.id))
        request = RefineRequest(
            observation=observation_ref(self._obs),
            skill=self._skill_view(target),
            trajectory=tuple(sorted(self._reached)),
        )
        try:
            draft = self.oracle.refine(request)
        except OracleTransportError:
            return
        if tuple(draft.actions) == target.actions:
            return
        trial = self._execute_actions(list(draft.actions), STAGE_REFINE, skill_id=None)
        record.attempts.append(trial)
        if trial.reward["total"] > target.last_total_reward:
            new_id = self.memory.add_skill(
                name=f"refined {target.name}",
                descriptor=draft.descriptor,
                actions=tuple(draft.actions),
                created_step=self.step,
            )
            if new_id != target.id:
                src_embedding = self.graph.nodes[trial.src_node].embedding
                self.memory.assign_to_cluster(new_id, src_embedding)
                self.memory.update_fitness(new_id, trial.reward["total"])
                self._record_edge_if_effective(trial, new_id)
                self.memory.prune_skill(target.id, graph=self.graph)
                record.pruned.append(target.id)
                record.refined.append([target.id, new_id])
                record.augmented.append(new_id)

    # -- execution plumbing ------------------------------------------------------------

    def _execute_skill(self, skill_id: int, stage: str, probs: list[list] | None = None) -> AttemptRecord:
        skill = self.memory.get_skill(skill_id)
        if not self.memory.has_skill(skill_id):
            raise NotFoundError(f"skill {skill_id} is not active")
        attempt = self._execute_actions(list(skill.actions), stage, skill_id=skill_id, probs=probs)
        self.memory.update_fitness(skill_id, attempt.reward["total"])
        self._record_edge_if_effective(attempt, skill_id)
        return attempt

    def _execute_actions(self, actions: list[AtomicAction], stage: str,
                         skill_id: int | None, probs: list[list] | None = None) -> AttemptRecord:
        src_obs, src_node = self._obs, self._node
        outcome = self.sim.execute(actions)
        dst_obs = outcome.next_observation
        self._register_objects(dst_obs)
        dst_node, is_new = self.graph.ingest(dst_obs.embedding, self.step)

        if outcome.grounding_failed:
            scores = (0.0, 0.0)  # nothing to judge; no oracle call either
        else:
            request = EvaluateRequest(
                observation_before=observation_ref(src_obs),
                observation_after=observation_ref(dst_obs),
                skill=self._skill_view(self.memory.skills[skill_id]) if skill_id is not None else None,
                reached_milestones=tuple(sorted(self._reached)),
            )
            try:
                scores = self.oracle.evaluate(request)
            except OracleTransportError:
                scores = (0.0, 0.0)
        reward = evaluate_transition(self.graph, src_node, dst_node, is_new,
                                     scores, self.config.switches)

        if outcome.milestone_reached:
            self._reached.add(outcome.milestone_reached)
        self._obs, self._node = dst_obs, dst_node

        return AttemptRecord(
            stage=stage,
            skill_id=skill_id,
            proposed_action=actions[-1].to_dict() if skill_id is None else None,
            outcome={
                "src_screen": src_obs.screen_snapshot,
                "dst_screen": dst_obs.screen_snapshot,
                "latent_changed": outcome.latent_changed,
                "delta": outcome.delta,
                "grounding_failed": outcome.grounding_failed,
                "milestone": outcome.milestone_reached,
            },
            reward=reward.to_dict(),
            src_node=src_node,
            dst_node=dst_node,
            dst_is_new=is_new,
            probs=probs,
        )

    def _record_edge_if_effective(self, attempt: AttemptRecord, skill_id: int) -> None:
        """Skill edges record effective executions only: grounded and visible."""
        out = attempt.outcome
        if out["grounding_failed"]:
            return
        if not (out["latent_changed"] or out["delta"] > 0):
            return
        fitness = self.memory.get_skill(skill_id).fitness
        self.graph.record_transition(attempt.src_node, attempt.dst_node, skill_id,
                                     out["delta"], fitness)

    def _register_objects(self, obs: Observation) -> None:
        for obj in obs.visible_elements:
            if obj.id not in self.memory.objects:
                self.memory.register_object(obj)

    def _skill_view(self, skill: Skill) -> SkillView:
        return SkillView(skill.id, skill.name, skill.descriptor, skill.actions)

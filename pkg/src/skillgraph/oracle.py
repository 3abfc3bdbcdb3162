"""Oracle abstraction: the four reasoning calls behind a uniform interface.

The decision loop asks an oracle to pick candidate skills (invoke), propose
a new atomic action (augment), rewrite a weak skill (refine), and score an
executed transition (evaluate). The scripted implementation answers from
simulator ground truth and is a pure function of (request, seed), so runs
replay bit-for-bit; the remote client in :mod:`skillgraph.remote` speaks
JSON over HTTP to anything that implements the same contract.

Every response is checked against the closed-world rule: ids and objects in
a response must come from the request's offered sets, and evaluation scores
must be in [0, 1].
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, OracleProtocolError
from .memory import AtomicAction, Operate, UIObject
from .world import World

FORMAT_VERSION = 1

SCORE_JITTER = 0.2  # noisy persona: +- jitter on evaluation scores


@dataclass(frozen=True)
class ObservationRef:
    """Serializable handle on an observation: enough for a scripted or remote
    oracle to reason about, without raw pixels."""

    screen: str
    object_ids: tuple[int, ...]
    object_names: tuple[str, ...]
    step_index: int

    def to_dict(self) -> dict:
        return {
            "screen": self.screen,
            "object_ids": list(self.object_ids),
            "object_names": list(self.object_names),
            "step_index": self.step_index,
        }


def observation_ref(obs) -> ObservationRef:
    return ObservationRef(
        screen=obs.screen_snapshot,
        object_ids=tuple(o.id for o in obs.visible_elements),
        object_names=tuple(o.name for o in obs.visible_elements),
        step_index=obs.step_index,
    )


@dataclass(frozen=True)
class SkillView:
    id: int
    name: str
    descriptor: str
    actions: tuple[AtomicAction, ...]

    @property
    def object_ids(self) -> tuple[int, ...]:
        return tuple(a.object_id for a in self.actions)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "descriptor": self.descriptor,
            "actions": [a.to_dict() for a in self.actions],
        }


@dataclass(frozen=True)
class InvokeRequest:
    observation: ObservationRef
    candidates: tuple[SkillView, ...]

    kind = "invoke"

    def to_payload(self) -> dict:
        return {
            "observation": self.observation.to_dict(),
            "candidates": [c.to_dict() for c in self.candidates],
        }


@dataclass(frozen=True)
class AugmentRequest:
    observation: ObservationRef
    operations: tuple[str, ...]
    objects: tuple[int, ...]
    prefix: tuple[AtomicAction, ...] = ()

    kind = "augment"

    def to_payload(self) -> dict:
        return {
            "observation": self.observation.to_dict(),
            "operations": list(self.operations),
            "objects": list(self.objects),
            "prefix": [a.to_dict() for a in self.prefix],
        }


@dataclass(frozen=True)
class RefineRequest:
    observation: ObservationRef
    skill: SkillView
    trajectory: tuple[str, ...] = ()

    kind = "refine"

    def to_payload(self) -> dict:
        return {
            "observation": self.observation.to_dict(),
            "skill": self.skill.to_dict(),
            "trajectory": list(self.trajectory),
        }


@dataclass(frozen=True)
class EvaluateRequest:
    observation_before: ObservationRef
    observation_after: ObservationRef
    skill: SkillView | None
    reached_milestones: tuple[str, ...] = ()
    trajectory: tuple[str, ...] = ()

    kind = "evaluate"

    def to_payload(self) -> dict:
        return {
            "observation_before": self.observation_before.to_dict(),
            "observation_after": self.observation_after.to_dict(),
            "skill": self.skill.to_dict() if self.skill else None,
            "reached_milestones": list(self.reached_milestones),
            "trajectory": list(self.trajectory),
        }


@dataclass(frozen=True)
class RefineDraft:
    actions: tuple[AtomicAction, ...]
    descriptor: str


class Oracle(ABC):
    """Interface the decision loop depends on; tallies abstract call costs."""

    def __init__(self):
        self._cost = 0

    @abstractmethod
    def invoke(self, request: InvokeRequest) -> list[int]: ...

    @abstractmethod
    def augment(self, request: AugmentRequest) -> AtomicAction | None: ...

    @abstractmethod
    def refine(self, request: RefineRequest) -> RefineDraft: ...

    @abstractmethod
    def evaluate(self, request: EvaluateRequest) -> tuple[float, float]: ...

    def cost_total(self) -> int:
        return self._cost

    def _charge(self, units: int = 1) -> None:
        if units < 0:
            raise ContractViolation("cost units must be nonnegative")
        self._cost += units


# -- response validation (shared by scripted and remote paths) ----------------

def check_invoke_response(request: InvokeRequest, skill_ids: list[int]) -> list[int]:
    offered = {c.id for c in request.candidates}
    for sid in skill_ids:
        if sid not in offered:
            raise OracleProtocolError(f"invoke response id {sid} was not offered")
    if len(set(skill_ids)) != len(skill_ids):
        raise OracleProtocolError("invoke response contains duplicate ids")
    return skill_ids


def check_augment_response(request: AugmentRequest, action: AtomicAction | None) -> AtomicAction | None:
    if action is None:
        return None
    if action.object_id not in request.objects:
        raise OracleProtocolError(f"augment response object {action.object_id} was not offered")
    if action.operate.value not in request.operations:
        raise OracleProtocolError(f"augment response operation {action.operate.value} was not offered")
    return action


def check_refine_response(request: RefineRequest, draft: RefineDraft) -> RefineDraft:
    if not draft.actions:
        raise OracleProtocolError("refine response must keep at least one action")
    if not draft.descriptor:
        raise OracleProtocolError("refine response descriptor must be nonempty")
    allowed = set(a.object_id for a in request.skill.actions) | set(request.observation.object_ids)
    for action in draft.actions:
        if action.object_id not in allowed:
            raise OracleProtocolError(
                f"refine response references object {action.object_id} outside the request"
            )
    return draft


def check_evaluate_response(scores: tuple[float, float]) -> tuple[float, float]:
    progress, semantics = scores
    for name, value in (("progress", progress), ("semantics", semantics)):
        if not (0.0 <= value <= 1.0):
            raise OracleProtocolError(f"evaluate {name} score {value} outside [0, 1]")
    return float(progress), float(semantics)


# -- scripted personae ---------------------------------------------------------

PERSONAS = ("perfect", "noisy", "adversarial")


def _request_rng(seed: int, kind: str, payload: dict) -> np.random.Generator:
    """Deterministic per-request stream: hash of (seed, kind, payload)."""
    blob = json.dumps({"seed": seed, "kind": kind, "payload": payload},
                      sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(blob.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


class ScriptedOracle(Oracle):
    """Ground-truth-backed oracle with three personae.

    ``perfect`` answers truthfully from the world definition; ``noisy`` is
    perfect with seeded jitter on evaluation scores; ``adversarial`` gives
    random but contract-valid responses. All three are pure functions of
    (request, seed): identical requests always get identical answers.
    """

    def __init__(self, world: World, persona: str = "perfect", seed: int = 0):
        super().__init__()
        if persona not in PERSONAS:
            raise ContractViolation(f"unknown persona {persona!r}; expected one of {PERSONAS}")
        self.world = world
        self.persona = persona
        self.seed = seed

    # invoke: offer back exactly the skills whose target objects are all on screen
    def invoke(self, request: InvokeRequest) -> list[int]:
        self._charge()
        if self.persona == "adversarial":
            rng = _request_rng(self.seed, "invoke", request.to_payload())
            picked = [c.id for c in request.candidates if rng.random() < 0.5]
            return check_invoke_response(request, picked)
        on_screen = set(request.observation.object_ids)
        picked = [c.id for c in request.candidates
                  if all(oid in on_screen for oid in c.object_ids)]
        return check_invoke_response(request, sorted(picked))

    def augment(self, request: AugmentRequest) -> AtomicAction | None:
        self._charge()
        offered = list(request.objects)
        if not offered:
            return None
        if self.persona == "adversarial":
            rng = _request_rng(self.seed, "augment", request.to_payload())
            oid = int(offered[int(rng.integers(len(offered)))])
            return check_augment_response(request, self._click(oid))
        screen = request.observation.screen
        choice = self._augment_choice(screen, offered, request.prefix)
        return check_augment_response(request, self._click(choice))

    def _augment_choice(self, screen: str, offered: list[int],
                        prefix: tuple[AtomicAction, ...]) -> int:
        prefix_elements = tuple(a.object_id for a in prefix)
        # Continue a known combo that the prefix has started.
        for combo in self.world.combos:
            steps = combo.steps
            k = len(prefix_elements)
            if 0 < k < len(steps) and all(
                steps[i] == (screen, prefix_elements[i]) for i in range(k)
            ):
                nxt_screen, nxt_el = steps[k]
                if nxt_screen == screen and nxt_el in offered:
                    return nxt_el
        used = set(prefix_elements)
        fresh = [oid for oid in offered if oid not in used] or offered
        # Milestone transitions first, then any latent transition, then a
        # combo opener, then whatever is left.
        for oid in sorted(fresh):
            target = self.world.latent_target(screen, oid)
            if target is not None and target in self.world.milestones:
                return oid
        for oid in sorted(fresh):
            if self.world.latent_target(screen, oid) is not None:
                return oid
        for oid in sorted(fresh):
            if any(c.steps[0] == (screen, oid) for c in self.world.combos):
                return oid
        return sorted(fresh)[0]

    def _click(self, object_id: int) -> AtomicAction:
        obj = self.world.objects.get(object_id)
        name = obj.name if obj else f"object_{object_id}"
        return AtomicAction(Operate.CLICK, object_id, name)

    def refine(self, request: RefineRequest) -> RefineDraft:
        self._charge()
        actions = list(request.skill.actions)
        if self.persona == "adversarial":
            rng = _request_rng(self.seed, "refine", request.to_payload())
            keep = max(1, int(rng.integers(1, len(actions) + 1)))
            draft = RefineDraft(tuple(actions[:keep]), f"scrambled {request.skill.name}")
            return check_refine_response(request, draft)
        # Trim trailing actions that never transition anywhere (dead weight).
        while len(actions) > 1 and self._is_inert(actions[-1].object_id):
            actions.pop()
        descriptor = request.skill.descriptor or f"refined {request.skill.name}"
        if len(actions) < len(request.skill.actions):
            descriptor = f"{request.skill.name} without trailing no-ops"
        return check_refine_response(request, RefineDraft(tuple(actions), descriptor))

    def _is_inert(self, object_id: int) -> bool:
        in_combo = any(el == object_id for c in self.world.combos for (_s, el) in c.steps)
        in_transitions = any(el == object_id for (_s, el) in self.world.transitions)
        return not in_combo and not in_transitions

    def evaluate(self, request: EvaluateRequest) -> tuple[float, float]:
        self._charge()
        before, after = request.observation_before, request.observation_after
        delta = self.world.grid_delta(before.screen, after.screen)
        latent = before.screen != after.screen
        fresh_milestone = (
            after.screen in self.world.milestones
            and after.screen not in request.reached_milestones
        )
        if fresh_milestone:
            scores = (1.0, 1.0)
        elif latent:
            # Myopic by design: visible change stands in for progress, the
            # way a screenshot judge would see it.
            scores = (min(1.0, delta), 0.8)
        else:
            scores = (0.0, 0.0)
        if self.persona == "noisy":
            rng = _request_rng(self.seed, "evaluate", request.to_payload())
            jitter = rng.uniform(-SCORE_JITTER, SCORE_JITTER, size=2)
            scores = (
                float(np.clip(scores[0] + jitter[0], 0.0, 1.0)),
                float(np.clip(scores[1] + jitter[1], 0.0, 1.0)),
            )
        elif self.persona == "adversarial":
            rng = _request_rng(self.seed, "evaluate", request.to_payload())
            scores = (float(rng.random()), float(rng.random()))
        return check_evaluate_response(scores)

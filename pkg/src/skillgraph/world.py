"""Deterministic synthetic GUI world: latent screens, elements, combos.

A world is a set of latent screens arranged in zones. Each screen carries a
16x16 cell grid (the abstract "screenshot"), a set of interactable elements,
and transitions keyed by (screen, element). Some zones hide multi-step
combos whose payoff screens are only reachable through a low-visual-impact
setup action. Observations carry embeddings with engineered geometry:

* two observations of the same screen always have cosine above the merge
  threshold (0.95 with the default noise scale),
* observations of two different screens in the same zone fall inside the
  similarity band (0.88, 0.95],
* screens of different zones are nearly orthogonal.

That calibration is exact by construction: zone axes and per-screen axes are
orthonormal basis vectors and observation noise lives in a subspace
orthogonal to all of them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import Embedding
from .errors import ContractViolation, NotFoundError
from .memory import AtomicAction, Operate, UIObject

GRID_SIDE = 16
GRID_CELLS = GRID_SIDE * GRID_SIDE
N_COLORS = 8

# Pairwise cosine between distinct screens of the same zone before noise.
SIBLING_BAND_CENTER = 0.92
# Observation noise amplitude; same-screen cosine is then at least
# (1 - eps^2) / (1 + eps^2) = 0.980.
NOISE_EPS = 0.1

OPERATIONS = [op.value for op in Operate]


@dataclass
class Screen:
    id: str
    zone: int
    elements: tuple[int, ...]
    grid: np.ndarray  # shape (GRID_CELLS,), ints in [0, N_COLORS)


@dataclass(frozen=True)
class ComboSpec:
    """Element sequence that, completed in order, jumps to a payoff screen."""

    steps: tuple[tuple[str, int], ...]
    target: str


@dataclass
class World:
    profile: str
    seed: int
    dimension: int
    screens: dict[str, Screen]
    transitions: dict[tuple[str, int], str]
    milestones: list[str]
    combos: list[ComboSpec]
    objects: dict[int, UIObject]
    initial_screen: str
    grounding_failure_rate: float = 0.05
    # Screens only reachable by completing a combo; used by the harness to
    # detect that a low-delta setup action paid off.
    combo_milestones: list[str] = field(default_factory=list)
    # Designated (screen, element) setup steps with visual delta < 0.05.
    setup_steps: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self):
        self._screen_order = {sid: i for i, sid in enumerate(self.screens)}
        self._zones = sorted({s.zone for s in self.screens.values()})
        self._zone_index = {z: i for i, z in enumerate(self._zones)}
        need = len(self._zones) + len(self.screens)
        if self.dimension < need + 4:
            raise ContractViolation(
                f"dimension {self.dimension} too small for {len(self.screens)} screens "
                f"in {len(self._zones)} zones"
            )
        self.validate()

    # -- static structure ---------------------------------------------------

    def validate(self) -> None:
        for (sid, element), target in self.transitions.items():
            if sid not in self.screens or target not in self.screens:
                raise ContractViolation(f"transition ({sid}, {element}) -> {target} names unknown screen")
            if element not in self.screens[sid].elements:
                raise ContractViolation(f"transition element {element} absent from screen {sid}")
        if not self.milestones:
            raise ContractViolation("world needs at least one milestone")
        for m in self.milestones:
            if m not in self.screens:
                raise ContractViolation(f"milestone {m} names unknown screen")
        for combo in self.combos:
            if combo.target not in self.screens:
                raise ContractViolation(f"combo target {combo.target} unknown")
            for sid, element in combo.steps:
                if sid not in self.screens:
                    raise ContractViolation(f"combo step screen {sid} unknown")
                if element not in self.screens[sid].elements:
                    raise ContractViolation(f"combo element {element} absent from screen {sid}")
        if self.initial_screen not in self.screens:
            raise ContractViolation(f"initial screen {self.initial_screen} unknown")

    def base_vector(self, screen_id: str) -> np.ndarray:
        """Noise-free embedding direction of a screen (unit vector)."""
        screen = self.screens[screen_id]
        zone_axis = self._zone_index[screen.zone]
        screen_axis = len(self._zones) + self._screen_order[screen_id]
        c = np.sqrt(SIBLING_BAND_CENTER)
        vec = np.zeros(self.dimension)
        vec[zone_axis] = c
        vec[screen_axis] = np.sqrt(1.0 - SIBLING_BAND_CENTER)
        return vec

    @property
    def noise_offset(self) -> int:
        return len(self._zones) + len(self.screens)

    def grid_delta(self, a: str, b: str) -> float:
        """Fraction of differing grid cells between two screens."""
        return float(np.mean(self.screens[a].grid != self.screens[b].grid))

    def latent_target(self, screen_id: str, element: int) -> str | None:
        return self.transitions.get((screen_id, element))

    def visible_objects(self, screen_id: str) -> list[UIObject]:
        return [self.objects[e] for e in self.screens[screen_id].elements]

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "profile": self.profile,
            "seed": self.seed,
            "dimension": self.dimension,
            "initial_screen": self.initial_screen,
            "grounding_failure_rate": self.grounding_failure_rate,
            "screens": [
                {
                    "id": s.id,
                    "zone": s.zone,
                    "elements": list(s.elements),
                    "grid": s.grid.tolist(),
                }
                for s in self.screens.values()
            ],
            "transitions": [
                [sid, element, target] for (sid, element), target in self.transitions.items()
            ],
            "milestones": list(self.milestones),
            "combos": [
                {"steps": [[sid, el] for sid, el in c.steps], "target": c.target}
                for c in self.combos
            ],
            "objects": [
                {"id": o.id, "name": o.name, "reference_descriptor": o.reference_descriptor}
                for o in self.objects.values()
            ],
            "combo_milestones": list(self.combo_milestones),
            "setup_steps": [[sid, el] for sid, el in self.setup_steps],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "World":
        screens = {
            sd["id"]: Screen(sd["id"], int(sd["zone"]), tuple(sd["elements"]),
                             np.asarray(sd["grid"], dtype=np.int64))
            for sd in data["screens"]
        }
        return cls(
            profile=data["profile"],
            seed=int(data["seed"]),
            dimension=int(data["dimension"]),
            screens=screens,
            transitions={(t[0], int(t[1])): t[2] for t in data["transitions"]},
            milestones=list(data["milestones"]),
            combos=[
                ComboSpec(tuple((s[0], int(s[1])) for s in cd["steps"]), cd["target"])
                for cd in data["combos"]
            ],
            objects={
                int(od["id"]): UIObject(int(od["id"]), od["name"],
                                        od.get("reference_descriptor", ""))
                for od in data["objects"]
            },
            initial_screen=data["initial_screen"],
            grounding_failure_rate=float(data.get("grounding_failure_rate", 0.05)),
            combo_milestones=list(data.get("combo_milestones", [])),
            setup_steps=[(s[0], int(s[1])) for s in data.get("setup_steps", [])],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "World":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class Observation:
    screen_snapshot: str
    embedding: Embedding
    visible_elements: list[UIObject]
    step_index: int


@dataclass
class StepOutcome:
    next_observation: Observation
    latent_changed: bool
    delta: float
    grounding_failed: bool
    milestone_reached: str | None


class Simulator:
    """Runtime stepper over a world: one instance drives one episode at a time."""

    def __init__(self, world: World, seed: int = 0):
        self.world = world
        self.seed = seed
        self._episode = -1
        self.reset(0)

    def reset(self, episode: int = 0) -> Observation:
        """Start an episode: back to the initial screen, fresh seeded streams."""
        self._episode = episode
        ss = np.random.SeedSequence((self.world.seed, self.seed, episode))
        noise_seed, ground_seed = ss.spawn(2)
        self._noise_rng = np.random.default_rng(noise_seed)
        self._ground_rng = np.random.default_rng(ground_seed)
        self.current_screen = self.world.initial_screen
        self.combo_progress = [0] * len(self.world.combos)
        self.step_index = 0
        self.last_observation = self._observe()
        return self.last_observation

    def _observe(self) -> Observation:
        base = self.world.base_vector(self.current_screen)
        noise = np.zeros(self.world.dimension)
        span = self.world.dimension - self.world.noise_offset
        raw = self._noise_rng.normal(size=span)
        noise[self.world.noise_offset :] = raw / np.linalg.norm(raw)
        vec = base + NOISE_EPS * noise
        vec = vec / np.linalg.norm(vec)
        obs = Observation(
            screen_snapshot=self.current_screen,
            embedding=Embedding(vec),
            visible_elements=self.world.visible_objects(self.current_screen),
            step_index=self.step_index,
        )
        return obs

    def execute(self, actions: list[AtomicAction] | tuple[AtomicAction, ...]) -> StepOutcome:
        """Apply actions in order; stop at the first grounding failure.

        Failures are data, not exceptions: an absent object id or a seeded
        stochastic grounding miss ends the sequence early, leaving whatever
        already applied in place.
        """
        start_screen = self.current_screen
        grounding_failed = False
        milestone: str | None = None
        for action in actions:
            screen = self.world.screens[self.current_screen]
            if action.object_id not in screen.elements:
                grounding_failed = True
                break
            if self._ground_rng.random() < self.world.grounding_failure_rate:
                grounding_failed = True
                break
            entered = self._apply(action)
            if entered is not None and entered in self.world.milestones:
                milestone = entered
        self.step_index += 1
        obs = self._observe()
        self.last_observation = obs
        outcome = StepOutcome(
            next_observation=obs,
            latent_changed=self.current_screen != start_screen,
            delta=self.world.grid_delta(start_screen, self.current_screen),
            grounding_failed=grounding_failed,
            milestone_reached=milestone,
        )
        return outcome

    def _apply(self, action: AtomicAction) -> str | None:
        """Apply one grounded action; returns the screen entered, if any."""
        here = self.current_screen
        element = action.object_id
        jump: str | None = None
        for i, combo in enumerate(self.world.combos):
            progress = self.combo_progress[i]
            if progress < len(combo.steps) and combo.steps[progress] == (here, element):
                self.combo_progress[i] = progress + 1
            elif combo.steps[0] == (here, element):
                self.combo_progress[i] = 1
            else:
                self.combo_progress[i] = 0
            if self.combo_progress[i] == len(combo.steps):
                jump = combo.target
        if jump is not None:
            self.combo_progress = [0] * len(self.world.combos)
            self.current_screen = jump
            return jump
        target = self.world.transitions.get((here, element))
        if target is not None:
            self.current_screen = target
            return target
        return None


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

# Per-zone element id block: base + offset.
EL_PULL, EL_NEXT, EL_PREP, EL_TAP, EL_STEP, EL_DECOR = range(6)
ZONE_ID_STRIDE = 10

SPINE_MUTATION = 0.45   # grid delta of an ordinary screen transition
TRAP_MUTATION = 0.70    # flashier change on trap entry
LEAP_MUTATION = 0.60


def element_id(zone: int, offset: int) -> int:
    return ZONE_ID_STRIDE * (zone + 1) + offset


def _mutate_grid(grid: np.ndarray, cells: int, rng: np.random.Generator) -> np.ndarray:
    """Copy a grid changing exactly ``cells`` cells to different colors."""
    out = grid.copy()
    idx = rng.choice(GRID_CELLS, size=cells, replace=False)
    shift = rng.integers(1, N_COLORS, size=cells)
    out[idx] = (out[idx] + shift) % N_COLORS
    return out


class _Builder:
    def __init__(self, seed: int):
        self.rng = np.random.default_rng(np.random.SeedSequence((seed, 0xB11D)))
        self.screens: dict[str, Screen] = {}
        self.transitions: dict[tuple[str, int], str] = {}
        self.milestones: list[str] = []
        self.combos: list[ComboSpec] = []
        self.objects: dict[int, UIObject] = {}
        self.combo_milestones: list[str] = []
        self.setup_steps: list[tuple[str, int]] = []
        self._last_grid = self.rng.integers(0, N_COLORS, size=GRID_CELLS)

    def screen(self, sid: str, zone: int, elements: tuple[int, ...],
               from_grid: np.ndarray | None = None, mutation: float = SPINE_MUTATION) -> str:
        src = self._last_grid if from_grid is None else from_grid
        cells = max(1, round(mutation * GRID_CELLS))
        grid = _mutate_grid(src, cells, self.rng)
        self.screens[sid] = Screen(sid, zone, elements, grid)
        self._last_grid = grid
        return sid

    def link(self, sid: str, element: int, target: str) -> None:
        self.transitions[(sid, element)] = target

    def obj(self, oid: int, name: str) -> int:
        if oid not in self.objects:
            self.objects[oid] = UIObject(oid, name, reference_descriptor=f"ref:{name}")
        return oid


def generate_world(profile: str, seed: int, zones: int | None = None) -> World:
    """Build a deterministic world for one of the three profiles.

    ``linear`` chains single-exit screens; ``branching`` adds benign forks;
    ``combo-heavy`` adds flashy dead-end traps plus armed-screen combos whose
    setup step changes almost nothing on screen (delta < 0.05) but gates a
    milestone.
    """
    if profile == "linear":
        return _generate_linear(seed, zones or 4)
    if profile == "branching":
        return _generate_branching(seed, zones or 5)
    if profile == "combo-heavy":
        return _generate_combo_heavy(seed, zones or 6)
    raise ContractViolation(f"unknown world profile: {profile}")


def _finish(b: _Builder, profile: str, seed: int, initial: str) -> World:
    n_zones = len({s.zone for s in b.screens.values()})
    dim = n_zones + len(b.screens) + 16
    dim = ((dim + 7) // 8) * 8
    return World(
        profile=profile,
        seed=seed,
        dimension=dim,
        screens=b.screens,
        transitions=b.transitions,
        milestones=b.milestones,
        combos=b.combos,
        objects=b.objects,
        initial_screen=initial,
        combo_milestones=b.combo_milestones,
        setup_steps=b.setup_steps,
    )


def _generate_linear(seed: int, zones: int) -> World:
    b = _Builder(seed)
    prev: str | None = None
    prev_el: int | None = None
    for z in range(zones):
        nxt = b.obj(element_id(z, EL_NEXT), f"advance_{z}")
        b.obj(element_id(z, EL_DECOR), f"decor_{z}")
        for i in range(5):
            sid = b.screen(f"z{z}r{i}", z, (nxt, element_id(z, EL_DECOR)))
            if prev is not None:
                b.link(prev, prev_el, sid)
            prev, prev_el = sid, nxt
            if i in (2, 4):
                b.milestones.append(sid)
    return _finish(b, "linear", seed, "z0r0")


def _generate_branching(seed: int, zones: int) -> World:
    b = _Builder(seed)
    prev: str | None = None
    prev_el: int | None = None
    for z in range(zones):
        pull = b.obj(element_id(z, EL_PULL), f"lever_{z}")
        nxt = b.obj(element_id(z, EL_NEXT), f"advance_{z}")
        decor = b.obj(element_id(z, EL_DECOR), f"decor_{z}")

        gate_pull = b.screen(f"z{z}r0", z, (pull, decor))
        gate_next = b.screen(f"z{z}r1", z, (nxt, decor))
        fork = b.screen(f"z{z}r2", z, (nxt, pull, decor))
        side = b.screen(f"z{z}side", z, (nxt, decor))
        exit_ = b.screen(f"z{z}r3", z, (nxt, decor))

        if prev is not None:
            b.link(prev, prev_el, gate_pull)
        b.link(gate_pull, pull, gate_next)
        b.link(gate_next, nxt, fork)
        b.link(fork, nxt, exit_)
        b.link(fork, pull, side)
        b.link(side, nxt, exit_)
        b.milestones.extend([gate_next, exit_])
        prev, prev_el = exit_, nxt
    return _finish(b, "branching", seed, "z0r0")


def _generate_combo_heavy(seed: int, zones: int) -> World:
    b = _Builder(seed)
    prev: str | None = None
    prev_el: int | None = None
    for z in range(zones):
        pull = b.obj(element_id(z, EL_PULL), f"lever_{z}")
        nxt = b.obj(element_id(z, EL_NEXT), f"advance_{z}")
        prep = b.obj(element_id(z, EL_PREP), f"dial_{z}")
        decor = b.obj(element_id(z, EL_DECOR), f"decor_{z}")

        # Teaching corridor: each element family has a screen where it is the
        # only way forward, so a skill for it can be discovered.
        gate_pull = b.screen(f"z{z}r0", z, (pull, decor))
        gate_next = b.screen(f"z{z}r1", z, (nxt, decor))
        ante = b.screen(f"z{z}r2", z, (prep, decor))
        if prev is not None:
            b.link(prev, prev_el, gate_pull)
        if z >= 1:
            b.milestones.append(gate_pull)
        b.link(gate_pull, pull, gate_next)

        after_gate = gate_next
        if z % 3 == 1:
            # Blocker screen: no single element transitions anywhere; only the
            # hidden tap-then-step combo (silent first step) opens the way.
            tap = b.obj(element_id(z, EL_TAP), f"panel_{z}")
            step = b.obj(element_id(z, EL_STEP), f"hatch_{z}")
            blocker = b.screen(f"z{z}blocker", z, (tap, step, decor))
            reward = b.screen(f"z{z}comboroom", z, (nxt, decor), mutation=LEAP_MUTATION)
            b.link(gate_next, nxt, blocker)
            b.combos.append(ComboSpec(((blocker, tap), (blocker, step)), reward))
            b.milestones.append(reward)
            b.combo_milestones.append(reward)
            b.setup_steps.append((blocker, tap))
            b.link(reward, nxt, ante)
            after_gate = None
        if after_gate is not None:
            b.link(gate_next, nxt, ante)
        b.milestones.append(ante)

        mixed = b.screen(f"z{z}r3", z, (nxt, pull, prep, decor))
        b.link(ante, prep, mixed)

        # Flashy two-deep dead end off the mixed screen.
        trap1 = b.screen(f"z{z}trapA", z, (pull, decor),
                         from_grid=b.screens[mixed].grid, mutation=TRAP_MUTATION)
        trap2 = b.screen(f"z{z}trapB", z, (pull, decor),
                         from_grid=b.screens[trap1].grid, mutation=TRAP_MUTATION)
        b.link(mixed, pull, trap1)
        b.link(trap1, pull, trap2)
        b.link(trap2, pull, mixed)

        # Low-delta armed variant of the mixed screen: the dial changes a
        # single cell but unlocks a milestone leap.
        armed = b.screen(f"z{z}armed", z, (nxt, decor),
                         from_grid=b.screens[mixed].grid, mutation=1 / GRID_CELLS)
        leap = b.screen(f"z{z}leap", z, (nxt, decor),
                        from_grid=b.screens[armed].grid, mutation=LEAP_MUTATION)
        b.link(mixed, prep, armed)
        b.link(armed, nxt, leap)
        b.milestones.append(leap)
        b.combo_milestones.append(leap)
        b.setup_steps.append((mixed, prep))

        exit_ = b.screen(f"z{z}r4", z, (nxt, pull, decor),
                         from_grid=b.screens[mixed].grid)
        b.link(mixed, nxt, exit_)
        b.link(leap, nxt, exit_)
        trap3 = b.screen(f"z{z}trapC", z, (pull, decor),
                         from_grid=b.screens[exit_].grid, mutation=TRAP_MUTATION)
        b.link(exit_, pull, trap3)
        b.link(trap3, pull, exit_)
        prev, prev_el = exit_, nxt
    return _finish(b, "combo-heavy", seed, "z0r0")

"""Predator-prey pursuit arena: bid costs, world stepping and experiment layout."""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from typing import Optional

__all__ = [
    "Cell",
    "Prey",
    "GridWorld",
    "ChangeInjection",
    "ChangeSchedule",
    "Layout",
    "ScenarioError",
    "MOVES",
    "bid_cost",
    "step_world",
    "layout_world",
]

Cell = tuple[int, int]

# Tie-break order for every greedy move choice: north, east, south, west.
MOVES: tuple[tuple[str, Cell], ...] = (
    ("N", (0, -1)),
    ("E", (1, 0)),
    ("S", (0, 1)),
    ("W", (-1, 0)),
)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Prey:
    cell: Cell
    dangerous: bool = False
    goal_cell: Optional[Cell] = None


@dataclass
class GridWorld:
    """Walled grid holding predators, prey and the current chase targets.

    ``targets`` maps a predator to the prey it is currently chasing.
    ``captured`` and ``escaped`` only ever grow.
    """

    width: int
    height: int
    predators: dict[str, Cell] = field(default_factory=dict)
    preys: dict[str, Prey] = field(default_factory=dict)
    rng_seed: int = 0
    targets: dict[str, str] = field(default_factory=dict)
    captured: dict[str, str] = field(default_factory=dict)
    escaped: list[str] = field(default_factory=list)
    tick: int = 0
    prey_period: int = 2

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ScenarioError("grid dimensions must be positive")
        for pid, cell in self.predators.items():
            self.check_cell(cell, f"predator {pid}")
        seen: set[Cell] = set()
        for pid, prey in self.preys.items():
            self.check_cell(prey.cell, f"prey {pid}")
            if prey.cell in seen:
                raise ScenarioError(f"two prey share cell {prey.cell}")
            seen.add(prey.cell)

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def check_cell(self, cell: Cell, what: str = "cell") -> None:
        if not self.in_bounds(cell):
            raise ScenarioError(
                f"{what} at {cell} outside {self.width}x{self.height} grid"
            )

    def copy(self) -> "GridWorld":
        return dataclasses.replace(
            self,
            predators=dict(self.predators),
            preys=dict(self.preys),
            targets=dict(self.targets),
            captured=dict(self.captured),
            escaped=list(self.escaped),
        )

    def free_cell_near(self, cell: Cell) -> Cell:
        """Nearest cell without prey, scanning rings outward in row-major order."""
        occupied = {p.cell for p in self.preys.values()}
        if cell not in occupied:
            return cell
        x0, y0 = cell
        for radius in range(1, self.width + self.height):
            ring = sorted(
                (y, x)
                for x in range(self.width)
                for y in range(self.height)
                if abs(x - x0) + abs(y - y0) == radius
            )
            for y, x in ring:
                if (x, y) not in occupied:
                    return (x, y)
        raise ScenarioError("grid has no free cell left")

    def spawn(self, prey_id: str, prey: Prey) -> None:
        if prey_id in self.preys or prey_id in self.captured:
            raise ScenarioError(f"prey {prey_id} already exists")
        self.check_cell(prey.cell, f"prey {prey_id}")
        self.preys[prey_id] = dataclasses.replace(prey, cell=self.free_cell_near(prey.cell))


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def bid_cost(
    predator_cell: Cell, prey_cell: Cell, world: Optional[GridWorld] = None
) -> int:
    """Manhattan distance between two cells, bounds-checked against ``world``."""
    if world is not None:
        world.check_cell(predator_cell, "predator cell")
        world.check_cell(prey_cell, "prey cell")
    elif min(predator_cell + prey_cell) < 0:
        raise ScenarioError("cells must have non-negative coordinates")
    return manhattan(predator_cell, prey_cell)


def _shift(cell: Cell, delta: Cell) -> Cell:
    return (cell[0] + delta[0], cell[1] + delta[1])


def _chase_step(world: GridWorld, cell: Cell, goal: Cell) -> Cell:
    best, best_d = cell, manhattan(cell, goal)
    for _, delta in MOVES:
        nxt = _shift(cell, delta)
        if world.in_bounds(nxt):
            d = manhattan(nxt, goal)
            if d < best_d:
                best, best_d = nxt, d
    return best


def _evade_step(world: GridWorld, prey: Prey, blocked: set[Cell]) -> Cell:
    options = [_shift(prey.cell, delta) for _, delta in MOVES] + [prey.cell]
    options = [c for c in options if world.in_bounds(c) and (c == prey.cell or c not in blocked)]
    if prey.goal_cell is not None:
        return min(options, key=lambda c: manhattan(c, prey.goal_cell))  # type: ignore[arg-type]
    hunters = list(world.predators.values())
    if not hunters:
        return options[0]
    # max() keeps the first of equal scores, which is the N, E, S, W, stay order
    return max(options, key=lambda c: min(manhattan(c, h) for h in hunters))


def _resolve_captures(world: GridWorld) -> None:
    for predator, prey_id in sorted(world.targets.items()):
        prey = world.preys.get(prey_id)
        if prey is not None and world.predators.get(predator) == prey.cell:
            del world.preys[prey_id]
            world.captured[prey_id] = predator


def step_world(world: GridWorld) -> GridWorld:
    """Advance the arena by one tick and return the new world.

    Predators with a target close in one cell; a predator standing on its
    target's cell captures it. Prey then move (every ``prey_period`` ticks),
    either toward their goal cell or away from the nearest predator.
    """
    out = world.copy()
    out.tick += 1
    for predator in sorted(out.predators):
        prey = out.preys.get(out.targets.get(predator, ""))
        if prey is not None:
            out.predators[predator] = _chase_step(out, out.predators[predator], prey.cell)
    _resolve_captures(out)

    if out.tick % out.prey_period == 0:
        for prey_id in sorted(out.preys):
            prey = out.preys[prey_id]
            blocked = {p.cell for pid, p in out.preys.items() if pid != prey_id}
            cell = _evade_step(out, prey, blocked)
            out.preys[prey_id] = dataclasses.replace(prey, cell=cell)
            if prey.goal_cell is not None and cell == prey.goal_cell:
                del out.preys[prey_id]
                out.escaped.append(prey_id)
        _resolve_captures(out)
    return out


@dataclass(frozen=True)
class ChangeInjection:
    tick: int
    task_id: str
    new_prey_id: str


@dataclass(frozen=True)
class ChangeSchedule:
    injections: tuple[ChangeInjection, ...] = ()

    def __post_init__(self) -> None:
        ticks = [i.tick for i in self.injections]
        if any(b < a for a, b in zip(ticks, ticks[1:])):
            raise ScenarioError(f"change ticks must be in order: {ticks}")

    def __len__(self) -> int:
        return len(self.injections)

    def __iter__(self):
        return iter(self.injections)


@dataclass
class Layout:
    """Initial positions for one experiment.

    ``spawn_cells`` holds where each possible retarget prey appears; one is
    reserved per task so the layout does not depend on the change count.
    """

    world: GridWorld
    contractor_ids: list[str]
    prey_ids: list[str]
    spawn_cells: list[Cell]


def layout_world(
    tasks: int,
    contractors: int,
    grid: tuple[int, int] = (10, 10),
    seed: int = 42,
    prey_period: int = 2,
) -> Layout:
    width, height = grid
    if contractors + tasks > width * height:
        raise ScenarioError(
            f"{contractors} predators and {tasks} prey do not fit a {width}x{height} grid"
        )
    rng = random.Random(seed)
    cells = [(x, y) for y in range(height) for x in range(width)]
    picked = rng.sample(cells, contractors + tasks)
    contractor_ids = [f"p{i}" for i in range(1, contractors + 1)]
    prey_ids = [f"prey-{i}" for i in range(1, tasks + 1)]
    world = GridWorld(
        width=width,
        height=height,
        predators=dict(zip(contractor_ids, picked[:contractors])),
        preys={pid: Prey(cell) for pid, cell in zip(prey_ids, picked[contractors:])},
        rng_seed=seed,
        prey_period=prey_period,
    )
    spawn_cells = [rng.choice(cells) for _ in range(tasks)]
    return Layout(world, contractor_ids, prey_ids, spawn_cells)

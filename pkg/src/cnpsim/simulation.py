"""Wires agents, the network and the pursuit world into one seeded run."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .agents import ContractorAgent, ManagerAgent
from .config import RunConfig
from .messaging import Envelope, MessageFactory, Performative, format_header
from .network import DEADLINE, ENVIRONMENT, WORLD, LatencyModel, Network
from .protocol import (
    BidSpecification,
    ChangeOutcome,
    ContractRecord,
    ContractState,
    ProtocolError,
    ProtocolVariant,
    TaskChange,
    TaskSpec,
)
from .pursuit import (
    Cell,
    ChangeInjection,
    ChangeSchedule,
    GridWorld,
    Layout,
    Prey,
    ScenarioError,
    bid_cost,
    layout_world,
    step_world,
)

__all__ = [
    "Scenario",
    "Simulation",
    "RunResult",
    "run_experiment",
    "build_experiment",
    "capture_task",
    "MANAGER_ID",
]

log = logging.getLogger(__name__)

MANAGER_ID = "m0"
CHASE = "chase"


def capture_task(task_id: str, prey_id: str, expiration: int) -> TaskSpec:
    return TaskSpec(
        task_id=task_id,
        name=f"capture {prey_id}",
        abstraction=f"chase and capture {prey_id} before it escapes",
        bid_spec=BidSpecification(frozenset({CHASE})),
        expiration=expiration,
        target=prey_id,
    )


@dataclass
class Scenario:
    """Everything a run needs besides protocol settings.

    ``spawns`` lists the retarget prey the environment releases at their
    change tick, keyed by prey id.
    """

    layout: Layout
    tasks: list[TaskSpec]
    schedule: ChangeSchedule = field(default_factory=ChangeSchedule)
    spawns: dict[str, Prey] = field(default_factory=dict)
    capabilities: dict[str, frozenset[str]] = field(default_factory=dict)
    manager_id: str = MANAGER_ID


@dataclass
class RunResult:
    config: RunConfig
    scenario: Scenario
    trace: list[Envelope]
    contracts: list[ContractRecord]
    final_clock: int
    world: GridWorld
    ignored: list[Envelope]

    @property
    def header(self) -> str:
        return format_header(self.config.settings())

    @property
    def message_count(self) -> int:
        return len(self.trace)

    def outcomes(self) -> list[ChangeOutcome]:
        return [c.outcome for r in self.contracts for c in r.change_log if c.outcome]


class Simulation:
    def __init__(self, config: RunConfig, scenario: Scenario):
        self.config = config
        self.scenario = scenario
        self.variant = config.variant
        self.network = Network(
            LatencyModel(config.latency_base, config.latency_jitter, config.seed)
        )
        self.factory = MessageFactory(config.dialect)
        self.world = scenario.layout.world.copy()
        contractor_ids = list(scenario.layout.contractor_ids)
        self.manager = ManagerAgent(
            scenario.manager_id,
            contractor_ids,
            self.variant,
            self.factory,
            retry_budget=config.retry_budget,
            bid_window=config.effective_bid_window,
        )
        self.contractors = {
            cid: ContractorAgent(
                cid,
                self.factory,
                capabilities=scenario.capabilities.get(cid, frozenset({CHASE})),
                work_rate=config.work_rate,
                report_interval=config.report_interval,
                progress_policy=config.progress_policy,
                cost_fn=self._cost,
            )
            for cid in contractor_ids
        }
        self.network.register(self.manager.agent_id, self._manager_inbox)
        for cid in contractor_ids:
            self.network.register(cid, self._contractor_inbox(cid))
        self.network.diagnose = self.manager.stuck
        self._ticks: set[int] = set()
        self._seen_captures: set[str] = set()
        self._seen_escapes: set[str] = set()

    @property
    def now(self) -> int:
        return self.network.now

    # plumbing -------------------------------------------------------------

    def _cost(self, agent_id: str, target: object) -> Optional[float]:
        prey = self.world.preys.get(str(target))
        if prey is None or agent_id not in self.world.predators:
            return None
        return bid_cost(self.world.predators[agent_id], prey.cell, self.world)

    def _post(self, envelopes: list[Envelope]) -> None:
        for env in envelopes:
            self.network.send(env)
        while self.manager.deadlines:
            due, task_id, attempt = self.manager.deadlines.pop(0)
            self.network.schedule(
                due,
                lambda t=task_id, a=attempt: self._post(self.manager.on_deadline(t, a, self.now)),
                DEADLINE,
                f"deadline {task_id}#{attempt}",
            )

    def _manager_inbox(self, env: Envelope) -> None:
        self._post(self.manager.on_message(env, self.now))

    def _contractor_inbox(self, cid: str):
        agent = self.contractors[cid]

        def inbox(env: Envelope) -> None:
            out = agent.on_message(env, self.now)
            if env.performative is Performative.ACCEPT_PROPOSAL and env.conversation_id in agent.active_contracts:
                contract = agent.active_contracts[env.conversation_id]
                self.manager.contract_started(contract.task_id, contract.attempt, self.now)
                self._ensure_tick(self.now)
            self._post(out)

        return inbox

    def _ensure_tick(self, t: int) -> None:
        if t not in self._ticks:
            self._ticks.add(t)
            self.network.schedule(t, self._world_tick, WORLD, f"tick {t}")

    # environment ----------------------------------------------------------

    def _inject(self, injection: ChangeInjection) -> None:
        prey_id = injection.new_prey_id
        if prey_id in self.scenario.spawns and prey_id not in self.world.preys \
                and prey_id not in self.world.captured:
            self.world.spawn(prey_id, self.scenario.spawns[prey_id])
        change = TaskChange(injection.task_id, prey_id, self.now)
        self._post(self.manager.request_change(change, self.now))

    def _chase_targets(self) -> dict[str, str]:
        targets = {}
        for cid, agent in sorted(self.contractors.items()):
            contracts = sorted(agent.active_contracts.values(), key=lambda c: (c.started_at, c.task_id))
            for contract in contracts:
                if contract.target in self.world.preys:
                    targets[cid] = contract.target
                    break
        return targets

    def _world_tick(self) -> None:
        now = self.now
        self._ticks.discard(now)
        self.world.targets = self._chase_targets()
        self.world = step_world(self.world)

        for prey_id, predator in self.world.captured.items():
            if prey_id in self._seen_captures:
                continue
            self._seen_captures.add(prey_id)
            agent = self.contractors.get(predator)
            if agent is None:
                continue
            for contract in agent.active_contracts.values():
                if contract.target == prey_id:
                    contract.captured = True

        out: list[Envelope] = []
        escaped = set(self.world.escaped)
        for cid, agent in sorted(self.contractors.items()):
            for contract in sorted(agent.active_contracts.values(), key=lambda c: (c.started_at, c.task_id)):
                if contract.target in escaped:
                    out.append(agent.target_lost(contract.task_id, now))
                    continue
                report = agent.execute_tick(contract.task_id, now)
                if report is not None:
                    out.append(report)
        self._post(out)
        if any(agent.active_contracts for agent in self.contractors.values()):
            self._ensure_tick(now + 1)

    # driver ---------------------------------------------------------------

    def run(self) -> RunResult:
        for injection in self.scenario.schedule:
            self.network.schedule(
                injection.tick,
                lambda i=injection: self._inject(i),
                ENVIRONMENT,
                f"change {injection.task_id}",
            )
        for task in self.scenario.tasks:
            self._post(self.manager.announce(task, self.now))
        final = self.network.run_until_quiescent(self.config.max_ticks)
        return RunResult(
            config=self.config,
            scenario=self.scenario,
            trace=list(self.network.delivered),
            contracts=[self.manager.contracts[k] for k in sorted(self.manager.contracts)],
            final_clock=final,
            world=self.world,
            ignored=list(self.manager.ignored),
        )


def _base_scenario(config: RunConfig) -> Scenario:
    layout = layout_world(
        config.tasks,
        config.contractors,
        (config.width, config.height),
        config.seed,
        config.prey_period,
    )
    tasks = [
        capture_task(f"T{i}", prey_id, config.effective_bid_window)
        for i, prey_id in enumerate(layout.prey_ids, 1)
    ]
    return Scenario(layout=layout, tasks=tasks)


def _schedule_ok(config: RunConfig, scenario: Scenario) -> bool:
    """Both variants must see every change while its contract is running."""
    expected = {
        ProtocolVariant.UPDATED: ChangeOutcome.ABSORBED,
        ProtocolVariant.CONVENTIONAL: ChangeOutcome.FORCED_RESTART,
    }
    for variant, outcome in expected.items():
        try:
            result = Simulation(config.with_(variant=variant), scenario).run()
        except ProtocolError:
            return False
        outcomes = result.outcomes()
        if len(outcomes) != len(scenario.schedule) or any(o is not outcome for o in outcomes):
            return False
        if result.ignored:
            return False
    return True


MAX_SCHEDULE_CANDIDATES = 200


def build_experiment(config: RunConfig) -> Scenario:
    """Lay out the arena and place ``config.changes`` retargets mid-contract.

    Change ticks come from a seeded search: each candidate picks distinct
    tasks and a tick inside each one's running window, then is replayed
    under both variants and kept only if every change lands while its
    contract is in progress.
    """
    config.validate()
    scenario = _base_scenario(config)
    if config.changes == 0:
        return scenario

    baseline = Simulation(config.with_(changes=0), scenario).run()
    starts = {
        r.task_id: next(t for t, s in r.history if s is ContractState.IN_PROGRESS)
        for r in baseline.contracts
        if any(s is ContractState.IN_PROGRESS for _, s in r.history)
    }
    if len(starts) < config.changes:
        raise ScenarioError(
            f"only {len(starts)} of {config.tasks} tasks were ever awarded; "
            f"cannot place {config.changes} changes"
        )
    work_ticks = math.ceil(1 / config.work_rate - 1e-9)
    # a request sent this many ticks after the start still reaches the
    # contractor before its last work tick
    span = max(1, work_ticks - (config.latency_base + config.latency_jitter))
    spawns = {
        f"danger-{j}": Prey(cell, dangerous=True)
        for j, cell in enumerate(scenario.layout.spawn_cells[: config.changes], 1)
    }
    rng = random.Random(f"changes/{config.seed}/{config.changes}")
    task_ids = sorted(starts)
    for _ in range(MAX_SCHEDULE_CANDIDATES):
        chosen = rng.sample(task_ids, config.changes)
        pairs = sorted((starts[t] + rng.randrange(span), t) for t in chosen)
        schedule = ChangeSchedule(
            tuple(
                ChangeInjection(tick, task_id, f"danger-{j}")
                for j, (tick, task_id) in enumerate(pairs, 1)
            )
        )
        candidate = Scenario(
            layout=scenario.layout,
            tasks=scenario.tasks,
            schedule=schedule,
            spawns=spawns,
            capabilities=scenario.capabilities,
            manager_id=scenario.manager_id,
        )
        if _schedule_ok(config, candidate):
            return candidate
    raise ScenarioError(
        f"could not place {config.changes} in-flight changes for seed {config.seed}"
    )


def run_experiment(config: RunConfig, scenario: Optional[Scenario] = None) -> RunResult:
    config.validate()
    if scenario is None:
        scenario = build_experiment(config)
    return Simulation(config, scenario).run()

"""Experiment protocol: five-state FSM, rounds, cells, and the full factorial.

One round is one FSM cycle: broadcast the price, collect simultaneous
decisions, aggregate and pay.  A dynamic cell cycles S1->S2->S3 over its
price sequence; a static cell runs each designed price as an independent
single-round game with an empty information set.
"""

from __future__ import annotations

import enum
import json
import logging
import time
from dataclasses import dataclass, field, replace

from .agents import (
    Agent,
    Decision,
    GatewayAgent,
    GatewayConfig,
    HeuristicAgent,
    HeuristicParams,
    HistoryEntry,
    Observation,
    RationalAgent,
    ReplayAgent,
    realized_payoff,
)
from .game import (
    Action,
    GameSpec,
    PriceSequence,
    TrajectoryKind,
    build_trajectory,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class FsmState(enum.Enum):
    S0_INIT = "S0"
    S1_BROADCAST = "S1"
    S2_DECIDE = "S2"
    S3_AGGREGATE = "S3"
    S4_TERMINATED = "S4"


class FsmEvent(enum.Enum):
    EXPERIMENT_START = "experiment_start"
    BROADCAST_COMPLETE = "broadcast_complete"
    ALL_DECISIONS_COMPLETE = "all_decisions_complete"
    RESULTS_CALCULATED = "results_calculated"
    TERMINATION_MET = "termination_met"


class InvalidTransition(Exception):
    def __init__(self, state: FsmState, event: FsmEvent):
        super().__init__(f"no transition from {state.value} on {event.value}")
        self.state = state
        self.event = event


_TRANSITIONS = {
    (FsmState.S0_INIT, FsmEvent.EXPERIMENT_START): FsmState.S1_BROADCAST,
    (FsmState.S1_BROADCAST, FsmEvent.BROADCAST_COMPLETE): FsmState.S2_DECIDE,
    (FsmState.S2_DECIDE, FsmEvent.ALL_DECISIONS_COMPLETE): FsmState.S3_AGGREGATE,
    (FsmState.S3_AGGREGATE, FsmEvent.RESULTS_CALCULATED): FsmState.S1_BROADCAST,
    (FsmState.S3_AGGREGATE, FsmEvent.TERMINATION_MET): FsmState.S4_TERMINATED,
}


def transition(state: FsmState, event: FsmEvent) -> FsmState:
    try:
        return _TRANSITIONS[(state, event)]
    except KeyError:
        raise InvalidTransition(state, event) from None


@dataclass(frozen=True)
class AgentRecord:
    agent_id: int
    theta: float
    expectation: int
    action: Action
    payoff: float
    rationale: str | None = None


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    price: float
    realized_total: int
    agent_records: tuple[AgentRecord, ...]


@dataclass(frozen=True)
class ExperimentCell:
    beta_level: float
    trajectory: PriceSequence
    window_length: int
    agent_kind: str
    seed: int

    @property
    def key(self) -> tuple:
        return (self.beta_level, self.trajectory.kind.value, self.window_length, self.agent_kind)

    def label(self) -> str:
        return (
            f"beta={self.beta_level}_kind={self.trajectory.kind.value}"
            f"_window={self.window_length}_agent={self.agent_kind}"
        )


@dataclass
class RunLog:
    cell: ExperimentCell
    rounds: list[RoundRecord]
    traces: list[list[str]]
    config_snapshot: dict
    created_at: str | None = None
    schema_version: int = SCHEMA_VERSION


def visible_history(all_records: list[HistoryEntry], window_length: int) -> list[HistoryEntry]:
    """The last window_length entries, order preserved; window 0 sees nothing."""
    if window_length < 0:
        raise ValueError("window_length must be >= 0")
    if window_length == 0:
        return []
    return list(all_records[-window_length:])


def run_round(
    spec: GameSpec,
    price: float,
    agents: list[Agent],
    prior_records: dict[int, list[HistoryEntry]],
    window_length: int,
    round_index: int,
) -> RoundRecord:
    """One simultaneous-move round: decisions never see each other."""
    decisions: dict[int, Decision] = {}
    for agent in agents:
        obs = Observation(
            agent_theta=agent.theta,
            beta=spec.beta,
            population=spec.population,
            price=price,
            round_index=round_index,
            visible_history=tuple(
                visible_history(prior_records[agent.agent_id], window_length)
            ),
        )
        decisions[agent.agent_id] = agent.decide(obs)

    realized = sum(1 for d in decisions.values() if d.action is Action.ATTEND)
    records = []
    for agent in agents:
        d = decisions[agent.agent_id]
        payoff = realized_payoff(agent.theta, spec.beta, realized, price, d.action)
        records.append(
            AgentRecord(
                agent_id=agent.agent_id,
                theta=agent.theta,
                expectation=d.expected_total,
                action=d.action,
                payoff=payoff,
                rationale=d.rationale,
            )
        )
    return RoundRecord(
        round_index=round_index,
        price=price,
        realized_total=realized,
        agent_records=tuple(records),
    )


def _record_history(
    histories: dict[int, list[HistoryEntry]], record: RoundRecord
) -> None:
    for ar in record.agent_records:
        histories[ar.agent_id].append(
            HistoryEntry(
                round_index=record.round_index,
                price=record.price,
                realized_total=record.realized_total,
                own_expectation=ar.expectation,
                own_action=ar.action,
                own_payoff=ar.payoff,
            )
        )


def run_cell(
    cell: ExperimentCell,
    spec: GameSpec,
    agents: list[Agent],
    config_snapshot: dict | None = None,
    stamp_time: bool = False,
) -> RunLog:
    """Drive the FSM through the cell's full price trajectory.

    Static cells restart the machine for every price with empty histories, so
    each price is an independent single-shot game; the log then carries one
    trace per price.
    """
    prices = cell.trajectory.prices
    if not prices:
        raise ValueError("cell has an empty trajectory")
    static = cell.trajectory.kind is TrajectoryKind.STATIC
    rounds: list[RoundRecord] = []
    traces: list[list[str]] = []
    histories: dict[int, list[HistoryEntry]] = {a.agent_id: [] for a in agents}

    if static:
        for i, price in enumerate(prices):
            state = FsmState.S0_INIT
            trace = [state.value]
            state = _step(state, FsmEvent.EXPERIMENT_START, trace)
            state = _step(state, FsmEvent.BROADCAST_COMPLETE, trace)
            record = run_round(spec, price, agents, {a.agent_id: [] for a in agents}, 0, i)
            state = _step(state, FsmEvent.ALL_DECISIONS_COMPLETE, trace)
            state = _step(state, FsmEvent.TERMINATION_MET, trace)
            rounds.append(record)
            traces.append(trace)
    else:
        state = FsmState.S0_INIT
        trace = [state.value]
        state = _step(state, FsmEvent.EXPERIMENT_START, trace)
        for i, price in enumerate(prices):
            if i:
                state = _step(state, FsmEvent.RESULTS_CALCULATED, trace)
            state = _step(state, FsmEvent.BROADCAST_COMPLETE, trace)
            record = run_round(spec, price, agents, histories, cell.window_length, i)
            state = _step(state, FsmEvent.ALL_DECISIONS_COMPLETE, trace)
            _record_history(histories, record)
            rounds.append(record)
        state = _step(state, FsmEvent.TERMINATION_MET, trace)
        traces.append(trace)

    created = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()) if stamp_time else None
    return RunLog(
        cell=cell,
        rounds=rounds,
        traces=traces,
        config_snapshot=dict(config_snapshot or {}),
        created_at=created,
    )


def _step(state: FsmState, event: FsmEvent, trace: list[str]) -> FsmState:
    nxt = transition(state, event)
    trace.append(nxt.value)
    return nxt


# ---------------------------------------------------------------------------
# Factorial configuration

PAPER_WINDOWS = (1, 3, 6)
EXTENDED_WINDOWS = (1, 7, 13)
DYNAMIC_KINDS = (
    TrajectoryKind.INCREASING,
    TrajectoryKind.DECREASING,
    TrajectoryKind.CONVERGING,
    TrajectoryKind.DIVERGING,
)


@dataclass
class ExperimentConfig:
    """The factorial design: beta levels x (static + windows x dynamic kinds)."""

    population: int = 50
    beta_levels: tuple[float, ...] = (0.25, 0.75)
    windows: tuple[int, ...] = PAPER_WINDOWS
    dynamic_kinds: tuple[TrajectoryKind, ...] = DYNAMIC_KINDS
    include_static: bool = True
    target_counts: tuple[int, ...] = (0, 10, 20, 30, 40, 50)
    trajectory_repeats: int = 1
    agent_kind: str = "rational"
    heuristic: HeuristicParams = field(default_factory=HeuristicParams)
    gateway: GatewayConfig | None = None
    master_seed: int = 0
    price_offset: float = 0.01

    @classmethod
    def paper_profile(cls, agent_kind: str = "rational", **overrides) -> "ExperimentConfig":
        return cls(agent_kind=agent_kind, **overrides)

    @classmethod
    def extended_profile(cls, agent_kind: str = "rational", **overrides) -> "ExperimentConfig":
        # longer windows need longer runs: each trajectory is tiled 3 times
        return cls(
            agent_kind=agent_kind,
            windows=EXTENDED_WINDOWS,
            trajectory_repeats=3,
            **overrides,
        )

    def snapshot(self) -> dict:
        d = {
            "population": self.population,
            "beta_levels": list(self.beta_levels),
            "windows": list(self.windows),
            "dynamic_kinds": [k.value for k in self.dynamic_kinds],
            "include_static": self.include_static,
            "target_counts": list(self.target_counts),
            "trajectory_repeats": self.trajectory_repeats,
            "agent_kind": self.agent_kind,
            "master_seed": self.master_seed,
            "price_offset": self.price_offset,
            "heuristic": vars(self.heuristic),
        }
        if self.gateway is not None:
            g = dict(vars(self.gateway))
            d["gateway"] = g
        return d


def enumerate_cells(config: ExperimentConfig) -> list[ExperimentCell]:
    """All cells in deterministic key order; seeds derived from the master seed."""
    cells = []
    for beta in config.beta_levels:
        spec = GameSpec.integer_grid(config.population, beta)
        if config.include_static:
            static_seq = build_trajectory(
                spec, TrajectoryKind.STATIC, config.target_counts, config.price_offset
            )
            cells.append(
                ExperimentCell(
                    beta_level=beta,
                    trajectory=static_seq,
                    window_length=0,
                    agent_kind=config.agent_kind,
                    seed=0,
                )
            )
        for window in config.windows:
            for kind in config.dynamic_kinds:
                seq = build_trajectory(spec, kind, config.target_counts, config.price_offset)
                if config.trajectory_repeats > 1:
                    seq = PriceSequence(
                        kind=seq.kind,
                        prices=seq.prices * config.trajectory_repeats,
                        target_counts=seq.target_counts * config.trajectory_repeats,
                    )
                cells.append(
                    ExperimentCell(
                        beta_level=beta,
                        trajectory=seq,
                        window_length=window,
                        agent_kind=config.agent_kind,
                        seed=0,
                    )
                )
    cells.sort(key=lambda c: c.key)
    keys = [c.key for c in cells]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate cell keys in configuration")
    return [
        replace(c, seed=_derive_seed(config.master_seed, i)) for i, c in enumerate(cells)
    ]


def _derive_seed(master: int, index: int) -> int:
    return (master * 1_000_003 + index * 7919 + 1) % (2**31)


def build_agents(cell: ExperimentCell, config: ExperimentConfig) -> list[Agent]:
    spec = GameSpec.integer_grid(config.population, cell.beta_level)
    kind = cell.agent_kind
    if kind == "rational":
        return [RationalAgent(i, spec.types[i], spec) for i in range(spec.population)]
    if kind == "heuristic":
        return [
            HeuristicAgent(i, spec.types[i], config.heuristic)
            for i in range(spec.population)
        ]
    if kind == "gateway":
        if config.gateway is None:
            raise ValueError("gateway agent requires gateway configuration")
        return [
            GatewayAgent(i, spec.types[i], config.gateway)
            for i in range(spec.population)
        ]
    raise ValueError(f"unknown agent kind {kind!r}")


def run_factorial(config: ExperimentConfig) -> list[RunLog]:
    """One RunLog per cell; per-cell failures are isolated and re-raised last."""
    logs = []
    failures = []
    snapshot = config.snapshot()
    for cell in enumerate_cells(config):
        spec = GameSpec.integer_grid(config.population, cell.beta_level)
        try:
            agents = build_agents(cell, config)
            logs.append(run_cell(cell, spec, agents, config_snapshot=snapshot))
        except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
            log.error("cell %s failed: %s", cell.label(), exc)
            failures.append((cell, exc))
    if failures:
        labels = ", ".join(c.label() for c, _ in failures)
        raise RuntimeError(f"{len(failures)} cell(s) failed: {labels}") from failures[0][1]
    return logs


def replay_log(run_log: RunLog, config: ExperimentConfig | None = None) -> RunLog:
    """Re-run a cell with agents that re-emit the logged decisions."""
    population = len(run_log.rounds[0].agent_records)
    spec = GameSpec.integer_grid(population, run_log.cell.beta_level)
    per_agent: dict[int, list[Decision]] = {i: [] for i in range(population)}
    for rec in run_log.rounds:
        for ar in rec.agent_records:
            per_agent[ar.agent_id].append(
                Decision(expected_total=ar.expectation, action=ar.action, rationale=ar.rationale)
            )
    agents = [
        ReplayAgent(i, spec.types[i], per_agent[i]) for i in range(population)
    ]
    cell = replace(run_log.cell, agent_kind="replay")
    return run_cell(cell, spec, agents, config_snapshot=run_log.config_snapshot)


# ---------------------------------------------------------------------------
# JSONL persistence

def write_run_log(run_log: RunLog, path) -> None:
    """Header record, one record per round, trailer with the FSM traces."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "type": "header",
            "schema_version": run_log.schema_version,
            "cell": _cell_to_json(run_log.cell),
            "config_snapshot": run_log.config_snapshot,
            "created_at": run_log.created_at,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in run_log.rounds:
            fh.write(json.dumps(_round_to_json(rec), sort_keys=True) + "\n")
        trailer = {
            "type": "trailer",
            "n_rounds": len(run_log.rounds),
            "traces": run_log.traces,
        }
        fh.write(json.dumps(trailer, sort_keys=True) + "\n")


def read_run_log(path) -> RunLog:
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("type") != "header" or lines[-1].get("type") != "trailer":
        raise ValueError(f"{path}: malformed run log")
    header, trailer = lines[0], lines[-1]
    if header["schema_version"] != SCHEMA_VERSION:
        raise ValueError(
            f"{path}: schema version {header['schema_version']} != {SCHEMA_VERSION}"
        )
    rounds = [_round_from_json(rec) for rec in lines[1:-1]]
    if len(rounds) != trailer["n_rounds"]:
        raise ValueError(f"{path}: round count mismatch")
    return RunLog(
        cell=_cell_from_json(header["cell"]),
        rounds=rounds,
        traces=trailer["traces"],
        config_snapshot=header["config_snapshot"],
        created_at=header.get("created_at"),
    )


def _cell_to_json(cell: ExperimentCell) -> dict:
    return {
        "beta_level": cell.beta_level,
        "trajectory": {
            "kind": cell.trajectory.kind.value,
            "prices": list(cell.trajectory.prices),
            "target_counts": list(cell.trajectory.target_counts),
        },
        "window_length": cell.window_length,
        "agent_kind": cell.agent_kind,
        "seed": cell.seed,
    }


def _cell_from_json(d: dict) -> ExperimentCell:
    return ExperimentCell(
        beta_level=d["beta_level"],
        trajectory=PriceSequence(
            kind=TrajectoryKind(d["trajectory"]["kind"]),
            prices=tuple(d["trajectory"]["prices"]),
            target_counts=tuple(d["trajectory"]["target_counts"]),
        ),
        window_length=d["window_length"],
        agent_kind=d["agent_kind"],
        seed=d["seed"],
    )


def _round_to_json(rec: RoundRecord) -> dict:
    return {
        "type": "round",
        "round_index": rec.round_index,
        "price": rec.price,
        "realized_total": rec.realized_total,
        "agents": [
            {
                "agent_id": ar.agent_id,
                "theta": ar.theta,
                "expectation": ar.expectation,
                "action": ar.action.value,
                "payoff": ar.payoff,
                "rationale": ar.rationale,
            }
            for ar in rec.agent_records
        ],
    }


def _round_from_json(d: dict) -> RoundRecord:
    return RoundRecord(
        round_index=d["round_index"],
        price=d["price"],
        realized_total=d["realized_total"],
        agent_records=tuple(
            AgentRecord(
                agent_id=a["agent_id"],
                theta=a["theta"],
                expectation=a["expectation"],
                action=Action(a["action"]),
                payoff=a["payoff"],
                rationale=a.get("rationale"),
            )
            for a in d["agents"]
        ),
    )


def check_trace(trace: list[str], n_round_cycles: int | None = None) -> bool:
    """A valid trace is S0 S1 (S2 S3 S1)* S2 S3 S4."""
    if len(trace) < 5 or trace[0] != "S0" or trace[1] != "S1" or trace[-1] != "S4":
        return False
    body = trace[2:-1]
    if len(body) % 3 != 2 or body[-2:] != ["S2", "S3"]:
        return False
    cycles = (len(body) - 2) // 3
    for i in range(cycles):
        if body[3 * i : 3 * i + 3] != ["S2", "S3", "S1"]:
            return False
    if n_round_cycles is not None and cycles + 1 != n_round_cycles:
        return False
    return True

"""Agent decision interface and the four agent families.

RationalAgent is the equilibrium oracle; HeuristicAgent is a synthetic,
deterministic stand-in that reproduces the qualitative under/over-prediction
bias for pipeline testing (it makes no claim about any hosted model);
ReplayAgent re-emits decisions recorded in an earlier run; GatewayAgent asks
a chat-completion endpoint and parses its JSON reply.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass

import httpx

from .game import Action, GameSpec, best_response, solve_fee, utility

log = logging.getLogger(__name__)

UTILITY_DEFINITION = "U(theta) = theta + beta * N - p; attend iff U >= 0"


@dataclass(frozen=True)
class HistoryEntry:
    round_index: int
    price: float
    realized_total: int
    own_expectation: int
    own_action: Action
    own_payoff: float


@dataclass(frozen=True)
class Observation:
    agent_theta: float
    beta: float
    population: int
    price: float
    round_index: int
    visible_history: tuple[HistoryEntry, ...] = ()
    utility_definition: str = UTILITY_DEFINITION


@dataclass(frozen=True)
class Decision:
    expected_total: int
    action: Action
    rationale: str | None = None
    warnings: tuple[str, ...] = ()


class AgentError(Exception):
    pass


class ReplyParseError(AgentError):
    """Gateway reply could not be turned into a Decision."""


class NoJsonFound(ReplyParseError):
    pass


class SchemaViolation(ReplyParseError):
    pass


class GatewayTransportError(AgentError):
    pass


class GatewayExhaustedRetries(AgentError):
    pass


class MissingReplayEntry(AgentError):
    pass


class Agent:
    """One decision-maker; holds its private standalone value."""

    def __init__(self, agent_id: int, theta: float):
        self.agent_id = agent_id
        self.theta = theta

    def decide(self, obs: Observation) -> Decision:
        raise NotImplementedError


class RationalAgent(Agent):
    """Equilibrium oracle: expects the FEE benchmark count, ignores history."""

    def __init__(self, agent_id: int, theta: float, spec: GameSpec):
        super().__init__(agent_id, theta)
        self.spec = spec

    def decide(self, obs: Observation) -> Decision:
        y_hat = solve_fee(self.spec, obs.price).selected
        action = best_response(self.theta, obs.beta, y_hat, obs.price)
        return Decision(expected_total=y_hat, action=action)


@dataclass(frozen=True)
class HeuristicParams:
    """Weights for the synthetic expectation rule.

    center_pull blends the price-ramp guess toward K/2, which by construction
    under-predicts at low prices and over-predicts at high prices.
    anchor_weight tracks the last realized total; trend_weight extrapolates
    the last two.  anchor_weight + trend_weight must stay within [0, 1].
    """

    center_pull: float = 0.5
    anchor_weight: float = 0.0
    trend_weight: float = 0.0
    p_max: float | None = None

    def __post_init__(self):
        for name in ("center_pull", "anchor_weight", "trend_weight"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.anchor_weight + self.trend_weight > 1:
            raise ValueError("anchor_weight + trend_weight must not exceed 1")


def heuristic_expectation(params: HeuristicParams, obs: Observation) -> int:
    """Deterministic synthetic expectation; see HeuristicParams."""
    k = obs.population
    p_max = params.p_max if params.p_max is not None else k - 0.01
    c = params.center_pull
    base = (1 - c) * k * (1 - obs.price / p_max) + c * k / 2
    if not obs.visible_history:
        return _clamp(round(base), k)
    last = obs.visible_history[-1].realized_total
    if len(obs.visible_history) >= 2:
        prev = obs.visible_history[-2].realized_total
        trend = 2 * last - prev
    else:
        trend = last
    w, g = params.anchor_weight, params.trend_weight
    blended = (1 - w - g) * base + w * last + g * trend
    return _clamp(round(blended), k)


def _clamp(n: int, k: int) -> int:
    return max(0, min(k, n))


class HeuristicAgent(Agent):
    def __init__(self, agent_id: int, theta: float, params: HeuristicParams):
        super().__init__(agent_id, theta)
        self.params = params

    def decide(self, obs: Observation) -> Decision:
        y_hat = heuristic_expectation(self.params, obs)
        action = best_response(self.theta, obs.beta, y_hat, obs.price)
        return Decision(expected_total=y_hat, action=action)


class ReplayAgent(Agent):
    """Re-emits the decisions recorded for one agent in a prior run.

    For static runs several single-round logs share round_index 0, so the
    lookup key is the position in the replay sequence, tracked per agent.
    """

    def __init__(self, agent_id: int, theta: float, decisions: list[Decision]):
        super().__init__(agent_id, theta)
        self._decisions = list(decisions)
        self._cursor = 0

    def decide(self, obs: Observation) -> Decision:
        if self._cursor >= len(self._decisions):
            raise MissingReplayEntry(
                f"agent {self.agent_id}: no recorded decision at position {self._cursor}"
            )
        d = self._decisions[self._cursor]
        self._cursor += 1
        return d


DEFAULT_PROMPT_TEMPLATE = """\
You are participant {agent_id} in a participation game with {population} agents in total.
Your private standalone value is theta = {theta}.
The network-effect strength is beta = {beta}.
Payoff rule: {utility_definition}.
N is the total number of participants this round, which you must predict.
The current price is p = {price} (round {round_index}).
{history_block}
Reply with a single JSON object and nothing else:
{{"expected_total": <integer 0..{population}>, "action": "attend" or "not_attend", "rationale": "<short text>"}}
"""

NO_HISTORY_CLAUSE = "No history is available; this is your first decision."


def render_history_block(history: tuple[HistoryEntry, ...]) -> str:
    if not history:
        return NO_HISTORY_CLAUSE
    lines = ["Your visible history, oldest first:"]
    for h in history:
        lines.append(
            f"- round {h.round_index}: price {h.price}, realized participants "
            f"{h.realized_total}, your expectation {h.own_expectation}, "
            f"your action {h.own_action.value}, your payoff {h.own_payoff}"
        )
    return "\n".join(lines)


def render_prompt(obs: Observation, agent_id: int, template: str = DEFAULT_PROMPT_TEMPLATE) -> str:
    """Deterministic text rendering of one observation."""
    try:
        return template.format(
            agent_id=agent_id,
            theta=obs.agent_theta,
            beta=obs.beta,
            population=obs.population,
            price=obs.price,
            round_index=obs.round_index,
            utility_definition=obs.utility_definition,
            history_block=render_history_block(obs.visible_history),
        )
    except KeyError as exc:
        raise ValueError(f"template references unknown placeholder {exc}") from exc


def parse_reply(text: str, population: int) -> Decision:
    """Extract the first schema-valid JSON object from a model reply.

    Out-of-range expected_total is clamped into [0, population] with the
    pre-clamp value recorded as a warning.
    """
    obj = _first_json_object(text)
    if not isinstance(obj, dict):
        raise SchemaViolation("reply JSON is not an object")
    if "expected_total" not in obj or "action" not in obj:
        raise SchemaViolation("reply missing required fields")
    raw = obj["expected_total"]
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise SchemaViolation(f"expected_total must be an integer, got {raw!r}")
    action_str = obj["action"]
    if action_str not in ("attend", "not_attend"):
        raise SchemaViolation(f"action must be 'attend' or 'not_attend', got {action_str!r}")
    rationale = obj.get("rationale")
    if rationale is not None and not isinstance(rationale, str):
        raise SchemaViolation("rationale must be a string when present")
    warnings: tuple[str, ...] = ()
    y_hat = raw
    if not 0 <= y_hat <= population:
        y_hat = _clamp(y_hat, population)
        warnings = (f"expected_total {raw} outside [0, {population}], clamped to {y_hat}",)
        log.warning(warnings[0])
    return Decision(
        expected_total=y_hat,
        action=Action(action_str),
        rationale=rationale,
        warnings=warnings,
    )


def _first_json_object(text: str):
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, i)
        except ValueError:
            continue
        return obj
    raise NoJsonFound("no JSON object in reply")


@dataclass
class GatewayConfig:
    endpoint: str
    model: str
    temperature: float = 0.7
    max_tokens: int = 256
    timeout_s: float = 60.0
    max_attempts: int = 3
    backoff_s: float = 1.0
    api_key_env: str = "FEEBENCH_API_KEY"

    def __post_init__(self):
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be in [0, 2]")


class GatewayAgent(Agent):
    """Asks a chat-completion endpoint for each decision.

    transport is injectable for tests: a callable taking (system_prompt,
    user_prompt) and returning the raw reply text.  The default posts an
    OpenAI-style chat completion request.
    """

    def __init__(
        self,
        agent_id: int,
        theta: float,
        config: GatewayConfig,
        template: str = DEFAULT_PROMPT_TEMPLATE,
        transport=None,
        sleep=time.sleep,
    ):
        super().__init__(agent_id, theta)
        self.config = config
        self.template = template
        self._transport = transport or self._http_transport
        self._sleep = sleep

    def system_prompt(self) -> str:
        return (
            f"You are agent {self.agent_id} with private standalone value "
            f"theta = {self.theta}. Decide whether to participate each round "
            f"and always answer with one JSON object."
        )

    def decide(self, obs: Observation) -> Decision:
        user_prompt = render_prompt(obs, self.agent_id, self.template)
        last_error: Exception | None = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                self._sleep(self.config.backoff_s * 2 ** (attempt - 1))
            try:
                reply = self._transport(self.system_prompt(), user_prompt)
                return parse_reply(reply, obs.population)
            except (ReplyParseError, GatewayTransportError) as exc:
                last_error = exc
                log.warning("agent %d attempt %d failed: %s", self.agent_id, attempt + 1, exc)
        raise GatewayExhaustedRetries(
            f"agent {self.agent_id}: {self.config.max_attempts} attempts failed"
        ) from last_error

    def _http_transport(self, system_prompt: str, user_prompt: str) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
        }
        try:
            resp = httpx.post(
                self.config.endpoint,
                json=payload,
                headers=headers,
                timeout=self.config.timeout_s,
            )
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise GatewayTransportError(str(exc)) from exc


def realized_payoff(theta: float, beta: float, realized_total: int, price: float, action: Action) -> float:
    """Attendees earn the utility at the realized total; non-attendees earn 0."""
    if action is Action.ATTEND:
        return utility(theta, beta, realized_total, price)
    return 0.0

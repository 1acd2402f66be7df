"""LLM-driven design-space exploration with structured prompting.

Each round builds a four-part prompt — task description, current best
solutions, generation instructions with pragma-impact rules, and a worked
chain-of-thought exemplar — asks a backend for a batch of configurations,
parses and validates the reply, scores the survivors through an evaluator
(oracle- or predictor-backed), and folds them into a Pareto archive that
seeds the next round's prompt. Rounds that parse to nothing fall back to
random sampling so the evaluation budget is always spent.

Three backends ship: a chat-completions HTTP client, a transcript replayer
for bit-deterministic runs, and a seeded mutation mock that mutates the
prompt's example configurations (useful for tests and offline work).
Simulated-annealing and random-sampling baselines share the evaluator and
archive types so runs are directly comparable.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .designspace import DesignConfiguration, DesignSpace, merge, neighbor, \
    sample_distinct, sample_random
from .docio import dump_document, read_document
from .pareto import ParetoArchive, adrs, objectives_from_metrics
from .textembed import content_key


class BackendError(RuntimeError):
    pass


class PromptError(ValueError):
    pass


class DseAbort(RuntimeError):
    """Exploration stopped early; partial archive and history are attached."""

    def __init__(self, archive: ParetoArchive, history: list, cause: Exception):
        self.archive = archive
        self.history = history
        self.cause = cause
        super().__init__(f"exploration aborted: {cause}")


# ---------------------------------------------------------------------------
# prompt construction
# ---------------------------------------------------------------------------

PIPELINE_IMPACT = ('Setting a PIPELINE directive to "off" keeps LUT and FF usage low '
                   'but raises latency; "flatten" does the opposite, cutting latency '
                   'further than "on" while consuming the most resources.')

IMPACT_RULES = (
    "- Higher UNROLL factors lower latency and raise LUT, FF and DSP usage.",
    f"- {PIPELINE_IMPACT}",
    "- Higher ARRAY_PARTITION factors add BRAM and LUT but raise memory bandwidth, "
    "letting unrolled memory-bound loops actually reach their lower latency.",
    "- Higher TILE factors save BRAM at a small LUT/FF cost and leave latency unchanged.",
)

PROMPT_MODES = ("peodse", "zero-shot", "few-shot", "instruction-only")


@dataclass(frozen=True)
class PeodsePrompt:
    task_description: str
    examples: str
    task_instruction: str
    generation_exemplars: str
    request: str

    def render(self) -> str:
        parts = ["# HLS pragma design-space exploration"]
        for title, body in (("Task description", self.task_description),
                            ("High-quality solution examples", self.examples),
                            ("Task instruction", self.task_instruction),
                            ("Solution generation exemplars", self.generation_exemplars),
                            ("Request", self.request)):
            if body:
                parts.append(f"## {title}\n{body}")
        return "\n\n".join(parts) + "\n"


def _format_value(value) -> str:
    return str(value)


def _render_config(space: DesignSpace, config: DesignConfiguration) -> str:
    parts = [f"{d.name}={_format_value(d.value(config.assignment[d.name]))}"
             for d in space.directives]
    return "; ".join(parts)


def _example_sort_key(entry):
    obj = entry.objectives
    if obj.shape[0] == 2:
        return (float(obj[1]), float(obj[0]))
    return tuple(float(v) for v in obj)


def build_prompt(state: "ExplorationState", space: DesignSpace, k: int, batch: int,
                 mode: str = "peodse") -> PeodsePrompt:
    """Deterministic prompt for the current archive; ``mode`` picks the ablation."""
    if not space.directives:
        raise PromptError("empty design space")
    if k < 1 or batch < 1:
        raise PromptError("k and batch size must be >= 1")
    if mode not in PROMPT_MODES:
        raise PromptError(f"unknown prompt mode {mode!r}")

    catalog = "\n".join(
        f"- {d.name}: {d.kind} on {d.target}, values "
        f"[{', '.join(_format_value(v) for v in d.domain)}]"
        for d in space.directives)
    description = (
        "You are exploring pragma directives for a hardware kernel compiled by "
        "high-level synthesis. Each configuration assigns one value to every "
        "directive below; the goal is a set of configurations that are "
        "Pareto-optimal in (latency cycles, peak resource utilization), both "
        "minimized.\n"
        f"{catalog}\n"
        f"The design space holds {space.size} configurations; "
        f"{len(state.evaluated)} have been evaluated so far.\n"
        f"{PIPELINE_IMPACT}")

    ranked = sorted(state.archive.entries, key=_example_sort_key)[:k]
    if ranked:
        lines = []
        for i, entry in enumerate(ranked, start=1):
            objs = ", ".join(f"{v:.6g}" for v in entry.objectives)
            lines.append(f"{i}. objectives=({objs}); config: "
                         f"{_render_config(space, entry.config)}")
        examples = ("Current best known configurations, strongest first "
                    "(lower utilization, then lower latency):\n" + "\n".join(lines))
    else:
        examples = "none yet - this is the first round."

    instruction = (
        "Propose configurations likely to extend the Pareto front. Apply this "
        "domain knowledge:\n" + "\n".join(IMPACT_RULES) + "\n"
        "Use only the admissible values listed above, do not repeat "
        "configurations already shown, and spread the batch across different "
        "latency/resource trade-offs.")

    exemplars = _worked_example(space)

    request = (
        f"Propose exactly {batch} configurations. Reply with one fenced code "
        "block (```), containing each configuration as "
        f"{len(space.directives)} lines of name=value, one line per directive, "
        "with a single blank line between configurations.")

    if mode == "zero-shot":
        return PeodsePrompt(description, "", "", "", request)
    if mode == "few-shot":
        return PeodsePrompt(description, examples, "", "", request)
    if mode == "instruction-only":
        return PeodsePrompt(description, "", instruction, "", request)
    prompt = PeodsePrompt(description, examples, instruction, exemplars, request)
    for name, body in (("task_description", prompt.task_description),
                       ("examples", prompt.examples),
                       ("task_instruction", prompt.task_instruction),
                       ("generation_exemplars", prompt.generation_exemplars),
                       ("request", prompt.request)):
        if not body:
            raise PromptError(f"prompt section {name} is empty")
    return prompt


def _worked_example(space: DesignSpace) -> str:
    steps = []
    lines = []
    for d in space.directives:
        if d.kind == "unroll" and len(d.domain) > 1:
            idx = 1
            steps.append(f"raise {d.name} one step to {d.value(idx)} to cut latency "
                         "while the LUT budget still has room")
        elif d.kind == "pipeline" and "on" in d.domain:
            idx = d.domain.index("on")
            steps.append(f"set {d.name} to on for a moderate latency/resource trade")
        else:
            idx = 0
            steps.append(f"keep {d.name} at {d.value(idx)} to hold resources down")
        lines.append(f"{d.name}={_format_value(d.value(idx))}")
    reasoning = "\n".join(f"{i}. {s}" for i, s in enumerate(steps, start=1))
    block = "\n".join(lines)
    return ("Worked example of deriving one configuration step by step:\n"
            f"{reasoning}\n"
            "which yields:\n```\n" + block + "\n```")


# ---------------------------------------------------------------------------
# parsing backend replies
# ---------------------------------------------------------------------------

_FENCE = re.compile(r"```[^\n]*\n(.*?)```", re.S)
_ASSIGN_LINE = re.compile(r"^([A-Za-z_][\w@.\-]*)\s*=\s*(.+?)\s*$")


def _parse_value(directive, raw: str):
    raw = raw.strip().strip('"').strip("'").rstrip(",;")
    if directive.kind == "pipeline":
        return raw if raw in directive.domain else None
    try:
        value = int(raw)
    except ValueError:
        return None
    return value if value in directive.domain else None


def _parse_group(lines: list[str], space: DesignSpace,
                 diagnostics: list[str]) -> DesignConfiguration | None:
    by_name = {d.name: d for d in space.directives}
    assignment: dict[str, int] = {}
    for line in lines:
        m = _ASSIGN_LINE.match(line.strip())
        if not m:
            continue
        name, raw = m.group(1), m.group(2)
        if name not in by_name:
            diagnostics.append(f"unknown directive {name!r} dropped")
            return None
        value = _parse_value(by_name[name], raw)
        if value is None:
            diagnostics.append(f"out-of-domain value {raw!r} for {name} dropped")
            return None
        assignment[name] = by_name[name].domain.index(value)
    missing = sorted(set(by_name) - set(assignment))
    if missing:
        if assignment:
            diagnostics.append(f"configuration missing directives {missing} dropped")
        return None
    return DesignConfiguration(assignment)


def parse_solutions(text: str, space: DesignSpace, batch: int,
                    already_evaluated: set[str] | None = None
                    ) -> tuple[list[DesignConfiguration], list[str]]:
    """Extract at most ``batch`` valid, novel configurations from a reply."""
    already = already_evaluated or set()
    diagnostics: list[str] = []
    configs: list[DesignConfiguration] = []
    seen: set[str] = set()
    for block in _FENCE.findall(text):
        group: list[str] = []
        for line in block.splitlines() + [""]:
            if line.strip():
                group.append(line)
                continue
            if group:
                config = _parse_group(group, space, diagnostics)
                group = []
                if config is None:
                    continue
                key = config.key()
                if key in already or key in seen:
                    diagnostics.append(f"duplicate configuration {key} dropped")
                    continue
                seen.add(key)
                configs.append(config)
                if len(configs) == batch:
                    return configs, diagnostics
    return configs, diagnostics


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

BACKEND_KINDS = ("http-chat", "replay", "mutation-mock")


@dataclass(frozen=True)
class LlmBackendSpec:
    kind: str
    endpoint: str = ""
    model: str = ""
    key_env: str = ""
    temperature: float = 0.7
    timeout: float = 60.0
    retries: int = 3
    transcript_path: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http-chat" and not (self.endpoint and self.model and self.key_env):
            raise ValueError("http-chat backend needs endpoint, model and key_env")
        if self.kind == "replay" and not self.transcript_path:
            raise ValueError("replay backend needs transcript_path")
        if self.kind != "http-chat" and (self.endpoint or self.model or self.key_env):
            raise ValueError("endpoint/model/key_env are http-chat fields")
        if self.kind != "replay" and self.transcript_path:
            raise ValueError("transcript_path is a replay field")


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class MutationMockBackend:
    """Seeded pseudo-LLM that behaves the way the prompt instructs.

    The first round (no examples yet) proposes landmark configurations that
    span the trade-off space: all directives at their lowest values, all at
    their highest, and alternating extremes. Later rounds read the example
    configurations out of the prompt and mix three moves per batch — jump one
    directive of a strong example to its maximum, step a directive of a
    (cycled) example one position along its ordered domain, and occasionally
    sample uniformly. Replies mirror the shape of a real chat answer (prose
    plus one fenced block) so the whole parse path is exercised.
    """

    _CONFIG_LINE = re.compile(r"config: ([^\n]+)")

    def __init__(self, space: DesignSpace, seed: int, batch: int,
                 explore_prob: float = 0.1):
        self.space = space
        self.batch = batch
        self.explore_prob = explore_prob
        self._rng = np.random.default_rng(seed)
        self._cursor = 0
        self._emitted: set[str] = set()

    def _parse_examples(self, prompt: str) -> list[DesignConfiguration]:
        by_name = {d.name: d for d in self.space.directives}
        out = []
        for text in self._CONFIG_LINE.findall(prompt):
            assignment = {}
            for part in text.split(";"):
                if "=" not in part:
                    continue
                name, raw = part.split("=", 1)
                d = by_name.get(name.strip())
                if d is None:
                    break
                value = _parse_value(d, raw)
                if value is None:
                    break
                assignment[name.strip()] = d.domain.index(value)
            if len(assignment) == len(by_name):
                out.append(DesignConfiguration(assignment))
        return out

    def _landmark(self, i: int) -> DesignConfiguration:
        dirs = self.space.directives
        if i == 0:
            return DesignConfiguration({d.name: 0 for d in dirs})
        if i == 1:
            return DesignConfiguration({d.name: len(d.domain) - 1 for d in dirs})
        return DesignConfiguration({d.name: (len(d.domain) - 1) * ((j + i) % 2)
                                    for j, d in enumerate(dirs)})

    def _raise_to_max(self, base: DesignConfiguration) -> DesignConfiguration:
        dirs = self.space.directives
        d = dirs[int(self._rng.integers(len(dirs)))]
        assignment = dict(base.assignment)
        assignment[d.name] = len(d.domain) - 1
        return DesignConfiguration(assignment)

    def _step(self, base: DesignConfiguration) -> DesignConfiguration | None:
        dirs = self.space.directives
        d = dirs[self._cursor % len(dirs)]
        self._cursor += 1
        idx = base.assignment[d.name]
        step = 1 if self._rng.random() < 0.5 else -1
        new = idx + step
        if not 0 <= new < len(d.domain):
            new = idx - step
        if not 0 <= new < len(d.domain) or new == idx:
            return None
        assignment = dict(base.assignment)
        assignment[d.name] = new
        return DesignConfiguration(assignment)

    def _render(self, config: DesignConfiguration) -> str:
        return "\n".join(
            f"{d.name}={_format_value(d.value(config.assignment[d.name]))}"
            for d in self.space.directives)

    def complete(self, prompt: str) -> str:
        bases = self._parse_examples(prompt)
        groups: list[str] = []
        attempts = 0
        while len(groups) < self.batch and attempts < 60 * self.batch:
            attempts += 1
            slot = len(groups)
            if not bases:
                candidate = self._landmark(slot) if slot < 3 else \
                    sample_random(self.space, self._rng, 1)[0]
            elif self._rng.random() < self.explore_prob:
                candidate = sample_random(self.space, self._rng, 1)[0]
            elif slot == 0:
                candidate = self._raise_to_max(
                    bases[int(self._rng.integers(len(bases)))])
            else:
                stepped = self._step(bases[self._cursor % len(bases)])
                if stepped is None:
                    continue
                candidate = stepped
            if candidate.key() in self._emitted:
                continue
            self._emitted.add(candidate.key())
            groups.append(self._render(candidate))
        if not groups:
            groups.append(self._render(sample_random(self.space, self._rng, 1)[0]))
        return ("Here are my proposed configurations.\n\n```\n"
                + "\n\n".join(groups) + "\n```\n")


class ReplayBackend:
    """Plays back a recorded transcript, verifying each prompt hash."""

    def __init__(self, entries: list[dict]):
        self.entries = entries
        self._next = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayBackend":
        doc = read_document(path)
        entries = doc.get("entries")
        if not isinstance(entries, list):
            raise BackendError(f"{path}: transcript has no entries list")
        return cls(entries)

    def complete(self, prompt: str) -> str:
        if self._next >= len(self.entries):
            raise BackendError(f"transcript exhausted after {len(self.entries)} steps")
        entry = self.entries[self._next]
        if entry.get("prompt_hash") != prompt_hash(prompt):
            raise BackendError(f"transcript mismatch at step {self._next}: "
                               "prompt differs from the recorded one")
        self._next += 1
        return entry["response"]


class RecordingBackend:
    """Wraps another backend and records (prompt hash, response) pairs."""

    def __init__(self, inner):
        self.inner = inner
        self.entries: list[dict] = []

    def complete(self, prompt: str) -> str:
        response = self.inner.complete(prompt)
        self.entries.append({"prompt_hash": prompt_hash(prompt), "response": response})
        return response

    def save(self, path: str | Path) -> None:
        Path(path).write_text(dump_document({"entries": self.entries}), encoding="utf-8")


class HttpChatBackend:
    """Chat-completions wire format over HTTP with retry + exponential backoff."""

    def __init__(self, spec: LlmBackendSpec, backoff: float = 1.0):
        self.spec = spec
        self.backoff = backoff

    def complete(self, prompt: str) -> str:
        import requests

        key = os.environ.get(self.spec.key_env, "")
        if not key:
            raise BackendError(f"environment variable {self.spec.key_env} is not set")
        payload = {"model": self.spec.model,
                   "messages": [{"role": "user", "content": prompt}],
                   "temperature": self.spec.temperature}
        last: Exception | None = None
        for attempt in range(self.spec.retries + 1):
            try:
                resp = requests.post(self.spec.endpoint, json=payload,
                                     headers={"Authorization": f"Bearer {key}"},
                                     timeout=self.spec.timeout)
                if resp.status_code in (429, 500, 502, 503, 504):
                    raise BackendError(f"retryable status {resp.status_code}")
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:  # transport or schema failure
                last = exc
                if attempt < self.spec.retries:
                    time.sleep(self.backoff * (2 ** attempt))
        raise BackendError(f"backend failed after {self.spec.retries + 1} attempts: {last}")


def build_backend(spec: LlmBackendSpec, space: DesignSpace, batch: int):
    if spec.kind == "mutation-mock":
        return MutationMockBackend(space, spec.seed, batch)
    if spec.kind == "replay":
        return ReplayBackend.from_file(spec.transcript_path)
    return HttpChatBackend(spec)


# ---------------------------------------------------------------------------
# evaluators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    objectives: np.ndarray
    feasible: bool


class OracleEvaluator:
    """Ground-truth evaluator over the synthetic QoR model."""

    def __init__(self, model, space: DesignSpace, mode: str = "2d"):
        from .oracle import evaluate  # local import keeps module load light
        self._evaluate = evaluate
        self.model = model
        self.space = space
        self.mode = mode

    def __call__(self, config: DesignConfiguration) -> EvalResult:
        metrics = self._evaluate(self.model, self.space, config)
        return EvalResult(objectives=objectives_from_metrics(
            metrics, self.model.capacities, self.mode), feasible=metrics.feasible)


class MpmEvaluator:
    """Predictor-backed evaluator: builds graph+text per configuration and
    scores it with the trained multimodal model instead of the oracle."""

    def __init__(self, predictor, space: DesignSpace, base_graph, behavioral,
                 provider, scaler, numeric_maxima, mode: str = "2d"):
        self.predictor = predictor
        self.space = space
        self.base_graph = base_graph
        self.behavioral = behavioral
        self.provider = provider
        self.scaler = scaler
        self.numeric_maxima = numeric_maxima
        self.mode = mode
        self._cache: dict[str, EvalResult] = {}

    @classmethod
    def from_oracle_model(cls, predictor, model, space: DesignSpace, provider,
                          mode: str = "2d") -> "MpmEvaluator":
        from .cdfg import build_cdfg
        from .dataset import TargetScaler
        from .designspace import BehavioralDescription
        from .oracle import describe_kernel, max_latency

        desc = describe_kernel(model, space)
        return cls(predictor=predictor, space=space, base_graph=build_cdfg(desc),
                   behavioral=BehavioralDescription(model.kernel_id, desc.source_template),
                   provider=provider,
                   scaler=TargetScaler(dict(model.capacities), max_latency(model, space)),
                   numeric_maxima=None, mode=mode)

    def __call__(self, config: DesignConfiguration) -> EvalResult:
        from .cdfg import encode_node_features, insert_pragma_nodes
        from .dataset import GraphTextSample
        from .oracle import QorMetrics

        key = config.key()
        if key in self._cache:
            return self._cache[key]
        text = merge(config, self.behavioral, self.space)
        graph = insert_pragma_nodes(self.base_graph, self.space, config)
        sample = GraphTextSample(
            graph=graph,
            node_features=encode_node_features(graph, self.numeric_maxima),
            text_embedding=self.provider.embed(text),
            targets=np.zeros(5), config=config, embed_key=content_key(text))
        pred = self.predictor.predict(sample, self.scaler)
        raw = pred.denormalized
        metrics = QorMetrics(latency_cycles=max(1, int(raw[0])), lut=int(raw[1]),
                             dsp=int(raw[2]), ff=int(raw[3]), bram=int(raw[4]),
                             feasible=True)
        caps = self.scaler.capacities
        feasible = (metrics.lut <= caps["lut"] and metrics.dsp <= caps["dsp"]
                    and metrics.ff <= caps["ff"] and metrics.bram <= caps["bram"])
        result = EvalResult(objectives=objectives_from_metrics(metrics, caps, self.mode),
                            feasible=feasible)
        self._cache[key] = result
        return result


# ---------------------------------------------------------------------------
# exploration loop and baselines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IterationRecord:
    evaluations: int
    adrs: float | None


@dataclass
class DseConfig:
    max_evaluations: int = 100   # N_max
    batch_size: int = 5          # configurations requested per round
    example_count: int = 8       # archive members shown in the prompt
    seed: int = 0
    prompt_mode: str = "peodse"


@dataclass
class ExplorationState:
    budget: int
    evaluated: dict[str, EvalResult] = field(default_factory=dict)
    archive: ParetoArchive = field(default_factory=ParetoArchive)
    iteration: int = 0
    history: list[IterationRecord] = field(default_factory=list)

    def record(self, reference) -> None:
        value = None
        if reference is not None and len(self.archive) > 0:
            value = adrs(reference, self.archive)
        self.history.append(IterationRecord(evaluations=len(self.evaluated), adrs=value))


def _track(state: ExplorationState, evaluator: Callable,
           config: DesignConfiguration) -> EvalResult:
    result = evaluator(config)
    state.evaluated[config.key()] = result
    if result.feasible:
        state.archive.insert(config, result.objectives)
    return result


def _fallback_random(space: DesignSpace, rng: np.random.Generator, batch: int,
                     evaluated: dict) -> list[DesignConfiguration]:
    out: list[DesignConfiguration] = []
    seen = set(evaluated)
    for _ in range(batch * 50):
        if len(out) == batch:
            break
        config = sample_random(space, rng, 1)[0]
        if config.key() not in seen:
            seen.add(config.key())
            out.append(config)
    return out


def run_llm4dse(space: DesignSpace, evaluator: Callable, backend, cfg: DseConfig,
                reference: ParetoArchive | None = None
                ) -> tuple[ParetoArchive, list[IterationRecord]]:
    """Prompt / generate / evaluate / archive until the budget is spent.

    Rounds whose replies parse to zero valid configurations fall back to
    uniform random sampling for that round. Backend failures abort with the
    partial archive attached to the raised :class:`DseAbort`.
    """
    if cfg.max_evaluations < cfg.batch_size:
        raise ValueError("budget must cover at least one batch")
    state = ExplorationState(budget=cfg.max_evaluations)
    rng = np.random.default_rng(cfg.seed)
    target = min(cfg.max_evaluations, space.size)
    while len(state.evaluated) < target:
        state.iteration += 1
        prompt = build_prompt(state, space, cfg.example_count, cfg.batch_size,
                              mode=cfg.prompt_mode).render()
        try:
            response = backend.complete(prompt)
        except BackendError as exc:
            raise DseAbort(state.archive, state.history, exc) from exc
        configs, _diags = parse_solutions(response, space, cfg.batch_size,
                                          set(state.evaluated))
        if not configs:
            configs = _fallback_random(space, rng, cfg.batch_size, state.evaluated)
            if not configs:
                break
        remaining = target - len(state.evaluated)
        for config in configs[:remaining]:
            _track(state, evaluator, config)
        state.record(reference)
    return state.archive, state.history


def random_baseline(space: DesignSpace, evaluator: Callable, cfg: DseConfig,
                    reference: ParetoArchive | None = None
                    ) -> tuple[ParetoArchive, list[IterationRecord]]:
    state = ExplorationState(budget=cfg.max_evaluations)
    rng = np.random.default_rng(cfg.seed)
    target = min(cfg.max_evaluations, space.size)
    for config in sample_distinct(space, rng, target):
        _track(state, evaluator, config)
        state.record(reference)
    return state.archive, state.history


def sa_baseline(space: DesignSpace, evaluator: Callable, cfg: DseConfig,
                reference: ParetoArchive | None = None, latency_weight: float = 1.0,
                t_start: float = 1.0, cooling: float = 0.95
                ) -> tuple[ParetoArchive, list[IterationRecord]]:
    """Simulated annealing on max-utilization + weighted normalized latency.

    Every distinct evaluated point feeds the archive; revisits are served from
    the evaluation cache and do not consume budget.
    """
    state = ExplorationState(budget=cfg.max_evaluations)
    rng = np.random.default_rng(cfg.seed)
    target = min(cfg.max_evaluations, space.size)

    current = sample_random(space, rng, 1)[0]
    current_res = _track(state, evaluator, current)
    state.record(reference)
    latency_ref = max(1.0, float(current_res.objectives[0]))

    def cost(res: EvalResult) -> float:
        return float(res.objectives[-1]) + latency_weight * float(res.objectives[0]) \
            / latency_ref

    temperature = t_start
    guard = 0
    while len(state.evaluated) < target and guard < 1000 * target:
        guard += 1
        candidate = neighbor(space, current, rng)
        key = candidate.key()
        if key in state.evaluated:
            cand_res = state.evaluated[key]
        else:
            cand_res = _track(state, evaluator, candidate)
            state.record(reference)
        delta = cost(cand_res) - cost(current_res)
        if delta <= 0 or rng.random() < np.exp(-delta / max(temperature, 1e-12)):
            current, current_res = candidate, cand_res
        temperature *= cooling
    return state.archive, state.history


def emit_convergence(history: list[IterationRecord], path: str | Path) -> None:
    """CSV of (evaluations, adrs) per iteration; adrs blank when no reference."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["evaluations", "adrs"])
        for record in history:
            writer.writerow([record.evaluations,
                             "" if record.adrs is None else f"{record.adrs:.12g}"])

"""Parsing stage: few-shot prompt assembly under a token budget, candidate
sampling, and candidate parsing.

The prompt is an instruction line, one block per exemplar (schema + three
sample rows + question + program), and the inference example rendered with
the full table and an empty program slot. Exemplars are dropped from the
tail until the prompt fits the budget; if none are left, inference-table
rows are truncated instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

from .backend import Backend, CompletionRequest, approx_tokens
from .errors import BudgetExhausted, FormatError, IoError, ParseError
from .interp import ngram_similarity
from .syntax import Program, parse
from .table import Table, linearize, load_table, normalize, table_from_json

PROGRAM_SLOT = "Binder:"

INSTRUCTIONS = {
    "wikitq": "Generate SQL given the question and table to answer the question correctly.",
    "tabfact": "Generate SQL given the statement and table to verify the statement correctly.",
    "mmqa": "Generate SQL given the question, table, passages, image captions to answer the question correctly.",
}

_PARSING_DEFAULTS = {
    # temperature, sampling_n, num_shots
    "wikitq": (0.4, 20, 14),
    "tabfact": (0.6, 50, 14),
    "mmqa": (0.4, 20, 18),
}


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.4
    top_p: float = 1.0
    max_output_tokens: int = 512
    sampling_n: int = 20
    stop: tuple = ("\n\n",)
    num_shots: int = 14
    token_budget: int = 8000
    prompt_rows: int = 3

    @classmethod
    def for_dataset(cls, name: str, **overrides) -> "GenerationConfig":
        try:
            temperature, n, shots = _PARSING_DEFAULTS[name]
        except KeyError:
            raise ValueError(f"no generation defaults for dataset {name!r}")
        cfg = cls(temperature=temperature, sampling_n=n, num_shots=shots)
        return replace(cfg, **overrides) if overrides else cfg


@dataclass(frozen=True)
class Exemplar:
    table: Table
    title: str
    question: str
    program_text: str


@dataclass(frozen=True)
class PromptPlan:
    text: str
    num_shots: int
    inference_rows: int

    @property
    def tokens(self) -> int:
        return approx_tokens(self.text)


def _exemplar_block(ex: Exemplar, rows: int) -> str:
    return (f"{linearize(ex.table, ex.title, rows, full=False)}\n"
            f"Q: {ex.question}\n"
            f"{PROGRAM_SLOT} {ex.program_text}")


def _inference_block(table: Table, title: str, question: str, rows: int) -> str:
    return (f"{linearize(table, title, rows, full=True)}\n"
            f"Q: {question}\n"
            f"{PROGRAM_SLOT} ")


def plan_parse_prompt(instruction: str, exemplars: list, table: Table,
                      title: str, question: str,
                      cfg: GenerationConfig = GenerationConfig()) -> PromptPlan:
    """Assemble the prompt, shrinking shots first and inference rows second."""
    shots = list(exemplars[:cfg.num_shots])

    def assemble(k: int, rows: int) -> str:
        blocks = [instruction]
        blocks.extend(_exemplar_block(ex, cfg.prompt_rows) for ex in shots[:k])
        blocks.append(_inference_block(table, title, question, rows))
        return "\n\n".join(blocks)

    full_rows = table.row_count
    for k in range(len(shots), -1, -1):
        text = assemble(k, full_rows)
        if approx_tokens(text) <= cfg.token_budget:
            return PromptPlan(text, k, full_rows)
    # zero shots still too big: cut inference rows (largest fitting count)
    lo, hi, best = 0, full_rows - 1, None
    while lo <= hi:
        mid = (lo + hi) // 2
        if approx_tokens(assemble(0, mid)) <= cfg.token_budget:
            best = mid
            lo = mid + 1
        else:
            hi = mid - 1
    if best is None:
        raise BudgetExhausted(
            f"prompt exceeds the {cfg.token_budget}-token budget even with no "
            f"exemplars and no inference rows")
    return PromptPlan(assemble(0, best), 0, best)


def build_parse_prompt(instruction: str, exemplars: list, table: Table,
                       title: str, question: str,
                       cfg: GenerationConfig = GenerationConfig()) -> str:
    return plan_parse_prompt(instruction, exemplars, table, title, question, cfg).text


def sample_candidates(backend: Backend, prompt: str,
                      cfg: GenerationConfig = GenerationConfig()) -> list:
    """Exactly sampling_n completions, stop-truncated and trimmed."""
    req = CompletionRequest(prompt, cfg.temperature, cfg.top_p,
                            cfg.max_output_tokens, cfg.sampling_n, cfg.stop)
    return [text.strip() for text in backend.complete(req)]


def parse_candidates(texts: list) -> list:
    """Parse each candidate independently; failures stay in the list as
    ParseError values so votes and reports can see them."""
    out = []
    for text in texts:
        try:
            out.append(parse(text))
        except ParseError as e:
            out.append(e)
    return out


# ---- exemplar selection ----

ExemplarSelector = Callable[[str, list, int], list]


def fixed_order_selector(question: str, exemplars: list, k: int) -> list:
    return list(exemplars[:k])


def ngram_selector(question: str, exemplars: list, k: int) -> list:
    """Pick the k exemplars whose questions overlap the query most."""
    if k <= 0:
        return []
    scored = sorted(enumerate(exemplars),
                    key=lambda e: (-ngram_similarity(question, e[1].question), e[0]))
    return [ex for _, ex in scored[:k]]


SELECTORS = {"fixed": fixed_order_selector, "ngram": ngram_selector}


def load_exemplars(path) -> list:
    """JSON array of {title, table_path | table, question, program}; table
    paths resolve relative to the file."""
    p = Path(path)
    try:
        entries = json.loads(p.read_text(encoding="utf-8"))
    except OSError as e:
        raise IoError(f"cannot read exemplar file {p}: {e}")
    except json.JSONDecodeError as e:
        raise FormatError(f"bad JSON in {p.name}: {e}")
    out = []
    for i, entry in enumerate(entries):
        try:
            title = entry["title"]
            question = entry["question"]
            program = entry["program"]
            if "table" in entry:
                t = table_from_json(entry["table"], title=title)
            else:
                t = load_table((p.parent / entry["table_path"]).resolve())
        except (TypeError, KeyError) as e:
            raise FormatError(f"{p.name}[{i}]: missing field {e}")
        parse(program)  # exemplar programs must be well-formed
        out.append(Exemplar(normalize(t), title, question, program))
    return out

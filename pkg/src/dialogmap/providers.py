"""Analysis providers: the deterministic mock and a generic HTTP adapter.

The mock is a pure function of (seed, task, payload, attempt) built on fixed
rule tables, so every pipeline behavior is reproducible in tests without a
hosted model. Seeds in the corruption range additionally emit broken outputs
on a deterministic ~30% of calls to exercise fault handling.

The HTTP adapter speaks the common chat-completion request shape and is the
only place provider wire formats appear. Prompt texts live as versioned
template files under prompts/.
"""

from __future__ import annotations

import hashlib
import json
import re
from importlib import resources
from typing import Any

from .canonical import canonical_dumps
from .errors import BadConfig, MalformedProviderOutput, ProviderTimeout
from .pipeline import Provider, ProviderRequest, Task
from .types import ProviderConfig

# --- mock rule tables (fixed; tests and oracles rely on these) ---

BACK_CHANNEL_TURNS = frozenset({"yeah", "agreed", "ok", "mm-hmm"})
IDEA_PHRASES = ("we could", "i think", "how about", "propose")
PRO_WORDS = ("benefit", "advantage", "helps", "cheap")
CON_WORDS = ("problem", "concern", "expensive", "risk")

NEW_TOPIC_PHRASE = "moving on"

STOPWORDS = frozenset(
    """a an the i you we they he she it is are was were be been being to of in on
    at for with and or but so not no yes do does did have has had this that these
    those there here what when where which who whom how why can could should would
    will may might must just really very too also as if then than from by up down
    out over under about into after before during me my your our their his her its
    them us let lets s re m ve d ll t don didn isn aren won
    yeah agreed ok okay mm-hmm hmm uh-huh""".split()
)

LINK_LABEL_ANSWERS = "Answers"
LINK_LABEL_SUPPORT = "Support"
LINK_LABEL_OPPOSE = "Oppose"

# Seeds in this closed range make the mock inject faults on ~30% of calls.
CORRUPTION_SEED_MIN = 900
CORRUPTION_SEED_MAX = 999
CORRUPTION_RATE = 0.30

_SENTENCE_RE = re.compile(r"[^.!?]*[.!?]+[\"')\]]*|[^.!?]+$")
_TRAILING_PUNCT = "\"')]} \t\n"


def split_sentences(text: str) -> list[str]:
    """Split on sentence-final punctuation, keeping delimiters attached.

    Each returned sentence is a stripped contiguous span of the input, so
    quotes built from it survive span validation.
    """
    return [m.strip() for m in _SENTENCE_RE.findall(text) if m.strip()]


def sentence_tag(sentence: str) -> str | None:
    """Apply the fixed tagging rules to one sentence; first match wins.

    Returns the prompt-form tag or None when no rule matches.
    """
    folded = sentence.casefold()
    if sentence.rstrip(_TRAILING_PUNCT).endswith("?"):
        return "[$Question]"
    if any(p in folded for p in IDEA_PHRASES):
        return "[$Position]"
    if any(w in folded for w in PRO_WORDS):
        return "[$Pro]"
    if any(w in folded for w in CON_WORDS):
        return "[$Con]"
    return None


def is_back_channel(turn_text: str) -> bool:
    folded = turn_text.casefold().strip().strip(".,!?…:; ")
    return folded in BACK_CHANNEL_TURNS


def content_tokens(text: str) -> set[str]:
    tokens = set()
    for raw in text.casefold().split():
        tok = raw.strip(".,!?…:;\"'()[]{}-")
        if tok and tok not in STOPWORDS:
            tokens.add(tok)
    return tokens


def _first_words(text: str, n: int) -> str:
    return " ".join(text.split()[:n])


def _fraction(seed: int, task: str, payload: dict[str, Any], attempt: int, salt: str) -> float:
    material = canonical_dumps(
        {"seed": seed, "task": task, "payload": payload, "attempt": attempt, "salt": salt}
    )
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def mock_output(seed: int, task: Task, payload: dict[str, Any], attempt: int = 0) -> str:
    """Deterministic raw output for (seed, task, payload, attempt)."""
    if CORRUPTION_SEED_MIN <= seed <= CORRUPTION_SEED_MAX:
        if _fraction(seed, task.value, payload, attempt, "fault") < CORRUPTION_RATE:
            return _corrupted_output(seed, task, payload, attempt)
    if task == Task.TOPIC_SEGMENT:
        return _mock_topic(payload)
    if task == Task.ANNOTATE_TURN:
        return _mock_annotation(payload)
    if task == Task.IDENTIFY_LINKS:
        return _mock_links(payload)
    raise ValueError(f"unknown task {task!r}")


def _mock_topic(payload: dict[str, Any]) -> str:
    new_turn = payload.get("new_turn", "")
    prev_turn = payload.get("previous_turn", "")
    topics = payload.get("topics", [])
    open_label = None
    for t in reversed(topics):
        if t.get("status") == "Open":
            open_label = t.get("label")
            break

    folded = new_turn.casefold()
    idx = folded.find(NEW_TOPIC_PHRASE)
    if idx >= 0:
        tail = new_turn[idx + len(NEW_TOPIC_PHRASE) :].lstrip(" ,.:;!-—")
        label = _first_words(tail, 6) or _first_words(new_turn, 6)
        tag = "$N-New"
    elif not topics or open_label is None:
        label = _first_words(new_turn, 6)
        tag = "$N-New"
    else:
        prev_toks = content_tokens(prev_turn)
        new_toks = content_tokens(new_turn)
        # content-free exchanges (back-channels) cannot shift the topic
        if not prev_toks or not new_toks or (prev_toks & new_toks):
            label = open_label
            tag = "$C-Continuation"
        else:
            label = _first_words(new_turn, 6)
            tag = "$N-New"
    return json.dumps(
        {"Identified topic": label, "Continuation/New Topic Tag": tag}, sort_keys=True
    )


def _mock_annotation(payload: dict[str, Any]) -> str:
    text = payload.get("turn_text", "")
    limit = payload.get("summary_word_limit", 6)
    entries: list[dict[str, str]] = []
    if not is_back_channel(text):
        for sentence in split_sentences(text):
            tag = sentence_tag(sentence)
            if tag is None:
                continue
            entries.append(
                {"Tag": tag, "Summary": _first_words(sentence, limit), "Quotes": sentence}
            )
    return json.dumps({"dialogueTagArray": entries}, sort_keys=True)


def _mock_links(payload: dict[str, Any]) -> str:
    links: list[dict[str, str]] = []
    last_question: str | None = None
    last_idea: str | None = None
    for node in payload.get("nodes", []):
        key, tag = node["key"], node["tag"]
        if tag == "Question":
            last_question = key
        elif tag == "Idea":
            if last_question is not None:
                links.append({"from": key, "to": last_question, "text": LINK_LABEL_ANSWERS})
            last_idea = key
        elif tag == "Pro":
            if last_idea is not None:
                links.append({"from": key, "to": last_idea, "text": LINK_LABEL_SUPPORT})
        elif tag == "Con":
            if last_idea is not None:
                links.append({"from": key, "to": last_idea, "text": LINK_LABEL_OPPOSE})
    return json.dumps({"linkDataArray": links}, sort_keys=True)


_TOPIC_CORRUPTIONS = (
    '{"Identified topic": "something"}',
    '{"Identified topic": "a label that has far too many words in it for anyone", "Continuation/New Topic Tag": "$N-New"}',
    'I could not decide on a topic for this exchange.',
    '{"Identified topic": "broken", "Continuation/New Topic Tag": "$N-New"',
)

_ANNOTATION_CORRUPTIONS = (
    '{"tags": []}',
    '{"dialogueTagArray": [{"Tag": "[$Comment]", "Summary": "odd", "Quotes": "odd"}]}',
    '{"dialogueTagArray": [{"Tag": "[$Pro]", "Summary": "no quote here"}]}',
    '{"dialogueTagArray": [{"Tag": "[$Pro]", "Summary": "broken", "Quotes": "broke',
)


def _corrupted_links(payload: dict[str, Any], pick: int) -> str:
    keys = [n["key"] for n in payload.get("nodes", [])]
    a = keys[0] if keys else "k0"
    b = keys[1] if len(keys) > 1 else a
    variants = (
        '{"links": []}',
        json.dumps({"linkDataArray": [
            {"from": a, "to": b, "text": "Support"},
            {"from": a, "to": b, "text": "Support"},
        ]}),
        json.dumps({"linkDataArray": [{"from": a, "to": "no-such-key", "text": "Support"}]}),
        json.dumps({"linkDataArray": [
            {"from": a, "to": b, "text": "Support"},
            {"from": b, "to": a, "text": "Support"},
        ]}),
        '{"linkDataArray": [{"from": 1, "to": 2, "text": "Supp',
    )
    return variants[pick % len(variants)]


def _corrupted_output(seed: int, task: Task, payload: dict[str, Any], attempt: int) -> str:
    pick = int(_fraction(seed, task.value, payload, attempt, "variant") * 1000)
    if task == Task.TOPIC_SEGMENT:
        return _TOPIC_CORRUPTIONS[pick % len(_TOPIC_CORRUPTIONS)]
    if task == Task.ANNOTATE_TURN:
        return _ANNOTATION_CORRUPTIONS[pick % len(_ANNOTATION_CORRUPTIONS)]
    return _corrupted_links(payload, pick)


class MockProvider:
    """Seeded deterministic provider; counts calls for replay assertions."""

    kind = "mock"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls = 0

    def complete(self, request: ProviderRequest) -> str:
        self.calls += 1
        return mock_output(self.seed, request.task, request.prompt_payload, request.attempt)


_PROMPT_FILES = {
    Task.TOPIC_SEGMENT: "topic_segmentation_v1.txt",
    Task.ANNOTATE_TURN: "turn_annotation_v1.txt",
    Task.IDENTIFY_LINKS: "link_identification_v1.txt",
}


def load_prompt(task: Task) -> str:
    return (
        resources.files("dialogmap.prompts").joinpath(_PROMPT_FILES[task]).read_text("utf-8")
    )


def render_user_message(task: Task, payload: dict[str, Any]) -> str:
    """Render the structured payload into the user message for the prompt."""
    parts: list[str] = []
    if task == Task.TOPIC_SEGMENT:
        topics = payload.get("topics", [])
        parts.append("Existing topic list: " + json.dumps(topics))
        parts.append("Previous turn: " + payload.get("previous_turn", ""))
        parts.append("New turn: " + payload.get("new_turn", ""))
    elif task == Task.ANNOTATE_TURN:
        limit = payload.get("summary_word_limit", 6)
        if limit != 6:
            parts.append(f"Keep every summary under {limit} words.")
        parts.append("Turn: " + payload.get("turn_text", ""))
    else:
        parts.append("Nodes: " + json.dumps(payload.get("nodes", [])))
    if payload.get("corrective"):
        parts.append(payload["corrective"])
    return "\n".join(parts)


class HttpProvider:
    """Generic chat-completion endpoint adapter.

    Transport failures, timeouts, and non-2xx statuses surface as
    ProviderTimeout so the pipeline's retry policy treats them uniformly.
    """

    kind = "http"

    def __init__(self, config: ProviderConfig):
        if not config.endpoint:
            raise BadConfig("http provider requires an endpoint")
        self.endpoint = config.endpoint
        self.model = config.model
        self.timeout_ms = config.timeout_ms
        self.calls = 0

    def complete(self, request: ProviderRequest) -> str:
        import requests

        self.calls += 1
        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": load_prompt(request.task)},
                {"role": "user", "content": render_user_message(request.task, request.prompt_payload)},
            ],
        }
        try:
            resp = requests.post(self.endpoint, json=body, timeout=self.timeout_ms / 1000.0)
            resp.raise_for_status()
            data = resp.json()
        except requests.JSONDecodeError as exc:
            raise MalformedProviderOutput(f"response body is not JSON: {exc}") from exc
        except requests.RequestException as exc:
            raise ProviderTimeout(str(exc)) from exc
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedProviderOutput("no choices[0].message.content in response") from exc
        if not isinstance(content, str):
            raise MalformedProviderOutput("message content is not a string")
        return content


def build_provider(config: ProviderConfig) -> Provider:
    if config.kind == "mock":
        return MockProvider(config.seed)
    if config.kind == "http":
        return HttpProvider(config)
    raise BadConfig(f"unknown provider kind {config.kind!r}")

"""Provider-backed analyses: topic segmentation, turn annotation, link identification.

Each operation builds a structured payload, calls the provider, and runs the
raw text output through strict validation. Validation is all-or-nothing per
batch: a result either converts cleanly into typed drafts or the whole call
fails with a typed error. One retry is attempted on timeouts and malformed
output; over-limit labels/summaries get one corrective retry and are then
truncated and flagged degraded instead of dropped.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Protocol, Sequence

from .errors import (
    CycleDetected,
    DanglingKey,
    DuplicateFromKey,
    LabelTooLong,
    MalformedProviderOutput,
    ProviderTimeout,
    UnknownTag,
)
from .types import IbisTag, Topic, TopicStatus, Turn, count_words, normalize_ws


class Task(str, Enum):
    TOPIC_SEGMENT = "topic_segment"
    ANNOTATE_TURN = "annotate_turn"
    IDENTIFY_LINKS = "identify_links"


@dataclass(frozen=True)
class ProviderRequest:
    task: Task
    prompt_payload: dict[str, Any]
    timeout_ms: int = 30_000
    attempt: int = 0


class Provider(Protocol):
    def complete(self, request: ProviderRequest) -> str: ...


class DecisionKind(str, Enum):
    CONTINUATION = "Continuation"
    NEW_TOPIC = "NewTopic"


@dataclass(frozen=True)
class TopicDecision:
    kind: DecisionKind
    label: str
    degraded: bool = False


@dataclass(frozen=True)
class NodeDraft:
    tag: IbisTag
    summary: str
    quote: str
    degraded: bool = False


@dataclass(frozen=True)
class LinkDraft:
    from_key: str
    to_key: str
    label: str


# plain forms for session-log records

def decision_to_plain(d: TopicDecision) -> dict[str, Any]:
    return {"kind": d.kind.value, "label": d.label, "degraded": d.degraded}


def decision_from_plain(d: dict[str, Any]) -> TopicDecision:
    return TopicDecision(DecisionKind(d["kind"]), d["label"], bool(d.get("degraded")))


def draft_to_plain(d: NodeDraft) -> dict[str, Any]:
    return {"tag": d.tag.value, "summary": d.summary, "quote": d.quote, "degraded": d.degraded}


def draft_from_plain(d: dict[str, Any]) -> NodeDraft:
    return NodeDraft(IbisTag(d["tag"]), d["summary"], d["quote"], bool(d.get("degraded")))


def link_draft_to_plain(d: LinkDraft) -> dict[str, Any]:
    return {"from": d.from_key, "to": d.to_key, "label": d.label}


def link_draft_from_plain(d: dict[str, Any]) -> LinkDraft:
    return LinkDraft(str(d["from"]), str(d["to"]), d["label"])


# --- tag alias table ---
# Prompt-side tags map onto the four canonical categories; "Position" is the
# prompt's name for Idea. Numeric suffixes ([$Question1]) and plurals are
# normalized away. Anything else is rejected.

_TAG_STEMS = {
    "question": IbisTag.QUESTION,
    "position": IbisTag.IDEA,
    "idea": IbisTag.IDEA,
    "pro": IbisTag.PRO,
    "con": IbisTag.CON,
}


def normalize_tag(raw: str) -> IbisTag:
    s = raw.strip().strip("[]").strip()
    if s.startswith("$"):
        s = s[1:]
    s = re.sub(r"\d+$", "", s.strip())
    key = s.casefold()
    if key.endswith("s") and key[:-1] in _TAG_STEMS:
        key = key[:-1]
    if key in _TAG_STEMS:
        return _TAG_STEMS[key]
    raise UnknownTag(f"unrecognized tag {raw!r}")


# --- tolerant structured-output extraction ---

_MAX_REPAIRS = 32


def _lenient_loads(candidate: str) -> Any:
    """json.loads with bounded, deterministic repairs.

    Providers are told to emit bare JSON but in practice produce trailing
    commas and occasionally drop a comma between members. Repairs are driven
    by the decoder's error position; anything that cannot be repaired within
    the budget is malformed.
    """
    seen = {candidate}
    for _ in range(_MAX_REPAIRS):
        try:
            return json.loads(candidate)
        except json.JSONDecodeError as exc:
            if "Expecting ',' delimiter" in exc.msg and exc.pos < len(candidate):
                candidate = candidate[: exc.pos] + "," + candidate[exc.pos :]
            elif (
                "Expecting property name" in exc.msg or "Expecting value" in exc.msg
            ) and exc.pos <= len(candidate):
                cut = candidate.rfind(",", 0, exc.pos + 1)
                if cut == -1:
                    raise MalformedProviderOutput(exc.msg) from exc
                candidate = candidate[:cut] + candidate[cut + 1 :]
            else:
                raise MalformedProviderOutput(exc.msg) from exc
            if candidate in seen:
                raise MalformedProviderOutput(
                    "unrepairable structure (repair cycle)"
                ) from exc
            seen.add(candidate)
    raise MalformedProviderOutput("unrepairable structure (repair budget exhausted)")


def extract_object(raw: str) -> dict[str, Any]:
    """Pull the single structured object out of raw provider text.

    Tolerates surrounding prose and code fences by scanning for balanced
    brace spans and parsing the first one that repairs cleanly.
    """
    starts = [i for i, c in enumerate(raw) if c == "{"]
    if not starts:
        raise MalformedProviderOutput("no object found in provider output")
    last_error: Optional[MalformedProviderOutput] = None
    for start in starts:
        end = _balanced_end(raw, start)
        if end is None:
            last_error = MalformedProviderOutput("unbalanced braces (truncated output?)")
            continue
        try:
            value = _lenient_loads(raw[start : end + 1])
        except MalformedProviderOutput as exc:
            last_error = exc
            continue
        if isinstance(value, dict):
            return value
        last_error = MalformedProviderOutput("top-level value is not an object")
    raise last_error or MalformedProviderOutput("no parseable object found")


def _balanced_end(text: str, start: int) -> Optional[int]:
    depth = 0
    in_string = False
    i = start
    while i < len(text):
        c = text[i]
        if in_string:
            if c == "\\":
                i += 1
            elif c == '"':
                in_string = False
        elif c == '"':
            in_string = True
        elif c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return i
        i += 1
    return None


# --- task-specific parsing ---

@dataclass(frozen=True)
class TopicSegmentOutput:
    """Structural parse of a topic-segmentation reply, before interpretation."""

    label: str
    tag: str


def parse_topic_segment(raw: str) -> TopicSegmentOutput:
    obj = extract_object(raw)
    label = _str_field(obj, "Identified topic")
    tag = _str_field(obj, "Continuation/New Topic Tag")
    return TopicSegmentOutput(label=label, tag=tag)


def parse_annotation(raw: str) -> list[NodeDraft]:
    obj = extract_object(raw)
    if "dialogueTagArray" not in obj:
        raise MalformedProviderOutput("missing field 'dialogueTagArray'")
    arr = obj["dialogueTagArray"]
    if not isinstance(arr, list):
        raise MalformedProviderOutput("'dialogueTagArray' must be an array")
    drafts = []
    for i, entry in enumerate(arr):
        if not isinstance(entry, dict):
            raise MalformedProviderOutput(f"dialogueTagArray[{i}] must be an object")
        tag = normalize_tag(_str_field(entry, "Tag", f"dialogueTagArray[{i}]."))
        summary = _str_field(entry, "Summary", f"dialogueTagArray[{i}].")
        quote = _str_field(entry, "Quotes", f"dialogueTagArray[{i}].")
        drafts.append(NodeDraft(tag=tag, summary=summary, quote=quote))
    return drafts


def parse_links(raw: str) -> list[LinkDraft]:
    obj = extract_object(raw)
    if "linkDataArray" not in obj:
        raise MalformedProviderOutput("missing field 'linkDataArray'")
    arr = obj["linkDataArray"]
    if not isinstance(arr, list):
        raise MalformedProviderOutput("'linkDataArray' must be an array")
    drafts = []
    for i, entry in enumerate(arr):
        if not isinstance(entry, dict):
            raise MalformedProviderOutput(f"linkDataArray[{i}] must be an object")
        for f in ("from", "to", "text"):
            if f not in entry:
                raise MalformedProviderOutput(f"linkDataArray[{i}] missing field {f!r}")
        from_key = _key_str(entry["from"], f"linkDataArray[{i}].from")
        to_key = _key_str(entry["to"], f"linkDataArray[{i}].to")
        label = entry["text"]
        if not isinstance(label, str):
            raise MalformedProviderOutput(f"linkDataArray[{i}].text must be a string")
        drafts.append(LinkDraft(from_key=from_key, to_key=to_key, label=label))
    return drafts


def parse_provider_output(task: Task, raw: str):
    """Dispatch to the per-task parser; raises MalformedProviderOutput or UnknownTag."""
    if task == Task.TOPIC_SEGMENT:
        return parse_topic_segment(raw)
    if task == Task.ANNOTATE_TURN:
        return parse_annotation(raw)
    if task == Task.IDENTIFY_LINKS:
        return parse_links(raw)
    raise ValueError(f"unknown task {task!r}")


def _str_field(obj: dict[str, Any], key: str, prefix: str = "") -> str:
    if key not in obj:
        raise MalformedProviderOutput(f"missing field '{prefix}{key}'")
    v = obj[key]
    if not isinstance(v, str):
        raise MalformedProviderOutput(f"field '{prefix}{key}' must be a string")
    return v


def _key_str(v: Any, where: str) -> str:
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise MalformedProviderOutput(f"{where} must be a string or integer key")
    return str(v)


# --- link batch validation ---

def validate_link_batch(drafts: Sequence[LinkDraft], allowed_keys: Sequence[str]) -> None:
    """All-or-nothing batch checks: dangling keys, duplicate sources, cycles.

    A self-link counts as a one-edge cycle. Out-degree <= 1 plus acyclicity
    makes every accepted batch a forest.
    """
    allowed = set(allowed_keys)
    for d in drafts:
        if d.from_key not in allowed:
            raise DanglingKey(f"unknown 'from' key {d.from_key!r}")
        if d.to_key not in allowed:
            raise DanglingKey(f"unknown 'to' key {d.to_key!r}")
    seen_from: set[str] = set()
    for d in drafts:
        if d.from_key in seen_from:
            raise DuplicateFromKey(f"key {d.from_key!r} appears twice as 'from'")
        seen_from.add(d.from_key)
    edge = {d.from_key: d.to_key for d in drafts}
    for start in edge:
        node = start
        path: set[str] = set()
        while node in edge:
            if node in path:
                raise CycleDetected(f"cycle through key {node!r}")
            path.add(node)
            node = edge[node]


# --- operations ---

_RETRYABLE = (ProviderTimeout, MalformedProviderOutput, UnknownTag)

CORRECTIVE_LABEL = "Your previous label exceeded the word limit; reply again keeping it within {limit} words."
CORRECTIVE_SUMMARY = "One or more summaries exceeded {limit} words; reply again keeping every summary within {limit} words."


def classify_topic(
    prev_turn: Optional[Turn],
    new_turn: Turn,
    topic_list: Sequence[Topic],
    provider: Provider,
    label_word_limit: int = 6,
    timeout_ms: int = 30_000,
) -> TopicDecision:
    """Decide whether new_turn continues the open topic or starts a new one.

    With an empty topic list the decision is always NewTopic. A Continuation
    carries the (possibly revised) label for the currently open topic.
    """
    payload: dict[str, Any] = {
        "previous_turn": prev_turn.text if prev_turn is not None else "",
        "new_turn": new_turn.text,
        "topics": [{"label": t.label, "status": t.status.value} for t in topic_list],
    }
    last_exc: Exception = MalformedProviderOutput("provider not called")
    for attempt in range(2):
        req_payload = dict(payload)
        if attempt and isinstance(last_exc, LabelTooLong):
            req_payload["corrective"] = CORRECTIVE_LABEL.format(limit=label_word_limit)
        req = ProviderRequest(Task.TOPIC_SEGMENT, req_payload, timeout_ms, attempt)
        try:
            out = parse_topic_segment(provider.complete(req))
            return interpret_topic(out, topic_list, label_word_limit)
        except LabelTooLong as exc:
            last_exc = exc
        except _RETRYABLE as exc:
            last_exc = exc
    if isinstance(last_exc, LabelTooLong):
        # degrade rather than drop: truncate and flag
        kind, label = last_exc.args[1], last_exc.args[2]
        return TopicDecision(kind, _truncate_words(label, label_word_limit), degraded=True)
    raise last_exc


def interpret_topic(
    out: TopicSegmentOutput,
    topic_list: Sequence[Topic],
    label_word_limit: int = 6,
) -> TopicDecision:
    """Turn a structural parse into a decision, enforcing tag and label rules."""
    open_label = _open_label(topic_list)
    tag = out.tag.strip()
    if "C-Continuation" in tag:
        kind = DecisionKind.CONTINUATION
    elif "N-New" in tag:
        kind = DecisionKind.NEW_TOPIC
    else:
        raise MalformedProviderOutput(f"unrecognized topic tag {out.tag!r}")
    if kind == DecisionKind.CONTINUATION and not topic_list:
        # nothing to continue; the first exchange always opens a topic
        kind = DecisionKind.NEW_TOPIC
    label = normalize_ws(out.label)
    if not label:
        if kind == DecisionKind.CONTINUATION and open_label is not None:
            label = open_label
        else:
            raise MalformedProviderOutput("empty topic label")
    if count_words(label) > label_word_limit:
        raise LabelTooLong(f"label has {count_words(label)} words", kind, label)
    return TopicDecision(kind=kind, label=label)


def _open_label(topic_list: Sequence[Topic]) -> Optional[str]:
    for t in reversed(topic_list):
        if t.status == TopicStatus.OPEN:
            return t.label
    return None


def annotate_turn(
    turn: Turn,
    provider: Provider,
    summary_word_limit: int = 6,
    timeout_ms: int = 30_000,
) -> list[NodeDraft]:
    """Tag and summarize one turn; returns zero drafts for non-qualifying turns.

    Every accepted draft's quote must normalize to a contiguous span of the
    turn text, keeping nodes traceable back to the transcript.
    """
    payload = {"turn_text": turn.text, "summary_word_limit": summary_word_limit}
    last_exc: Exception = MalformedProviderOutput("provider not called")
    for attempt in range(2):
        req_payload = dict(payload)
        if attempt and isinstance(last_exc, LabelTooLong):
            req_payload["corrective"] = CORRECTIVE_SUMMARY.format(limit=summary_word_limit)
        req = ProviderRequest(Task.ANNOTATE_TURN, req_payload, timeout_ms, attempt)
        try:
            drafts = parse_annotation(provider.complete(req))
            return _check_drafts(drafts, turn, summary_word_limit)
        except LabelTooLong as exc:
            last_exc = exc
        except _RETRYABLE as exc:
            last_exc = exc
    if isinstance(last_exc, LabelTooLong):
        drafts = last_exc.args[1]
        return [
            NodeDraft(
                tag=d.tag,
                summary=_truncate_words(normalize_ws(d.summary), summary_word_limit),
                quote=d.quote,
                degraded=count_words(d.summary) > summary_word_limit or d.degraded,
            )
            for d in drafts
        ]
    raise last_exc


def _check_drafts(drafts: list[NodeDraft], turn: Turn, limit: int) -> list[NodeDraft]:
    turn_norm = normalize_ws(turn.text)
    for i, d in enumerate(drafts):
        quote_norm = normalize_ws(d.quote)
        if not quote_norm:
            raise MalformedProviderOutput(f"draft {i}: empty quote")
        if quote_norm not in turn_norm:
            raise MalformedProviderOutput(f"draft {i}: quote is not a span of the turn")
        if not normalize_ws(d.summary):
            raise MalformedProviderOutput(f"draft {i}: empty summary")
    over = [d for d in drafts if count_words(normalize_ws(d.summary)) > limit]
    if over:
        raise LabelTooLong(f"{len(over)} summaries over {limit} words", drafts)
    return drafts


def identify_links(
    nodes: Sequence[tuple[str, Any]],
    provider: Provider,
    timeout_ms: int = 30_000,
) -> list[LinkDraft]:
    """Ask the provider for a link structure over the given (key, node) list.

    Returned batches are validated as a whole: keys must come from the input,
    each key may appear at most once as a source, and the edge set must be
    acyclic. Validation failures reject the batch without retry; timeouts and
    malformed output get one retry.
    """
    keys = [k for k, _ in nodes]
    if len(set(keys)) != len(keys):
        raise ValueError("node keys must be unique")
    if len(nodes) < 2:
        return []
    payload = {
        "nodes": [
            {"key": k, "tag": obj.tag.value, "summary": obj.summary} for k, obj in nodes
        ]
    }
    last_exc: Exception = MalformedProviderOutput("provider not called")
    for attempt in range(2):
        req = ProviderRequest(Task.IDENTIFY_LINKS, payload, timeout_ms, attempt)
        try:
            drafts = parse_links(provider.complete(req))
        except _RETRYABLE as exc:
            last_exc = exc
            continue
        validate_link_batch(drafts, keys)
        return drafts
    raise last_exc


def _truncate_words(text: str, limit: int) -> str:
    return " ".join(text.split()[:limit])

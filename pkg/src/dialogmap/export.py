"""Map exports: canonical {nodes, links, topics} and a graph description.

The graph export emits Graphviz DOT: one node statement per live node
labeled "tag: summary", one edge statement per link, so external tools can
render the map without speaking the wire protocol.
"""

from __future__ import annotations

from .canonical import canonical_dumps, link_to_plain, node_to_plain, topic_to_plain
from .engine import MapState


def export_map_plain(state: MapState) -> dict:
    return {
        "nodes": {nid: node_to_plain(n) for nid, n in state.nodes.items()},
        "links": {lid: link_to_plain(l) for lid, l in state.links.items()},
        "topics": [topic_to_plain(t) for t in state.topics],
    }


def export_map_canonical(state: MapState) -> bytes:
    return canonical_dumps(export_map_plain(state))


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_map_graph(state: MapState) -> str:
    lines = ["digraph dialogue_map {"]
    for nid in sorted(state.nodes, key=_id_sort_key):
        node = state.nodes[nid]
        if node.location.kind == "deleted":
            continue
        lines.append(f"  {_quote(nid)} [label={_quote(f'{node.tag.value}: {node.summary}')}];")
    for lid in sorted(state.links, key=_id_sort_key):
        link = state.links[lid]
        lines.append(
            f"  {_quote(link.from_id)} -> {_quote(link.to_id)} [label={_quote(link.label)}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def _id_sort_key(identifier: str) -> tuple:
    # stable human-friendly ordering for export only; ids stay opaque to logic
    head = identifier.rstrip("0123456789")
    tail = identifier[len(head):]
    return (head, int(tail) if tail else -1, identifier)

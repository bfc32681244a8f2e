/**
 * Canonical serialization of the mirrored map state, byte-compatible with
 * the server (docs/protocol.md): sorted keys, compact separators, floats
 * rendered with exactly six decimal places, integers bare.
 *
 * The encoder is schema-driven because JSON parsing erases the int/float
 * distinction: coordinate fields are always floats, counters are always
 * integers. All float values in acked state originate from the server and
 * are already quantized to six decimals, so toFixed never hits a tie.
 */

import type { MapLink, MapNode, MapState, NodeLocation, NodeOrigin, Topic } from "./model.js";

const esc = (s: string): string => JSON.stringify(s);

export function fmt6(x: number): string {
  if (!Number.isFinite(x)) throw new Error("non-finite float has no canonical form");
  const abs = Math.abs(x).toFixed(6);
  return x < 0 || Object.is(x, -0) ? "-" + abs : abs;
}

function intStr(n: number): string {
  if (!Number.isInteger(n)) throw new Error(`expected integer, got ${n}`);
  return String(n);
}

function locationStr(loc: NodeLocation): string {
  if (loc.kind === "palette") {
    return `{"chrono_index":${intStr(loc.chrono_index ?? 0)},"kind":"palette"}`;
  }
  if (loc.kind === "canvas") {
    return `{"kind":"canvas","x":${fmt6(loc.x ?? 0)},"y":${fmt6(loc.y ?? 0)}}`;
  }
  return `{"kind":"deleted"}`;
}

function originStr(origin: NodeOrigin): string {
  if (origin.kind === "ai") {
    return `{"kind":"ai","quote":${esc(origin.quote ?? "")},"turn_id":${esc(origin.turn_id ?? "")}}`;
  }
  return `{"kind":"user","user_id":${esc(origin.user_id ?? "")}}`;
}

function nodeStr(n: MapNode): string {
  const topic = n.topic_id === null ? "null" : esc(n.topic_id);
  return (
    `{"location":${locationStr(n.location)},"node_id":${esc(n.node_id)},` +
    `"origin":${originStr(n.origin)},"speaker_id":${esc(n.speaker_id)},` +
    `"summary":${esc(n.summary)},"tag":${esc(n.tag)},"topic_id":${topic}}`
  );
}

function linkStr(l: MapLink): string {
  return `{"from":${esc(l.from)},"label":${esc(l.label)},"link_id":${esc(l.link_id)},"to":${esc(l.to)}}`;
}

function topicStr(t: Topic): string {
  return (
    `{"first_turn_seq":${intStr(t.first_turn_seq)},"label":${esc(t.label)},` +
    `"last_turn_seq":${intStr(t.last_turn_seq)},"status":${esc(t.status)},` +
    `"topic_id":${esc(t.topic_id)}}`
  );
}

export function canonicalState(state: MapState): string {
  const nodeKeys = [...state.nodes.keys()].sort();
  const linkKeys = [...state.links.keys()].sort();
  const removed = [...state.removed_link_ids].sort();
  const links = linkKeys.map((k) => `${esc(k)}:${linkStr(state.links.get(k)!)}`).join(",");
  const nodes = nodeKeys.map((k) => `${esc(k)}:${nodeStr(state.nodes.get(k)!)}`).join(",");
  return (
    `{"links":{${links}},"mode":${esc(state.mode)},` +
    `"next_server_seq":${intStr(state.next_server_seq)},` +
    `"nodes":{${nodes}},` +
    `"palette_order":[${state.palette_order.map(esc).join(",")}],` +
    `"removed_link_ids":[${removed.map(esc).join(",")}],` +
    `"topics":[${state.topics.map(topicStr).join(",")}]}`
  );
}

/** Sorted-key JSON for outgoing messages (server parses any valid JSON). */
export function stableStringify(value: unknown): string {
  if (value === null || typeof value === "boolean" || typeof value === "string") {
    return JSON.stringify(value);
  }
  if (typeof value === "number") {
    if (!Number.isFinite(value)) throw new Error("non-finite number");
    return Number.isInteger(value) ? String(value) : fmt6(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(stableStringify).join(",")}]`;
  }
  if (typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => `${esc(k)}:${stableStringify(v)}`);
    return `{${entries.join(",")}}`;
  }
  throw new Error(`cannot serialize ${typeof value}`);
}

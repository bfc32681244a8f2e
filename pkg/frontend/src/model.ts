/**
 * Domain shapes mirrored from the wire protocol (docs/protocol.md).
 * Field names match the canonical serialization exactly.
 */

export type IbisTag = "Question" | "Idea" | "Pro" | "Con";
export type MapMode = "HumanMap" | "AiMap";
export type TopicStatus = "Open" | "Closed";

export interface NodeOrigin {
  kind: "ai" | "user";
  turn_id?: string;
  quote?: string;
  user_id?: string;
}

export interface NodeLocation {
  kind: "palette" | "canvas" | "deleted";
  chrono_index?: number;
  x?: number;
  y?: number;
}

export interface MapNode {
  node_id: string;
  tag: IbisTag;
  summary: string;
  origin: NodeOrigin;
  speaker_id: string;
  location: NodeLocation;
  topic_id: string | null;
}

export interface MapLink {
  link_id: string;
  from: string;
  to: string;
  label: string;
}

export interface Topic {
  topic_id: string;
  label: string;
  first_turn_seq: number;
  last_turn_seq: number;
  status: TopicStatus;
}

/** Mirrored shared map state. Maps preserve insertion (creation) order. */
export interface MapState {
  mode: MapMode;
  nodes: Map<string, MapNode>;
  links: Map<string, MapLink>;
  palette_order: string[];
  topics: Topic[];
  removed_link_ids: Set<string>;
  next_server_seq: number;
}

export interface Participant {
  user_id: string;
  display_name: string;
}

export type OpKind =
  | "CreateNode"
  | "EditNode"
  | "DeleteNode"
  | "MoveNode"
  | "CreateLink"
  | "EditLink"
  | "DeleteLink"
  | "MergeGeneratedMap";

export interface MapOp {
  op_id: string;
  actor: { kind: "user" | "ai"; user_id?: string };
  kind: OpKind;
  payload: Record<string, unknown>;
  server_seq: number;
}

export function emptyState(): MapState {
  return {
    mode: "HumanMap",
    nodes: new Map(),
    links: new Map(),
    palette_order: [],
    topics: [],
    removed_link_ids: new Set(),
    next_server_seq: 1,
  };
}

export function stateFromPlain(plain: any): MapState {
  const state = emptyState();
  state.mode = plain.mode;
  for (const [nid, node] of Object.entries<any>(plain.nodes)) {
    state.nodes.set(nid, { ...node });
  }
  for (const [lid, link] of Object.entries<any>(plain.links)) {
    state.links.set(lid, { ...link });
  }
  state.palette_order = [...plain.palette_order];
  state.topics = plain.topics.map((t: Topic) => ({ ...t }));
  state.removed_link_ids = new Set(plain.removed_link_ids);
  state.next_server_seq = plain.next_server_seq;
  return state;
}

export function cloneState(state: MapState): MapState {
  return {
    mode: state.mode,
    nodes: new Map(
      [...state.nodes].map(([k, n]) => [k, { ...n, origin: { ...n.origin }, location: { ...n.location } }])
    ),
    links: new Map([...state.links].map(([k, l]) => [k, { ...l }])),
    palette_order: [...state.palette_order],
    topics: state.topics.map((t) => ({ ...t })),
    removed_link_ids: new Set(state.removed_link_ids),
    next_server_seq: state.next_server_seq,
  };
}

export function openTopic(state: MapState): Topic | null {
  for (let i = state.topics.length - 1; i >= 0; i--) {
    const topic = state.topics[i]!;
    if (topic.status === "Open") return topic;
  }
  return null;
}

export function liveNodeIds(state: MapState): string[] {
  const out: string[] = [];
  for (const [nid, node] of state.nodes) {
    if (node.location.kind !== "deleted") out.push(nid);
  }
  return out;
}

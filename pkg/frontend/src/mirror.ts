/**
 * Client-side state mirror.
 *
 * Applies the server->client message stream to a local MapState using the
 * same rules the server engine uses, so a mirror that has applied every
 * mutation up to seq S holds state whose canonical form equals the server
 * snapshot at S. Mutation messages must arrive in seq order; a gap throws.
 */

import { canonicalState } from "./canonical.js";
import {
  MapNode,
  MapOp,
  MapState,
  Participant,
  Topic,
  emptyState,
  openTopic,
  stateFromPlain,
} from "./model.js";

export class SeqGapError extends Error {}

export class Mirror {
  state: MapState = emptyState();
  hasSnapshot = false;
  agenda = "";
  participants: Participant[] = [];
  turnTexts = new Map<string, string>();
  errors: { code: string; detail: string }[] = [];

  get serverSeq(): number {
    return this.state.next_server_seq - 1;
  }

  canonical(): string {
    return canonicalState(this.state);
  }

  apply(msg: any): void {
    switch (msg.type) {
      case "snapshot":
        this.state = stateFromPlain(msg.map);
        this.agenda = msg.agenda;
        this.participants = [...msg.participants];
        this.hasSnapshot = true;
        return;
      case "error":
        this.errors.push({ code: msg.code, detail: msg.detail });
        return;
      case "turn_transcript":
        this.turnTexts.set(msg.turn_id, msg.text);
        return;
    }
    if (!this.hasSnapshot) throw new SeqGapError("mutation before snapshot");
    switch (msg.type) {
      case "op_applied":
        this.takeSeq(msg.server_seq);
        this.executeOp(msg.op as MapOp);
        return;
      case "nodes_generated":
        this.takeSeq(msg.server_seq);
        this.insertGeneratedNodes(msg.nodes as MapNode[]);
        return;
      case "topic_updated":
        this.takeSeq(msg.server_seq);
        this.applyTopic(msg.topic as Topic);
        return;
      case "map_generated":
        this.takeSeq(msg.server_seq);
        this.applyMerge(msg.moved, msg.links);
        return;
      default:
        throw new Error(`unknown message type ${msg.type}`);
    }
  }

  private takeSeq(seq: number): void {
    if (seq !== this.state.next_server_seq) {
      throw new SeqGapError(
        `mutation seq ${seq} does not follow ${this.state.next_server_seq - 1}`
      );
    }
    this.state.next_server_seq += 1;
  }

  /** Shared with the out-of-order palette tests: no seq bookkeeping here. */
  insertGeneratedNodes(nodes: MapNode[]): void {
    for (const node of nodes) {
      this.state.nodes.set(node.node_id, {
        ...node,
        origin: { ...node.origin },
        location: { ...node.location },
      });
      this.state.palette_order.push(node.node_id);
    }
  }

  private applyTopic(topic: Topic): void {
    const open = openTopic(this.state);
    if (open !== null && open.topic_id === topic.topic_id) {
      open.label = topic.label;
      open.first_turn_seq = topic.first_turn_seq;
      open.last_turn_seq = topic.last_turn_seq;
      open.status = topic.status;
      return;
    }
    if (open !== null) {
      open.status = "Closed";
      open.last_turn_seq = topic.first_turn_seq - 1;
    }
    this.state.topics.push({ ...topic });
  }

  private nextLinkId(): string {
    return `l${this.state.links.size + this.state.removed_link_ids.size + 1}`;
  }

  private applyMerge(
    moved: { node_id: string; x: number; y: number }[],
    links: { from: string; to: string; label: string }[]
  ): void {
    for (const placement of moved) {
      const node = this.state.nodes.get(placement.node_id);
      if (node === undefined) throw new Error(`merge moves unknown node ${placement.node_id}`);
      if (node.location.kind === "palette") {
        this.state.palette_order = this.state.palette_order.filter(
          (nid) => nid !== placement.node_id
        );
      }
      node.location = { kind: "canvas", x: placement.x, y: placement.y };
    }
    for (const draft of links) {
      const linkId = this.nextLinkId();
      this.state.links.set(linkId, {
        link_id: linkId,
        from: draft.from,
        to: draft.to,
        label: draft.label,
      });
    }
  }

  private executeOp(op: MapOp): void {
    const p = op.payload as any;
    switch (op.kind) {
      case "CreateNode": {
        const node: MapNode = {
          node_id: p.node_id,
          tag: p.tag,
          summary: p.summary,
          origin: { kind: "user", user_id: op.actor.user_id ?? "" },
          speaker_id: op.actor.user_id ?? "",
          location: { kind: "canvas", x: p.x, y: p.y },
          topic_id: p.topic_id ?? null,
        };
        this.state.nodes.set(node.node_id, node);
        return;
      }
      case "EditNode": {
        const node = this.mustNode(p.node_id);
        if ("summary" in p) node.summary = p.summary;
        if ("tag" in p) node.tag = p.tag;
        return;
      }
      case "DeleteNode": {
        const node = this.mustNode(p.node_id);
        if (node.location.kind === "palette") {
          this.state.palette_order = this.state.palette_order.filter((n) => n !== p.node_id);
        }
        node.location = { kind: "deleted" };
        for (const [lid, link] of [...this.state.links]) {
          if (link.from === p.node_id || link.to === p.node_id) {
            this.state.links.delete(lid);
            this.state.removed_link_ids.add(lid);
          }
        }
        return;
      }
      case "MoveNode": {
        const node = this.mustNode(p.node_id);
        if (node.location.kind === "palette") {
          this.state.palette_order = this.state.palette_order.filter((n) => n !== p.node_id);
        }
        node.location = { kind: "canvas", x: p.x, y: p.y };
        return;
      }
      case "CreateLink": {
        this.state.links.set(p.link_id, {
          link_id: p.link_id,
          from: p.from,
          to: p.to,
          label: p.label,
        });
        return;
      }
      case "EditLink": {
        const link = this.state.links.get(p.link_id);
        if (link === undefined) throw new Error(`unknown link ${p.link_id}`);
        link.label = p.label;
        return;
      }
      case "DeleteLink": {
        if (!this.state.links.delete(p.link_id)) {
          throw new Error(`unknown link ${p.link_id}`);
        }
        this.state.removed_link_ids.add(p.link_id);
        return;
      }
      case "MergeGeneratedMap":
        this.applyMerge(p.moved, p.links);
        return;
      default:
        throw new Error(`unknown op kind ${op.kind}`);
    }
  }

  private mustNode(nodeId: string): MapNode {
    const node = this.state.nodes.get(nodeId);
    if (node === undefined) throw new Error(`unknown node ${nodeId}`);
    return node;
  }
}

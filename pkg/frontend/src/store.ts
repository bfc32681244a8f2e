/**
 * Client view state: the acked server mirror plus optimistic local ops,
 * selection, viewport, and speaker color assignment.
 *
 * Pending ops are applied optimistically to a derived view; the acked
 * mirror only advances on server messages. Once every pending op has been
 * acked, the view equals the mirror, whose canonical form equals the
 * server snapshot at the same seq. Rejections (server error to this
 * client) roll back the oldest in-flight op and record a notice; the UI
 * never shows a mutation that is neither pending nor server-confirmed.
 */

import { Mirror } from "./mirror.js";
import { MapOp, MapState, OpKind, cloneState, openTopic } from "./model.js";

/** High-contrast palette; assigned to speakers in first-seen order. */
export const SPEAKER_COLORS = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#17becf",
  "#e377c2",
  "#8c564b",
];

export interface Viewport {
  panX: number;
  panY: number;
  zoom: number;
}

export interface PendingOp {
  op_id: string;
  kind: OpKind;
  payload: Record<string, unknown>;
}

export class ClientStore {
  readonly mirror = new Mirror();
  readonly userId: string;
  pending: PendingOp[] = [];
  notices: string[] = [];
  selectedTopic: string | null = null;
  viewport: Viewport = { panX: 0, panY: 0, zoom: 1 };
  private colors = new Map<string, string>();
  private opCounter = 0;

  constructor(userId: string) {
    this.userId = userId;
  }

  colorFor(speakerId: string): string {
    let color = this.colors.get(speakerId);
    if (color === undefined) {
      color = SPEAKER_COLORS[this.colors.size % SPEAKER_COLORS.length]!;
      this.colors.set(speakerId, color);
    }
    return color;
  }

  nextOpId(): string {
    this.opCounter += 1;
    return `${this.userId}-${this.opCounter}`;
  }

  /** Queue an op optimistically; returns the submit_op message to send. */
  submit(kind: OpKind, payload: Record<string, unknown>): Record<string, unknown> {
    const op: PendingOp = { op_id: this.nextOpId(), kind, payload };
    this.pending.push(op);
    return {
      type: "submit_op",
      op: {
        op_id: op.op_id,
        actor: { kind: "user", user_id: this.userId },
        kind,
        payload,
        server_seq: 0,
      },
    };
  }

  /** Route one server message into the mirror and the pending queue. */
  applyServer(msg: any): void {
    if (msg.type === "snapshot") {
      // color assignment starts from participant join order
      for (const p of msg.participants) this.colorFor(p.user_id);
    }
    if (msg.type === "op_applied") {
      const op = msg.op as MapOp;
      if (op.actor.kind === "user" && op.actor.user_id === this.userId) {
        this.pending = this.pending.filter((p) => p.op_id !== op.op_id);
      }
    } else if (msg.type === "error") {
      // errors to this client reject its oldest in-flight op
      const rejected = this.pending.shift();
      if (rejected !== undefined) {
        this.notices.push(`${rejected.kind} was rejected: ${msg.code}`);
      }
    }
    this.mirror.apply(msg);
  }

  /**
   * Acked state plus pending ops applied best-effort. Pending application
   * is presentational: unknown targets are skipped, ids are provisional.
   */
  viewState(): MapState {
    const view = cloneState(this.mirror.state);
    for (const op of this.pending) {
      this.applyOptimistic(view, op);
    }
    return view;
  }

  private applyOptimistic(view: MapState, op: PendingOp): void {
    const p = op.payload as any;
    if (op.kind === "MoveNode") {
      const node = view.nodes.get(p.node_id);
      if (node !== undefined && node.location.kind !== "deleted") {
        if (node.location.kind === "palette") {
          view.palette_order = view.palette_order.filter((n) => n !== p.node_id);
        }
        node.location = { kind: "canvas", x: p.x, y: p.y };
      }
    } else if (op.kind === "EditNode") {
      const node = view.nodes.get(p.node_id);
      if (node !== undefined && node.location.kind !== "deleted") {
        if (typeof p.summary === "string") node.summary = p.summary;
        if (typeof p.tag === "string") node.tag = p.tag;
      }
    } else if (op.kind === "DeleteNode") {
      const node = view.nodes.get(p.node_id);
      if (node !== undefined) {
        if (node.location.kind === "palette") {
          view.palette_order = view.palette_order.filter((n) => n !== p.node_id);
        }
        node.location = { kind: "deleted" };
      }
    } else if (op.kind === "CreateNode") {
      const provisional = `pending-${op.op_id}`;
      view.nodes.set(provisional, {
        node_id: provisional,
        tag: p.tag,
        summary: p.summary,
        origin: { kind: "user", user_id: this.userId },
        speaker_id: this.userId,
        location: { kind: "canvas", x: p.x, y: p.y },
        topic_id: openTopic(view)?.topic_id ?? null,
      });
    } else if (op.kind === "CreateLink") {
      const provisional = `pending-${op.op_id}`;
      view.links.set(provisional, {
        link_id: provisional,
        from: p.from,
        to: p.to,
        label: p.label ?? "",
      });
    } else if (op.kind === "DeleteLink") {
      view.links.delete(p.link_id);
    } else if (op.kind === "EditLink") {
      const link = view.links.get(p.link_id);
      if (link !== undefined) link.label = p.label;
    }
  }
}

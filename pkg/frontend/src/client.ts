/**
 * Wire client: binds a ClientStore to a Transport and exposes the user
 * interactions (join, drag-drop, edits, drill-down, agenda).
 */

import { ClientStore } from "./store.js";
import { Transport } from "./transport.js";
import { nodeDrilldown } from "./views.js";
import { OpKind } from "./model.js";

export class DialogmapClient {
  readonly store: ClientStore;
  private transport: Transport;

  constructor(transport: Transport, userId: string) {
    this.store = new ClientStore(userId);
    this.transport = transport;
    transport.onMessage((msg) => this.store.applyServer(msg));
  }

  join(sessionId: string, displayName: string): void {
    this.transport.send({
      type: "join",
      session_id: sessionId,
      user_id: this.store.userId,
      display_name: displayName,
    });
  }

  private submit(kind: OpKind, payload: Record<string, unknown>): void {
    this.transport.send(this.store.submit(kind, payload));
  }

  /** Drop a palette node onto the canvas (optimistic, server-reconciled). */
  dragNodeToCanvas(nodeId: string, x: number, y: number): void {
    this.submit("MoveNode", { node_id: nodeId, x, y });
  }

  createNode(tag: string, summary: string, x: number, y: number): void {
    this.submit("CreateNode", { tag, summary, x, y });
  }

  editNode(nodeId: string, changes: { summary?: string; tag?: string }): void {
    this.submit("EditNode", { node_id: nodeId, ...changes });
  }

  deleteNode(nodeId: string): void {
    this.submit("DeleteNode", { node_id: nodeId });
  }

  createLink(from: string, to: string, label: string): void {
    this.submit("CreateLink", { from, to, label });
  }

  deleteLink(linkId: string): void {
    this.submit("DeleteLink", { link_id: linkId });
  }

  setAgenda(text: string): void {
    this.transport.send({ type: "set_agenda", text });
  }

  /** Request the source transcript for an AI node; no-op for user nodes. */
  requestTranscript(nodeId: string): boolean {
    const result = nodeDrilldown(this.store.viewState(), nodeId);
    if (result.kind === "disabled") return false;
    this.transport.send(result.message);
    return true;
  }

  close(): void {
    this.transport.close();
  }
}

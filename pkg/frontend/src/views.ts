/**
 * Pure view models for the client surfaces: the temporary node palette,
 * topic-timeline highlighting, node drill-down, and the mini-map. All
 * functions are DOM-free so they can be tested headlessly and rendered by
 * any widget layer.
 */

import { ClientStore } from "./store.js";
import { IbisTag, MapNode, MapState } from "./model.js";

/** Icon glyph per node category (rendered next to the summary). */
export const TAG_ICONS: Record<IbisTag, string> = {
  Question: "?",
  Idea: "○", // circle
  Pro: "+",
  Con: "−", // minus sign
};

export interface PaletteEntry {
  nodeId: string;
  tag: IbisTag;
  icon: string;
  summary: string;
  speakerId: string;
  color: string;
  chronoIndex: number;
}

/**
 * Palette entries in chronological order. Ordering comes from each node's
 * chrono index, not arrival order, so late-delivered node batches for an
 * older turn still render in their chronological position.
 */
export function renderPalette(
  state: MapState,
  colorFor: (speakerId: string) => string
): PaletteEntry[] {
  const entries: PaletteEntry[] = [];
  for (const nodeId of state.palette_order) {
    const node = state.nodes.get(nodeId);
    if (node === undefined || node.location.kind !== "palette") continue;
    entries.push({
      nodeId,
      tag: node.tag,
      icon: TAG_ICONS[node.tag],
      summary: node.summary,
      speakerId: node.speaker_id,
      color: colorFor(node.speaker_id),
      chronoIndex: node.location.chrono_index ?? 0,
    });
  }
  entries.sort((a, b) => a.chronoIndex - b.chronoIndex);
  return entries;
}

/** Non-deleted nodes belonging to a topic, wherever they live now. */
export function nodesForTopic(state: MapState, topicId: string): Set<string> {
  const out = new Set<string>();
  for (const [nid, node] of state.nodes) {
    if (node.topic_id === topicId && node.location.kind !== "deleted") out.add(nid);
  }
  return out;
}

/**
 * Toggle a timeline topic selection; returns the node ids to highlight on
 * the canvas (empty when the click cleared the selection).
 */
export function timelineClick(store: ClientStore, topicId: string): Set<string> {
  if (store.selectedTopic === topicId) {
    store.selectedTopic = null;
    return new Set();
  }
  store.selectedTopic = topicId;
  return nodesForTopic(store.viewState(), topicId);
}

export type DrilldownResult =
  | { kind: "request"; message: Record<string, unknown>; turnId: string }
  | { kind: "disabled"; reason: string };

/** Double-click on a node: AI nodes resolve their source turn, user nodes don't. */
export function nodeDrilldown(state: MapState, nodeId: string): DrilldownResult {
  const node = state.nodes.get(nodeId);
  if (node === undefined) return { kind: "disabled", reason: "unknown node" };
  if (node.origin.kind !== "ai" || !node.origin.turn_id) {
    return { kind: "disabled", reason: "user-created node has no transcript" };
  }
  return {
    kind: "request",
    turnId: node.origin.turn_id,
    message: { type: "get_turn_transcript", turn_id: node.origin.turn_id },
  };
}

export interface QuoteEmphasis {
  before: string;
  match: string;
  after: string;
}

/**
 * Locate the node's quote inside the turn text after whitespace
 * normalization, for emphasized rendering in the drill-down popover.
 */
export function emphasizeQuote(turnText: string, quote: string): QuoteEmphasis | null {
  const norm = (s: string) => s.split(/\s+/).filter(Boolean).join(" ");
  const text = norm(turnText);
  const needle = norm(quote);
  if (!needle) return null;
  const at = text.indexOf(needle);
  if (at < 0) return null;
  return {
    before: text.slice(0, at),
    match: text.slice(at, at + needle.length),
    after: text.slice(at + needle.length),
  };
}

export interface MinimapRect {
  nodeId: string;
  x: number;
  y: number;
  color: string;
}

export interface MinimapModel {
  bounds: { minX: number; minY: number; maxX: number; maxY: number };
  scale: number;
  rects: MinimapRect[];
  viewport: { x: number; y: number; width: number; height: number };
}

const MINIMAP_PAD = 20;

/**
 * Scaled-down whole-canvas overview: node positions and speaker colors
 * only, no text. The viewport rectangle mirrors the main canvas pan/zoom.
 */
export function renderMinimap(
  state: MapState,
  viewport: { panX: number; panY: number; zoom: number },
  mainSize: { width: number; height: number },
  miniSize: { width: number; height: number },
  colorFor: (speakerId: string) => string
): MinimapModel {
  const canvasNodes: [string, MapNode][] = [];
  for (const [nid, node] of state.nodes) {
    if (node.location.kind === "canvas") canvasNodes.push([nid, node]);
  }
  let minX = 0, minY = 0, maxX = 0, maxY = 0;
  if (canvasNodes.length > 0) {
    minX = Math.min(...canvasNodes.map(([, n]) => n.location.x ?? 0)) - MINIMAP_PAD;
    minY = Math.min(...canvasNodes.map(([, n]) => n.location.y ?? 0)) - MINIMAP_PAD;
    maxX = Math.max(...canvasNodes.map(([, n]) => n.location.x ?? 0)) + MINIMAP_PAD;
    maxY = Math.max(...canvasNodes.map(([, n]) => n.location.y ?? 0)) + MINIMAP_PAD;
  }
  const spanX = Math.max(maxX - minX, 1);
  const spanY = Math.max(maxY - minY, 1);
  const scale = Math.min(miniSize.width / spanX, miniSize.height / spanY);
  const rects = canvasNodes.map(([nid, node]) => ({
    nodeId: nid,
    x: ((node.location.x ?? 0) - minX) * scale,
    y: ((node.location.y ?? 0) - minY) * scale,
    color: colorFor(node.speaker_id),
  }));
  return {
    bounds: { minX, minY, maxX, maxY },
    scale,
    rects,
    viewport: {
      x: (viewport.panX - minX) * scale,
      y: (viewport.panY - minY) * scale,
      width: (mainSize.width / viewport.zoom) * scale,
      height: (mainSize.height / viewport.zoom) * scale,
    },
  };
}

/** Click or drag on the mini-map recenters the main viewport. */
export function minimapPan(
  minimap: MinimapModel,
  point: { x: number; y: number },
  viewport: { panX: number; panY: number; zoom: number },
  mainSize: { width: number; height: number }
): { panX: number; panY: number } {
  const worldX = minimap.bounds.minX + point.x / minimap.scale;
  const worldY = minimap.bounds.minY + point.y / minimap.scale;
  return {
    panX: worldX - mainSize.width / (2 * viewport.zoom),
    panY: worldY - mainSize.height / (2 * viewport.zoom),
  };
}

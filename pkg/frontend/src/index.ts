export { canonicalState, fmt6, stableStringify } from "./canonical.js";
export { DialogmapClient } from "./client.js";
export { Mirror, SeqGapError } from "./mirror.js";
export * from "./model.js";
export { ClientStore, SPEAKER_COLORS, type PendingOp, type Viewport } from "./store.js";
export {
  FrameDecoder,
  LoopbackTransport,
  connectTcp,
  encodeFrame,
  type Transport,
} from "./transport.js";
export {
  TAG_ICONS,
  emphasizeQuote,
  minimapPan,
  nodeDrilldown,
  nodesForTopic,
  renderMinimap,
  renderPalette,
  timelineClick,
  type MinimapModel,
  type PaletteEntry,
} from "./views.js";

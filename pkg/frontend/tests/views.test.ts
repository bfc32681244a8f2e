// Timeline highlighting, node drill-down, and mini-map geometry.

import { describe, expect, it } from "vitest";

import { Mirror } from "../src/mirror.js";
import { ClientStore } from "../src/store.js";
import {
  emphasizeQuote,
  minimapPan,
  nodeDrilldown,
  nodesForTopic,
  renderMinimap,
  timelineClick,
} from "../src/views.js";
import { loadMeta, loadStream } from "./fixtures.js";

function fullStore(): ClientStore {
  const store = new ClientStore("viewer");
  for (const msg of loadStream()) store.applyServer(msg);
  return store;
}

describe("timeline", () => {
  it("highlights exactly the topic's nodes; second click clears", () => {
    const store = fullStore();
    const meta = loadMeta();
    for (const [topicId, expected] of Object.entries(meta.topics)) {
      const got = timelineClick(store, topicId);
      expect([...got].sort()).toEqual(expected);
      expect(timelineClick(store, topicId).size).toBe(0); // toggle off
    }
  });

  it("an unknown or empty topic highlights nothing", () => {
    const store = fullStore();
    expect(nodesForTopic(store.viewState(), "t404").size).toBe(0);
  });

  it("membership survives merges and ignores deleted nodes", () => {
    const store = fullStore();
    const meta = loadMeta();
    const [topicId, members] = Object.entries(meta.topics)[0]!;
    // every member is on the canvas now, still highlighted
    const state = store.viewState();
    for (const nid of members) {
      expect(state.nodes.get(nid)!.location.kind).toBe("canvas");
    }
    const victim = members[0]!;
    store.mirror.state.nodes.get(victim)!.location = { kind: "deleted" };
    const got = nodesForTopic(store.viewState(), topicId);
    expect(got.has(victim)).toBe(false);
    expect(got.size).toBe(members.length - 1);
  });
});

describe("drilldown", () => {
  it("requests the source turn for AI nodes and emphasizes the quote", () => {
    const store = fullStore();
    const meta = loadMeta();
    const state = store.viewState();
    const aiNode = [...state.nodes.values()].find((n) => n.origin.kind === "ai")!;
    const result = nodeDrilldown(state, aiNode.node_id);
    expect(result.kind).toBe("request");
    if (result.kind !== "request") return;
    expect(result.message).toEqual({
      type: "get_turn_transcript",
      turn_id: aiNode.origin.turn_id,
    });
    const turnText = meta.turns[result.turnId]!;
    const emphasized = emphasizeQuote(turnText, aiNode.origin.quote!);
    expect(emphasized).not.toBeNull();
    expect(emphasized!.match.length).toBeGreaterThan(0);
    expect(
      emphasized!.before + emphasized!.match + emphasized!.after
    ).toBe(turnText.split(/\s+/).filter(Boolean).join(" "));
  });

  it("is disabled for user-created and unknown nodes", () => {
    const store = fullStore();
    const state = store.viewState();
    state.nodes.set("user-node", {
      node_id: "user-node",
      tag: "Idea",
      summary: "typed by hand",
      origin: { kind: "user", user_id: "viewer" },
      speaker_id: "viewer",
      location: { kind: "canvas", x: 0, y: 0 },
      topic_id: null,
    });
    expect(nodeDrilldown(state, "user-node").kind).toBe("disabled");
    expect(nodeDrilldown(state, "nope").kind).toBe("disabled");
  });
});

describe("minimap", () => {
  const mainSize = { width: 1200, height: 800 };
  const miniSize = { width: 200, height: 120 };

  it("is empty for an empty canvas", () => {
    const mirror = new Mirror();
    mirror.apply(loadStream()[0]);
    const store = new ClientStore("viewer");
    const model = renderMinimap(
      mirror.state, store.viewport, mainSize, miniSize, (s) => store.colorFor(s)
    );
    expect(model.rects).toEqual([]);
  });

  it("bounds contain every canvas node, scaled into the widget", () => {
    const store = fullStore();
    const state = store.viewState();
    const model = renderMinimap(
      state, store.viewport, mainSize, miniSize, (s) => store.colorFor(s)
    );
    const canvasCount = [...state.nodes.values()].filter(
      (n) => n.location.kind === "canvas"
    ).length;
    expect(model.rects.length).toBe(canvasCount);
    for (const rect of model.rects) {
      expect(rect.x).toBeGreaterThanOrEqual(0);
      expect(rect.y).toBeGreaterThanOrEqual(0);
      expect(rect.x).toBeLessThanOrEqual(miniSize.width);
      expect(rect.y).toBeLessThanOrEqual(miniSize.height);
      expect(rect.color).toMatch(/^#/);
    }
    // color coding only, no text fields in the model
    for (const rect of model.rects) {
      expect(Object.keys(rect).sort()).toEqual(["color", "nodeId", "x", "y"]);
    }
  });

  it("pan via the minimap recenters the main viewport", () => {
    const store = fullStore();
    const model = renderMinimap(
      store.viewState(), store.viewport, mainSize, miniSize, (s) => store.colorFor(s)
    );
    const target = model.rects[0]!;
    const pan = minimapPan(model, { x: target.x, y: target.y }, store.viewport, mainSize);
    const node = store.viewState().nodes.get(target.nodeId)!;
    const centerX = pan.panX + mainSize.width / (2 * store.viewport.zoom);
    const centerY = pan.panY + mainSize.height / (2 * store.viewport.zoom);
    expect(centerX).toBeCloseTo(node.location.x!, 4);
    expect(centerY).toBeCloseTo(node.location.y!, 4);
  });
});

import { readFileSync } from "node:fs";

function fixturePath(name: string): URL {
  return new URL(`./fixtures/${name}`, import.meta.url);
}

export function loadStream(): any[] {
  return readFileSync(fixturePath("stream.jsonl"), "utf-8")
    .split("\n")
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line));
}

export function loadExpected(): { server_seq: number; state: string }[] {
  return readFileSync(fixturePath("expected.jsonl"), "utf-8")
    .split("\n")
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line));
}

export interface Meta {
  session_id: string;
  final_seq: number;
  topics: Record<string, string[]>;
  turns: Record<string, string>;
  speakers_in_order: string[];
}

export function loadMeta(): Meta {
  return JSON.parse(readFileSync(fixturePath("meta.json"), "utf-8"));
}

export const MUTATION_TYPES = new Set([
  "op_applied",
  "nodes_generated",
  "topic_updated",
  "map_generated",
]);

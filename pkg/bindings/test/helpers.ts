import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import type { PreferenceItem, RolloutGroup, Task } from "../src/types.js";

export const PYTHON = process.env.VERIKIT_PYTHON ?? "python3";

/** Deterministic 32-bit PRNG so both sides of the harness see identical doubles. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function tempDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix));
}

export function writeJsonl(path: string, records: unknown[]): void {
  writeFileSync(path, records.map((r) => JSON.stringify(r)).join("\n") + "\n");
}

export function readJsonl(path: string): any[] {
  return readFileSync(path, "utf-8")
    .split("\n")
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line));
}

/** Run a toolkit CLI subcommand (the native path) and return stdout. */
export function runCli(args: string[]): string {
  const proc = spawnSync(PYTHON, ["-m", "verikit.cli", ...args], {
    encoding: "utf-8",
    maxBuffer: 64 * 1024 * 1024,
  });
  if (proc.status !== 0) {
    throw new Error(`cli ${args[0]} failed (${proc.status}): ${proc.stderr}`);
  }
  return proc.stdout;
}

export interface RewardCase {
  id: string;
  task: Task;
  label: "real" | "fake";
  annotation: Record<string, unknown>;
  rawText: string;
}

function randomBox(rng: () => number, scale = 500): number[] {
  const x1 = rng() * scale;
  const y1 = rng() * scale;
  return [x1, y1, x1 + rng() * scale, y1 + rng() * scale];
}

function jitterBox(rng: () => number, box: number[]): number[] {
  const dx = (rng() - 0.3) * 40;
  const dy = (rng() - 0.3) * 40;
  return [box[0] + Math.abs(dx), box[1] + Math.abs(dy), box[2] + Math.abs(dx) + rng() * 10, box[3] + Math.abs(dy) + rng() * 10];
}

export function randomRewardCase(rng: () => number, index: number): RewardCase {
  const tasks: Task[] = ["detection", "grounding", "tracking", "counting", "artifact_grounding"];
  const task = tasks[index % tasks.length];
  const id = `case-${String(index).padStart(5, "0")}`;
  const label: "real" | "fake" = rng() < 0.5 ? "fake" : "real";
  const malformed = rng() < 0.15;

  if (task === "detection") {
    const verdict = rng() < 0.5 ? "fake" : "real";
    const rawText = malformed
      ? "no actual verdict here"
      : rng() < 0.7
        ? `thoughts... <answer>${verdict}</answer>`
        : `plain verdict: ${verdict}`;
    return { id, task, label, annotation: {}, rawText };
  }

  if (task === "counting") {
    const gt = [0, 1, 2].map(() => Math.floor(rng() * 12));
    const pred = gt.map((g) => Math.max(0, g + Math.floor(rng() * 5) - 2));
    const rawText = malformed ? "lots of shapes" : `I count ${pred.join(",")}`;
    return { id, task, label, annotation: { counts: gt }, rawText };
  }

  if (task === "artifact_grounding") {
    const gtBoxes = Array.from({ length: 1 + Math.floor(rng() * 3) }, () => randomBox(rng));
    const predBoxes = gtBoxes.map((b) => (rng() < 0.8 ? jitterBox(rng, b) : randomBox(rng)));
    const rawText = malformed ? "{boxes: oops}" : JSON.stringify({ boxes: predBoxes });
    return { id, task, label, annotation: { time_s: rng() * 10, boxes: gtBoxes }, rawText };
  }

  const seconds = Array.from({ length: 1 + Math.floor(rng() * 4) }, (_, k) => k + 1);
  const gtBoxes: Record<string, number[]> = {};
  const predBoxes: Record<string, number[]> = {};
  for (const s of seconds) {
    gtBoxes[String(s)] = randomBox(rng);
    if (rng() < 0.85) {
      predBoxes[String(s)] = jitterBox(rng, gtBoxes[String(s)]);
    }
  }
  if (task === "tracking") {
    const rawText = malformed ? '{"boxes": {"x": [1,2,3]}}' : JSON.stringify({ boxes: predBoxes });
    return { id, task, label, annotation: { boxes: gtBoxes }, rawText };
  }
  const start = rng() * 8;
  const gtSpan = [start, start + rng() * 6];
  const predStart = rng() * 8;
  const rawText = malformed
    ? "span unknown"
    : JSON.stringify({ time: [predStart, predStart + rng() * 6], boxes: predBoxes });
  return { id, task, label, annotation: { time: gtSpan, boxes: gtBoxes }, rawText };
}

export function randomRolloutGroups(rng: () => number, nGroups: number, groupSize: number): RolloutGroup[] {
  const groups: RolloutGroup[] = [];
  for (let g = 0; g < nGroups; g++) {
    const logpTheta: number[][] = [];
    const logpOld: number[][] = [];
    const rewards: number[] = [];
    for (let s = 0; s < groupSize; s++) {
      const nTokens = 3 + Math.floor(rng() * 8);
      const old = Array.from({ length: nTokens }, () => -0.1 - rng() * 2.5);
      const theta = old.map((v) => Math.min(0, v + (rng() - 0.5) * 4e-3));
      logpTheta.push(theta);
      logpOld.push(old);
      rewards.push(rng());
    }
    groups.push({ logp_theta: logpTheta, logp_old: logpOld, rewards });
  }
  return groups;
}

export function randomPreferenceItems(rng: () => number, n: number): PreferenceItem[] {
  return Array.from({ length: n }, () => {
    const refP = -5 - rng() * 30;
    const refR = -5 - rng() * 30;
    return {
      kind: rng() < 0.5 ? ("perception" as const) : ("reasoning" as const),
      logp_theta_p: refP + (rng() - 0.5) * 6,
      logp_ref_p: refP,
      logp_theta_r: refR + (rng() - 0.5) * 6,
      logp_ref_r: refR,
    };
  });
}

import { describe, expect, it } from "vitest";

import { BindingError, BoundHandle } from "../src/index.js";

describe("bound handles", () => {
  it("reports the protocol version", async () => {
    const handle = await BoundHandle.open({});
    try {
      const info = await handle.ping();
      expect(info.protocol).toBe(1);
      expect(info.config.alpha).toBe(0.2);
      expect(info.config.eps_clip_low).toBe(3e-4);
      expect(info.config.eps_clip_high).toBe(4e-4);
      expect(info.config.group_size).toBe(4);
    } finally {
      await handle.close();
    }
  }, 30_000);

  it("freezes its config and leaks no state across handles", async () => {
    const strict = await BoundHandle.open({ alpha: 0.2 });
    const lax = await BoundHandle.open({ alpha: 0.5 });
    try {
      // interleave calls across the two handles
      for (let i = 0; i < 10; i++) {
        const [a, b] = await Promise.all([
          strict.score("detection", "<answer>fake</answer>", {}, "fake"),
          lax.score("detection", "<answer>fake</answer>", {}, "fake"),
        ]);
        expect(a.reward).toBeCloseTo(1.2, 12);
        expect(b.reward).toBeCloseTo(1.5, 12);
      }
    } finally {
      await strict.close();
      await lax.close();
    }
  }, 30_000);

  it("parses responses into tagged records", async () => {
    const handle = await BoundHandle.open({});
    try {
      const counting = await handle.parse("counting", "I count 3,1,4");
      expect(counting).toEqual({ type: "counting", circles: 3, squares: 1, triangles: 4 });
      const failure = await handle.parse("counting", "several shapes");
      expect(failure.type).toBe("parse_failure");
    } finally {
      await handle.close();
    }
  }, 30_000);

  it("maps toolkit rejections to coded errors, not crashes", async () => {
    const handle = await BoundHandle.open({});
    try {
      await expect(
        handle.gspoLoss([{ logp_theta: [[-1]], logp_old: [[-1]], rewards: [1] }]),
      ).rejects.toThrowError(BindingError);
      await expect(
        handle.gspoLoss([{ logp_theta: [[-1]], logp_old: [[-1]], rewards: [1] }]),
      ).rejects.toMatchObject({ code: "bad_request" });
      // the bridge stays usable after an error
      const info = await handle.ping();
      expect(info.protocol).toBe(1);
    } finally {
      await handle.close();
    }
  }, 30_000);

  it("rejects calls after close", async () => {
    const handle = await BoundHandle.open({});
    await handle.close();
    await expect(handle.ping()).rejects.toMatchObject({ code: "bridge_closed" });
  }, 30_000);

  it("is deterministic call over call", async () => {
    const handle = await BoundHandle.open({});
    try {
      const first = await handle.buildSchedule(
        { n_grounding: 6, n_counting: 2, n_detection: 8, epochs: 1, batch_size: 4 },
        7,
      );
      const second = await handle.buildSchedule(
        { n_grounding: 6, n_counting: 2, n_detection: 8, epochs: 1, batch_size: 4 },
        7,
      );
      expect(first).toEqual(second);
      expect(first.batches[0].phase).toBe("perception");
    } finally {
      await handle.close();
    }
  }, 30_000);
});

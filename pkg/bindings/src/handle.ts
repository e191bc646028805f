import { Bridge, BridgeOptions } from "./bridge.js";
import {
  GspoLossResult,
  JointDpoLossResult,
  LossConfig,
  MixtureConfig,
  ParsedResponse,
  PingResult,
  PreferenceItem,
  RewardRecord,
  RolloutGroup,
  ScheduleBatch,
  Task,
} from "./types.js";

/** Opaque toolkit context. Every call through a handle uses the LossConfig
 * it was opened with; independent handles never share state. */
export class BoundHandle {
  private bridge: Bridge;

  private constructor(bridge: Bridge) {
    this.bridge = bridge;
  }

  static async open(config: LossConfig = {}, options: Omit<BridgeOptions, "config"> = {}): Promise<BoundHandle> {
    const handle = new BoundHandle(new Bridge({ ...options, config }));
    await handle.ping(); // fail fast if the toolkit is unavailable
    return handle;
  }

  ping(): Promise<PingResult> {
    return this.bridge.call("ping", {}) as Promise<PingResult>;
  }

  /** Parse raw model text into the structured response for a task. */
  parse(task: Task, text: string): Promise<ParsedResponse> {
    return this.bridge.call("parse", { task, text }) as Promise<ParsedResponse>;
  }

  /** Score one raw response against its ground truth. For detection the
   * annotation is empty and gtLabel carries the truth; perception tasks
   * pass their annotation object. */
  score(
    task: Task,
    rawText: string,
    annotation: Record<string, unknown> = {},
    gtLabel: "real" | "fake" = "real",
    id = "rpc",
  ): Promise<RewardRecord> {
    return this.bridge.call("score", {
      id,
      task,
      raw_text: rawText,
      annotation,
      gt_label: gtLabel,
    }) as Promise<RewardRecord>;
  }

  gspoLoss(groups: RolloutGroup[]): Promise<GspoLossResult> {
    return this.bridge.call("gspo_loss", { groups }) as Promise<GspoLossResult>;
  }

  jointDpoLoss(
    responseItems: PreferenceItem[],
    videoItems: PreferenceItem[],
    pooling: "pooled" | "by_kind" = "pooled",
  ): Promise<JointDpoLossResult> {
    return this.bridge.call("joint_dpo_loss", {
      response_items: responseItems,
      video_items: videoItems,
      pooling,
    }) as Promise<JointDpoLossResult>;
  }

  buildSchedule(config: MixtureConfig, seed: number): Promise<{ batches: ScheduleBatch[] }> {
    return this.bridge.call("schedule", { ...config, seed }) as Promise<{
      batches: ScheduleBatch[];
    }>;
  }

  close(): Promise<void> {
    return this.bridge.close();
  }
}

export function openHandle(
  config: LossConfig = {},
  options: Omit<BridgeOptions, "config"> = {},
): Promise<BoundHandle> {
  return BoundHandle.open(config, options);
}

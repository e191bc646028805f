/** Wire types for the toolkit's line-delimited JSON bridge. */

export interface LossConfig {
  beta?: number;
  alpha?: number;
  eps_count?: number;
  eps_clip_low?: number;
  eps_clip_high?: number;
  group_size?: number;
  token_normalize?: boolean;
  advantage_std_floor?: number;
}

export type Task =
  | "detection"
  | "grounding"
  | "tracking"
  | "counting"
  | "artifact_grounding";

export interface RewardRecord {
  id: string;
  task: Task;
  reward: number;
  components: Record<string, number>;
  parse_ok: boolean;
}

export type ParsedResponse =
  | { type: "detection"; verdict: "real" | "fake"; had_answer_tags: boolean }
  | { type: "grounding"; time: [number, number]; boxes: Record<string, number[]> }
  | { type: "tracking"; boxes: Record<string, number[]> }
  | { type: "counting"; circles: number; squares: number; triangles: number }
  | { type: "artifact_boxes"; boxes: number[][] }
  | { type: "judgment"; analysis: string; decision: "A" | "B" | "C" }
  | { type: "parse_failure"; task: string; reason: string };

export interface PreferenceItem {
  kind: "perception" | "reasoning";
  logp_theta_p: number;
  logp_ref_p: number;
  logp_theta_r: number;
  logp_ref_r: number;
}

export interface RolloutGroup {
  /** Per-sequence, per-token log-probabilities under the trainable policy. */
  logp_theta: number[][];
  /** Per-sequence, per-token log-probabilities under the rollout policy. */
  logp_old: number[][];
  rewards: number[];
}

export interface GspoLossResult {
  loss: number;
  /** grads[group][sequence][token], wrt the trainable-policy inputs. */
  grads: number[][][];
}

export interface JointDpoLossResult {
  loss: number;
  /** One [d/d theta_p, d/d theta_r] pair per item. */
  grads_response: [number, number][];
  grads_video: [number, number][];
}

export interface MixtureConfig {
  n_grounding?: number;
  n_counting?: number;
  n_detection?: number;
  epochs?: number;
  batch_size?: number;
  mode?: "phase_level" | "batch_level";
  perception_subphases?: boolean;
}

export interface ScheduleBatch {
  epoch: number;
  batch_index: number;
  phase: "perception" | "detection" | "mixed";
  ids: [string, string][];
}

export interface PingResult {
  version: string;
  protocol: number;
  config: Required<LossConfig>;
}

export interface RpcRequest {
  id: number;
  op: string;
  params: unknown;
}

export type RpcResponse =
  | { id: number | null; ok: true; result: unknown }
  | { id: number | null; ok: false; error: { code: string; message: string } };

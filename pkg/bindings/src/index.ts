export { BoundHandle, openHandle } from "./handle.js";
export { Bridge, BridgeOptions } from "./bridge.js";
export { BindingError } from "./errors.js";
export type {
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

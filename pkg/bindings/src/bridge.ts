import { spawn, ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface, Interface } from "node:readline";

import { BindingError } from "./errors.js";
import { LossConfig, RpcResponse } from "./types.js";

export interface BridgeOptions {
  /** Interpreter + argv prefix; defaults to ["python3", "-m", "verikit.cli"]
   * and honors the VERIKIT_PYTHON environment variable. */
  command?: string[];
  config?: LossConfig;
}

function defaultCommand(): string[] {
  const python = process.env.VERIKIT_PYTHON ?? "python3";
  return [python, "-m", "verikit.cli"];
}

interface Pending {
  resolve: (value: unknown) => void;
  reject: (err: Error) => void;
}

/** One toolkit process serving line-delimited JSON requests; the config
 * passed at spawn time is frozen for the bridge's lifetime. */
export class Bridge {
  private child: ChildProcessWithoutNullStreams;
  private reader: Interface;
  private pending = new Map<number, Pending>();
  private nextId = 1;
  private closed = false;
  private stderrTail = "";

  constructor(options: BridgeOptions = {}) {
    const argv = [...(options.command ?? defaultCommand()), "rpc"];
    if (options.config && Object.keys(options.config).length > 0) {
      argv.push("--config", JSON.stringify(options.config));
    }
    this.child = spawn(argv[0], argv.slice(1), { stdio: ["pipe", "pipe", "pipe"] });
    this.reader = createInterface({ input: this.child.stdout });
    this.reader.on("line", (line) => this.onLine(line));
    this.child.stderr.on("data", (chunk: Buffer) => {
      this.stderrTail = (this.stderrTail + chunk.toString()).slice(-2000);
    });
    this.child.on("exit", () => this.failAll("bridge_closed", "toolkit process exited"));
    this.child.on("error", (err) => this.failAll("spawn_failed", String(err.message)));
  }

  private onLine(line: string): void {
    if (!line.trim() || line.startsWith("RESULT ")) {
      return;
    }
    let response: RpcResponse;
    try {
      response = JSON.parse(line) as RpcResponse;
    } catch {
      return;
    }
    const id = response.id;
    if (id === null || !this.pending.has(id)) {
      return;
    }
    const pending = this.pending.get(id)!;
    this.pending.delete(id);
    if (response.ok) {
      pending.resolve(response.result);
    } else {
      pending.reject(new BindingError(response.error.code, response.error.message));
    }
  }

  private failAll(code: string, message: string): void {
    if (this.closed) {
      return;
    }
    const detail = this.stderrTail ? `${message}: ${this.stderrTail.trim()}` : message;
    for (const pending of this.pending.values()) {
      pending.reject(new BindingError(code, detail));
    }
    this.pending.clear();
  }

  call(op: string, params: unknown): Promise<unknown> {
    if (this.closed || this.child.exitCode !== null) {
      return Promise.reject(new BindingError("bridge_closed", "bridge is closed"));
    }
    const id = this.nextId++;
    const line = JSON.stringify({ id, op, params }) + "\n";
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.child.stdin.write(line, (err) => {
        if (err) {
          this.pending.delete(id);
          reject(new BindingError("write_failed", String(err.message)));
        }
      });
    });
  }

  async close(): Promise<void> {
    if (this.closed) {
      return;
    }
    this.closed = true;
    this.child.stdin.end();
    await new Promise<void>((resolve) => {
      const timer = setTimeout(() => {
        this.child.kill();
        resolve();
      }, 2000);
      this.child.on("exit", () => {
        clearTimeout(timer);
        resolve();
      });
      if (this.child.exitCode !== null) {
        clearTimeout(timer);
        resolve();
      }
    });
    this.reader.close();
  }
}

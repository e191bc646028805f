/** Errors cross the bridge as code + message pairs, never as raw stack
 * traces from the foreign side. */
export class BindingError extends Error {
  readonly code: string;

  constructor(code: string, message: string) {
    super(message);
    this.name = "BindingError";
    this.code = code;
  }
}

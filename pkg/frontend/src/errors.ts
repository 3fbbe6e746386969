/**
 * Error types. File-format problems found on this side of the boundary get
 * the same class names the toolkit uses, so callers can dispatch on `name`
 * without caring which side detected the problem.
 */

export class BadMagicError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'BadMagicError';
    Object.setPrototypeOf(this, BadMagicError.prototype);
  }
}

export class CorruptHeaderError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'CorruptHeaderError';
    Object.setPrototypeOf(this, CorruptHeaderError.prototype);
  }
}

export class UnsupportedDatatypeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'UnsupportedDatatypeError';
    Object.setPrototypeOf(this, UnsupportedDatatypeError.prototype);
  }
}

export class UnsupportedOrientationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'UnsupportedOrientationError';
    Object.setPrototypeOf(this, UnsupportedOrientationError.prototype);
  }
}

export class NonFiniteDataError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'NonFiniteDataError';
    Object.setPrototypeOf(this, NonFiniteDataError.prototype);
  }
}

export class NonBinaryMaskError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'NonBinaryMaskError';
    Object.setPrototypeOf(this, NonBinaryMaskError.prototype);
  }
}

/** The toolkit rejected the command line itself (exit code 1). */
export class CliUsageError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'CliUsageError';
    Object.setPrototypeOf(this, CliUsageError.prototype);
  }
}

/**
 * The toolkit failed on the data (exit code 2). `errorName` carries the
 * toolkit's own error class, parsed from its stderr line
 * `error: <ClassName>: <message>`.
 */
export class CliDataError extends Error {
  public errorName: string;

  constructor(errorName: string, message: string) {
    super(message);
    this.name = 'CliDataError';
    this.errorName = errorName;
    Object.setPrototypeOf(this, CliDataError.prototype);
  }
}

/**
 * Explorer state, kept apart from the DOM so the wiring code stays thin.
 *
 * Weights travel to the service exactly as the sliders report them; there is
 * no normalization anywhere on the client. Pinned entries are frozen copies,
 * so later slider moves can never rewrite a pin.
 */

export const SLIDER_MIN = -1.5;
export const SLIDER_MAX = 2;
export const SLIDER_STEP = 0.05;
export const DEFAULT_STEPS = 5;

export interface Pin {
  readonly seed: number;
  readonly weights: readonly number[];
  readonly url: string;
}

export interface Snapshot {
  readonly seed: number;
  readonly weights: readonly number[];
}

export class ExplorerState {
  readonly classes: string[];
  weights: number[];
  seed: number;
  pins: Pin[] = [];
  stripFrom: Snapshot | null = null;
  stripTo: Snapshot | null = null;
  steps: number = DEFAULT_STEPS;

  constructor(classes: string[], seed = 0) {
    this.classes = classes.slice();
    // one slider per class; a fresh panel starts with every weight at zero
    this.weights = classes.map(() => 0);
    this.seed = seed;
  }

  setWeight(index: number, value: number) {
    if (index < 0 || index >= this.weights.length) {
      throw new RangeError(`no slider at index ${index}`);
    }
    this.weights[index] = value;
  }

  /** Copy of the current label vector, safe to hand to a request body. */
  label(): number[] {
    return this.weights.slice();
  }

  snapshot(): Snapshot {
    return Object.freeze({
      seed: this.seed,
      weights: Object.freeze(this.weights.slice()),
    });
  }

  pin(url: string): Pin {
    const entry: Pin = Object.freeze({
      seed: this.seed,
      weights: Object.freeze(this.weights.slice()),
      url,
    });
    this.pins.push(entry);
    return entry;
  }

  /** Restore seed and weights from a pin so the panel reproduces it exactly. */
  restore(entry: Pin | Snapshot) {
    this.seed = entry.seed;
    this.weights = entry.weights.slice();
  }
}

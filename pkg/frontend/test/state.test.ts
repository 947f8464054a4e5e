import { describe, expect, it } from 'vitest';

import {
  DEFAULT_STEPS,
  ExplorerState,
  SLIDER_MAX,
  SLIDER_MIN,
  SLIDER_STEP,
} from '../src/state.js';

const CLASSES = ['amsterdam', 'dc', 'manhattan'];

describe('ExplorerState', () => {
  it('starts with one zero weight per class', () => {
    const state = new ExplorerState(CLASSES);
    expect(state.weights).toEqual([0, 0, 0]);
    expect(state.classes).toEqual(CLASSES);
    expect(state.seed).toBe(0);
    expect(state.steps).toBe(DEFAULT_STEPS);
  });

  it('copies the class list instead of aliasing it', () => {
    const names = ['a', 'b'];
    const state = new ExplorerState(names);
    names.push('c');
    expect(state.classes).toEqual(['a', 'b']);
  });

  it('updates weights in place and rejects bad indices', () => {
    const state = new ExplorerState(CLASSES);
    state.setWeight(1, -1);
    expect(state.weights).toEqual([0, -1, 0]);
    expect(() => state.setWeight(3, 1)).toThrow(RangeError);
    expect(() => state.setWeight(-1, 1)).toThrow(RangeError);
  });

  it('hands out label copies, not the live array', () => {
    const state = new ExplorerState(CLASSES);
    const label = state.label();
    label[0] = 99;
    expect(state.weights[0]).toBe(0);
  });

  it('snapshots are frozen and unaffected by later edits', () => {
    const state = new ExplorerState(CLASSES, 7);
    state.setWeight(0, 1);
    const snap = state.snapshot();
    state.setWeight(0, -0.5);
    state.seed = 123;
    expect(snap.seed).toBe(7);
    expect(snap.weights).toEqual([1, 0, 0]);
    expect(() => (snap.weights as number[]).push(1)).toThrow(TypeError);
  });

  it('pins freeze seed, weights and url', () => {
    const state = new ExplorerState(CLASSES, 3);
    state.setWeight(2, 0.25);
    const entry = state.pin('blob:one');
    state.setWeight(2, -1.5);
    state.seed = 42;

    expect(state.pins).toHaveLength(1);
    expect(entry.seed).toBe(3);
    expect(entry.weights).toEqual([0, 0, 0.25]);
    expect(entry.url).toBe('blob:one');
    expect(() => (entry.weights as number[])[0] = 9).toThrow(TypeError);
  });

  it('restore reproduces a pin without aliasing its weights', () => {
    const state = new ExplorerState(CLASSES, 3);
    state.setWeight(0, 1);
    const entry = state.pin('blob:one');

    state.seed = 99;
    state.setWeight(0, -1);
    state.restore(entry);
    expect(state.seed).toBe(3);
    expect(state.weights).toEqual([1, 0, 0]);

    state.setWeight(0, 2);
    expect(entry.weights).toEqual([1, 0, 0]);
  });

  it('slider range covers the subtraction setting of plus and minus one', () => {
    expect(SLIDER_MIN).toBe(-1.5);
    expect(SLIDER_MAX).toBe(2);
    expect(SLIDER_STEP).toBe(0.05);
    expect(SLIDER_MIN).toBeLessThanOrEqual(-1);
    expect(SLIDER_MAX).toBeGreaterThanOrEqual(1);
  });
});

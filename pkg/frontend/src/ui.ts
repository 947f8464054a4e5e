/**
 * DOM wiring for the label-space explorer.
 *
 * Everything is built under the root node passed to initExplorer, so tests
 * can drive the page against a mocked fetch without a real server. The page
 * talks to exactly three routes: GET /api/model, POST /api/generate and
 * POST /api/interpolate.
 */

import { ApiError, GeneratePayload, fetchModel, generateImage, interpolate } from './api.js';
import { debounce } from './debounce.js';
import {
  DEFAULT_STEPS,
  ExplorerState,
  Pin,
  SLIDER_MAX,
  SLIDER_MIN,
  SLIDER_STEP,
} from './state.js';

const DEBOUNCE_MS = 150;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  props: Partial<HTMLElementTagNameMap[K]> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  Object.assign(node, props);
  node.append(...children);
  return node;
}

function fmtWeight(value: number): string {
  return value.toFixed(2);
}

function describeLabel(classes: string[], weights: readonly number[]): string {
  if (classes.length === 0) return 'unconditional';
  return classes.map((name, i) => `${name} ${fmtWeight(weights[i])}`).join(' · ');
}

function isAbort(err: unknown): boolean {
  return (err as { name?: string } | null)?.name === 'AbortError';
}

export async function initExplorer(root: HTMLElement): Promise<void> {
  const banner = el('div', { id: 'banner', className: 'banner' });
  banner.hidden = true;

  const showBanner = (text: string) => {
    banner.textContent = text;
    banner.hidden = false;
  };
  const clearBanner = () => {
    banner.hidden = true;
  };

  let model;
  try {
    model = await fetchModel();
  } catch (err) {
    showBanner(
      err instanceof ApiError ? err.message : `cannot reach the service: ${String(err)}`,
    );
    root.replaceChildren(banner);
    return;
  }

  const state = new ExplorerState(model.classes);
  let lastBlob: Blob | null = null;
  let liveController: AbortController | null = null;
  let stripController: AbortController | null = null;

  // --- live panel -------------------------------------------------------

  const preview = el('img', {
    id: 'preview',
    alt: 'generated tile',
    width: model.image_size,
    height: model.image_size,
  });
  const readout = el('div', { id: 'label-readout', className: 'readout' });
  readout.textContent = describeLabel(state.classes, state.weights);

  const seedInput = el('input', { id: 'seed', type: 'number', step: '1' });
  seedInput.value = String(state.seed);

  const sliderInputs: HTMLInputElement[] = [];
  const sliderValues: HTMLSpanElement[] = [];
  const sliderBox = el('div', { id: 'sliders' });

  state.classes.forEach((name, i) => {
    const slider = el('input', { type: 'range', className: 'weight-slider' });
    slider.min = String(SLIDER_MIN);
    slider.max = String(SLIDER_MAX);
    slider.step = String(SLIDER_STEP);
    slider.value = String(state.weights[i]);
    slider.dataset.classIndex = String(i);

    const value = el('span', { className: 'slider-value' }, fmtWeight(state.weights[i]));
    slider.addEventListener('input', () => {
      state.setWeight(i, parseFloat(slider.value));
      value.textContent = fmtWeight(state.weights[i]);
      readout.textContent = describeLabel(state.classes, state.weights);
      scheduleGenerate();
    });

    sliderInputs.push(slider);
    sliderValues.push(value);
    sliderBox.append(
      el('label', { className: 'slider-row' }, el('span', { className: 'slider-name' }, name), slider, value),
    );
  });
  if (state.classes.length === 0) {
    sliderBox.append(el('p', { className: 'note' }, 'unconditional model: no label sliders'));
  }

  async function generateNow() {
    liveController?.abort();
    const controller = new AbortController();
    liveController = controller;

    const payload: GeneratePayload = { seed: state.seed };
    if (state.classes.length > 0) payload.label = state.label();

    try {
      const blob = await generateImage(payload, controller.signal);
      if (controller !== liveController) return;
      lastBlob = blob;
      const previous = preview.src;
      preview.src = URL.createObjectURL(blob);
      if (previous.startsWith('blob:')) URL.revokeObjectURL(previous);
      pinButton.disabled = false;
      clearBanner();
    } catch (err) {
      if (isAbort(err)) return;
      // keep the previous image up: an error must never blank the panel
      showBanner(
        err instanceof ApiError ? err.message : `network error: ${(err as Error).message ?? err}`,
      );
    }
  }

  const scheduleGenerate = debounce(() => void generateNow(), DEBOUNCE_MS);

  seedInput.addEventListener('input', () => {
    const seed = parseInt(seedInput.value, 10);
    if (!Number.isFinite(seed)) return;
    state.seed = seed;
    scheduleGenerate();
  });

  const rerollButton = el('button', { type: 'button', id: 'reroll' }, 'new seed');
  rerollButton.addEventListener('click', () => {
    state.seed = Math.floor(Math.random() * 2 ** 31);
    seedInput.value = String(state.seed);
    scheduleGenerate();
  });

  function syncControls() {
    seedInput.value = String(state.seed);
    sliderInputs.forEach((slider, i) => {
      slider.value = String(state.weights[i]);
      sliderValues[i].textContent = fmtWeight(state.weights[i]);
    });
    readout.textContent = describeLabel(state.classes, state.weights);
  }

  // --- pins -------------------------------------------------------------

  const pinsBox = el('div', { id: 'pins' });
  const pinButton = el('button', { type: 'button', id: 'pin', disabled: true }, 'pin');

  function renderPin(entry: Pin) {
    const cell = el(
      'button',
      { type: 'button', className: 'pin-entry' },
      el('img', { src: entry.url, alt: 'pinned tile' }),
      el(
        'span',
        { className: 'pin-caption' },
        `seed ${entry.seed} · ${describeLabel(state.classes, entry.weights)}`,
      ),
    );
    cell.addEventListener('click', () => {
      state.restore(entry);
      syncControls();
      void generateNow();
    });
    pinsBox.append(cell);
  }

  pinButton.addEventListener('click', () => {
    if (lastBlob === null) return;
    renderPin(state.pin(URL.createObjectURL(lastBlob)));
  });

  // --- interpolation strip ------------------------------------------------

  const fromReadout = el('span', { id: 'from-readout', className: 'readout' }, 'unset');
  const toReadout = el('span', { id: 'to-readout', className: 'readout' }, 'unset');
  const stepsInput = el('input', { id: 'steps', type: 'number', min: '2', max: '32' });
  stepsInput.value = String(DEFAULT_STEPS);
  const buildButton = el('button', { type: 'button', id: 'build-strip', disabled: true }, 'build strip');
  const stripBox = el('div', { id: 'strip' });

  const updateBuildEnabled = () => {
    buildButton.disabled = state.stripFrom === null || state.stripTo === null;
  };

  const snapFrom = el('button', { type: 'button', id: 'snap-from' }, 'set A');
  snapFrom.addEventListener('click', () => {
    state.stripFrom = state.snapshot();
    fromReadout.textContent = `seed ${state.stripFrom.seed} · ${describeLabel(state.classes, state.stripFrom.weights)}`;
    updateBuildEnabled();
  });
  const snapTo = el('button', { type: 'button', id: 'snap-to' }, 'set B');
  snapTo.addEventListener('click', () => {
    state.stripTo = state.snapshot();
    toReadout.textContent = `seed ${state.stripTo.seed} · ${describeLabel(state.classes, state.stripTo.weights)}`;
    updateBuildEnabled();
  });

  buildButton.addEventListener('click', () => void buildStrip());

  async function buildStrip() {
    if (state.stripFrom === null || state.stripTo === null) return;
    const parsed = parseInt(stepsInput.value, 10);
    state.steps = Number.isFinite(parsed) ? parsed : DEFAULT_STEPS;

    stripController?.abort();
    const controller = new AbortController();
    stripController = controller;

    try {
      const cells = await interpolate(
        {
          seed: state.stripFrom.seed,
          from: state.stripFrom.weights.slice(),
          to: state.stripTo.weights.slice(),
          steps: state.steps,
        },
        controller.signal,
      );
      if (controller !== stripController) return;
      stripBox.replaceChildren(
        ...cells.map((cell) =>
          el(
            'figure',
            { className: 'strip-cell' },
            el('img', { src: `data:image/png;base64,${cell.image}`, alt: 'strip frame' }),
            el('figcaption', {}, describeLabel(state.classes, cell.label)),
          ),
        ),
      );
      clearBanner();
    } catch (err) {
      if (isAbort(err)) return;
      showBanner(
        err instanceof ApiError ? err.message : `network error: ${(err as Error).message ?? err}`,
      );
    }
  }

  // --- assembly -----------------------------------------------------------

  root.replaceChildren(
    el(
      'header',
      {},
      el('h1', {}, 'citygan explorer'),
      el(
        'p',
        { className: 'model-line', id: 'model-line' },
        `${model.variant} · ${model.image_size}px · step ${model.step}`,
      ),
    ),
    banner,
    el(
      'section',
      { id: 'live-panel' },
      el('div', { className: 'preview-box' }, preview, readout),
      el(
        'div',
        { className: 'controls' },
        el('label', { className: 'seed-row' }, 'seed ', seedInput, rerollButton),
        sliderBox,
        pinButton,
      ),
    ),
    el('section', { id: 'pins-panel' }, el('h2', {}, 'pinned'), pinsBox),
    ...(state.classes.length > 0
      ? [
          el(
            'section',
            { id: 'strip-panel' },
            el('h2', {}, 'interpolation'),
            el(
              'div',
              { className: 'strip-controls' },
              snapFrom,
              fromReadout,
              snapTo,
              toReadout,
              el('label', {}, 'steps ', stepsInput),
              buildButton,
            ),
            stripBox,
          ),
        ]
      : []),
  );

  await generateNow();
}

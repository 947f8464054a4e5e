/** Thin typed client for the three generator routes the explorer uses. */

export interface ModelInfo {
  classes: string[];
  label_count: number;
  image_size: number;
  noise_dim: number;
  variant: string;
  step: number;
}

export interface StripStep {
  label: number[];
  image: string;
}

/** Structured failure from the service, or a synthesized one for bad payloads. */
export class ApiError extends Error {
  code: string;
  field: string | null;
  status: number;

  constructor(status: number, code: string, field: string | null, message: string) {
    super(message);
    this.name = 'ApiError';
    this.status = status;
    this.code = code;
    this.field = field;
  }
}

async function raiseFor(response: Response): Promise<never> {
  let code = 'http_error';
  let field: string | null = null;
  let message = `request failed with status ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body === 'object' && body.error) {
      code = body.error.code ?? code;
      field = body.error.field ?? null;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body, keep the fallback message
  }
  throw new ApiError(response.status, code, field, message);
}

export async function fetchModel(): Promise<ModelInfo> {
  const response = await fetch('/api/model');
  if (!response.ok) await raiseFor(response);
  return (await response.json()) as ModelInfo;
}

export interface GeneratePayload {
  seed: number;
  label?: number[];
}

/** POST /api/generate, resolving to the PNG bytes as a Blob. */
export async function generateImage(
  payload: GeneratePayload,
  signal?: AbortSignal,
): Promise<Blob> {
  const response = await fetch('/api/generate', {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify(payload),
    signal,
  });
  if (!response.ok) await raiseFor(response);
  return await response.blob();
}

export interface InterpolatePayload {
  seed: number;
  from: number[];
  to: number[];
  steps: number;
}

/** POST /api/interpolate, resolving to the per-step labels and base64 frames. */
export async function interpolate(
  payload: InterpolatePayload,
  signal?: AbortSignal,
): Promise<StripStep[]> {
  const response = await fetch('/api/interpolate', {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify(payload),
    signal,
  });
  if (!response.ok) await raiseFor(response);
  const body = await response.json();
  return body.steps as StripStep[];
}

export interface Point {
  x: number;
  y: number;
}

export interface Arrow {
  x: number;
  y: number;
  u: number;
  v: number;
}

/** Everything the user has placed, in image space. */
export interface CanvasState {
  readonly arrows: readonly Arrow[];
  readonly positives: readonly Point[];
  readonly negatives: readonly Point[];
}

export const EMPTY_STATE: CanvasState = { arrows: [], positives: [], negatives: [] };

export interface AnnotationParams {
  directionCount: number;
  threshold: number;
  dummyMagnitude: number | null;
}

export const DEFAULT_PARAMS: AnnotationParams = {
  directionCount: 8,
  threshold: 0.4,
  dummyMagnitude: null,
};

// --- server DTOs (mirrors the annotation service API) ---

export interface SessionBody {
  image: string;
  positives: [number, number][];
  negatives: [number, number][];
  direction_count: number;
  threshold: number;
  dummy_magnitude: number | null;
}

export interface SessionResponse {
  session_id: string;
  width: number;
  height: number;
  mask_png: string;
  positives: [number, number][];
  negatives: [number, number][];
  direction_count: number;
  threshold: number;
  dummy_magnitude: number | null;
}

export interface PropagateBody {
  image: string;
  arrows: Arrow[];
}

export interface PropagateResponse {
  width: number;
  height: number;
  flow_flo: string;
  flow_png: string;
}

export interface GenerateFrameResponse {
  image: string;
}

import type { AnnotationParams, Arrow, CanvasState, Point, SessionBody } from "./types.js";
import { EMPTY_STATE } from "./types.js";

export type EditOp =
  | { kind: "add-arrow"; arrow: Arrow }
  | { kind: "remove-arrow"; index: number }
  | { kind: "clear-arrows" }
  | { kind: "add-positive"; point: Point }
  | { kind: "remove-positive"; index: number }
  | { kind: "add-negative"; point: Point }
  | { kind: "remove-negative"; index: number };

export function applyOp(state: CanvasState, op: EditOp): CanvasState {
  switch (op.kind) {
    case "add-arrow":
      return { ...state, arrows: [...state.arrows, op.arrow] };
    case "remove-arrow":
      return { ...state, arrows: state.arrows.filter((_, i) => i !== op.index) };
    case "clear-arrows":
      return { ...state, arrows: [] };
    case "add-positive":
      return { ...state, positives: [...state.positives, op.point] };
    case "remove-positive":
      return { ...state, positives: state.positives.filter((_, i) => i !== op.index) };
    case "add-negative":
      return { ...state, negatives: [...state.negatives, op.point] };
    case "remove-negative":
      return { ...state, negatives: state.negatives.filter((_, i) => i !== op.index) };
  }
}

export function replay(ops: readonly EditOp[]): CanvasState {
  return ops.reduce(applyOp, EMPTY_STATE);
}

/**
 * Undo/redo as pure state replay: the store keeps the operation log and
 * a cursor; the current state is always the fold of ops[0..cursor).
 */
export class HistoryStore {
  private ops: EditOp[] = [];
  private cursor = 0;

  get state(): CanvasState {
    return replay(this.ops.slice(0, this.cursor));
  }

  get oplog(): readonly EditOp[] {
    return this.ops.slice(0, this.cursor);
  }

  push(op: EditOp): CanvasState {
    this.ops = this.ops.slice(0, this.cursor);
    this.ops.push(op);
    this.cursor += 1;
    return this.state;
  }

  canUndo(): boolean {
    return this.cursor > 0;
  }

  canRedo(): boolean {
    return this.cursor < this.ops.length;
  }

  undo(): CanvasState {
    if (this.canUndo()) this.cursor -= 1;
    return this.state;
  }

  redo(): CanvasState {
    if (this.canRedo()) this.cursor += 1;
    return this.state;
  }

  reset(): void {
    this.ops = [];
    this.cursor = 0;
  }
}

/** Full-state session payload; the server treats PUT as idempotent. */
export function sessionBody(
  imageB64: string,
  state: CanvasState,
  params: AnnotationParams,
): SessionBody {
  return {
    image: imageB64,
    positives: state.positives.map((p) => [p.x, p.y] as [number, number]),
    negatives: state.negatives.map((p) => [p.x, p.y] as [number, number]),
    direction_count: params.directionCount,
    threshold: params.threshold,
    dummy_magnitude: params.dummyMagnitude,
  };
}

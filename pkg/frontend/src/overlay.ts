export const MASK_OVERLAY_ALPHA = 0.45;
export const FLOW_OVERLAY_ALPHA = 0.8;

export type OverlayKind = "none" | "flow" | "mask";

export function overlayAlpha(kind: OverlayKind): number {
  switch (kind) {
    case "mask":
      return MASK_OVERLAY_ALPHA;
    case "flow":
      return FLOW_OVERLAY_ALPHA;
    default:
      return 0;
  }
}

export function pngDataUrl(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

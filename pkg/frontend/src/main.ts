import { ApiClient } from "./api.js";
import { overlayAlpha, pngDataUrl, type OverlayKind } from "./overlay.js";
import { HistoryStore, sessionBody } from "./state.js";
import { screenDragToArrow, screenToPixel, type Viewport } from "./transforms.js";
import { DEFAULT_PARAMS, type CanvasState, type Point } from "./types.js";

type Mode = "arrow" | "positive" | "negative";

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

class AnnotatorApp {
  private api = new ApiClient("");
  private history = new HistoryStore();
  private view: Viewport = { zoom: 1 };
  private mode: Mode = "arrow";
  private sessionId = `ui-${Date.now().toString(36)}`;
  private imageB64: string | null = null;
  private image: HTMLImageElement | null = null;
  private overlay: HTMLImageElement | null = null;
  private overlayKind: OverlayKind = "none";
  private dragStart: Point | null = null;
  private dragEnd: Point | null = null;

  private canvas = $("canvas") as unknown as HTMLCanvasElement;

  init(): void {
    $("file").addEventListener("change", (e) => this.onFile(e));
    $("mode").addEventListener("change", () => {
      this.mode = ($("mode") as unknown as HTMLSelectElement).value as Mode;
    });
    $("zoom").addEventListener("change", () => {
      this.view = { zoom: Number(($("zoom") as unknown as HTMLSelectElement).value) };
      this.resize();
    });
    $("undo").addEventListener("click", () => this.afterEdit(this.history.undo()));
    $("redo").addEventListener("click", () => this.afterEdit(this.history.redo()));
    $("clear").addEventListener("click", () => {
      this.history.reset();
      this.overlay = null;
      this.overlayKind = "none";
      this.afterEdit(this.history.state);
    });
    $("step").addEventListener("click", () => void this.stepFrame());
    this.canvas.addEventListener("mousedown", (e) => this.onDown(e));
    this.canvas.addEventListener("mousemove", (e) => this.onMove(e));
    this.canvas.addEventListener("mouseup", (e) => void this.onUp(e));
    void this.api.health().then((h) => this.status(h.model_loaded ? "model ready" : "no model loaded"));
  }

  private status(text: string): void {
    $("status").textContent = text;
  }

  private onFile(e: Event): void {
    const input = e.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const reader = new FileReader();
    reader.onload = () => {
      const url = reader.result as string;
      const img = new Image();
      img.onload = () => {
        this.image = img;
        this.imageB64 = url.split(",")[1];
        this.history.reset();
        this.overlay = null;
        this.overlayKind = "none";
        this.resize();
      };
      img.src = url;
    };
    reader.readAsDataURL(file);
  }

  private resize(): void {
    if (!this.image) return;
    this.canvas.width = Math.round(this.image.width * this.view.zoom);
    this.canvas.height = Math.round(this.image.height * this.view.zoom);
    this.draw();
  }

  private pixel(e: MouseEvent): Point {
    const rect = this.canvas.getBoundingClientRect();
    return { x: e.clientX - rect.left, y: e.clientY - rect.top };
  }

  private onDown(e: MouseEvent): void {
    if (!this.image) return;
    this.dragStart = this.pixel(e);
    this.dragEnd = this.dragStart;
  }

  private onMove(e: MouseEvent): void {
    if (this.dragStart && this.mode === "arrow") {
      this.dragEnd = this.pixel(e);
      this.draw();
    }
  }

  private async onUp(e: MouseEvent): Promise<void> {
    if (!this.image || !this.imageB64 || !this.dragStart) return;
    const start = this.dragStart;
    const end = this.pixel(e);
    this.dragStart = this.dragEnd = null;
    const { width, height } = this.image;
    if (this.mode === "arrow") {
      const arrow = screenDragToArrow(this.view, start, end, width, height);
      const state = this.history.push({ kind: "add-arrow", arrow });
      await this.propagate(state);
    } else {
      const point = screenToPixel(this.view, start, width, height);
      const op =
        this.mode === "positive"
          ? ({ kind: "add-positive", point } as const)
          : ({ kind: "add-negative", point } as const);
      this.afterEdit(this.history.push(op));
    }
  }

  private afterEdit(state: CanvasState): void {
    this.draw();
    if (!this.imageB64) return;
    if (state.positives.length === 0) {
      this.overlayKind = this.overlayKind === "mask" ? "none" : this.overlayKind;
      this.overlay = this.overlayKind === "none" ? null : this.overlay;
      this.draw();
      return;
    }
    this.status("annotating…");
    this.api.queuePutSession(
      this.sessionId,
      sessionBody(this.imageB64, state, DEFAULT_PARAMS),
      (resp) => {
        this.setOverlay(resp.mask_png, "mask");
        this.status(`mask for ${resp.positives.length}+ / ${resp.negatives.length}-`);
      },
      (err) => this.status(`error: ${String(err)}`),
    );
  }

  private async propagate(state: CanvasState): Promise<void> {
    if (!this.imageB64) return;
    this.status("propagating…");
    try {
      const resp = await this.api.propagate(this.imageB64, state.arrows);
      this.setOverlay(resp.flow_png, "flow");
      this.status(`flow from ${state.arrows.length} arrow(s)`);
    } catch (err) {
      this.status(`error: ${String(err)}`);
    }
  }

  private async stepFrame(): Promise<void> {
    if (!this.imageB64) return;
    this.status("generating frame…");
    try {
      const resp = await this.api.generateFrame(this.imageB64, this.history.state.arrows);
      const img = new Image();
      img.onload = () => {
        this.image = img;
        this.imageB64 = resp.image;
        this.history.push({ kind: "clear-arrows" });
        this.overlay = null;
        this.overlayKind = "none";
        this.resize();
        this.status("stepped one frame");
      };
      img.src = pngDataUrl(resp.image);
    } catch (err) {
      this.status(`error: ${String(err)}`);
    }
  }

  private setOverlay(pngB64: string, kind: OverlayKind): void {
    const img = new Image();
    img.onload = () => {
      this.overlay = img;
      this.overlayKind = kind;
      this.draw();
    };
    img.src = pngDataUrl(pngB64);
  }

  private draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx || !this.image) return;
    ctx.setTransform(this.view.zoom, 0, 0, this.view.zoom, 0, 0);
    ctx.imageSmoothingEnabled = this.view.zoom < 1;
    ctx.clearRect(0, 0, this.image.width, this.image.height);
    ctx.drawImage(this.image, 0, 0);
    if (this.overlay && this.overlayKind !== "none") {
      ctx.globalAlpha = overlayAlpha(this.overlayKind);
      ctx.drawImage(this.overlay, 0, 0);
      ctx.globalAlpha = 1;
    }
    const state = this.history.state;
    const z = this.view.zoom;
    for (const a of state.arrows) this.drawArrow(ctx, a.x, a.y, a.x + a.u, a.y + a.v);
    for (const p of state.positives) this.drawPoint(ctx, p, "#19c37d");
    for (const p of state.negatives) this.drawPoint(ctx, p, "#e5484d");
    if (this.dragStart && this.dragEnd && this.mode === "arrow") {
      this.drawArrow(
        ctx,
        this.dragStart.x / z,
        this.dragStart.y / z,
        this.dragEnd.x / z,
        this.dragEnd.y / z,
      );
    }
  }

  private drawPoint(ctx: CanvasRenderingContext2D, p: Point, color: string): void {
    ctx.fillStyle = color;
    ctx.beginPath();
    ctx.arc(p.x + 0.5, p.y + 0.5, 3 / this.view.zoom + 1.5, 0, 2 * Math.PI);
    ctx.fill();
  }

  private drawArrow(
    ctx: CanvasRenderingContext2D,
    x0: number,
    y0: number,
    x1: number,
    y1: number,
  ): void {
    ctx.strokeStyle = "#ffd60a";
    ctx.fillStyle = "#ffd60a";
    ctx.lineWidth = 2 / this.view.zoom;
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
    const ang = Math.atan2(y1 - y0, x1 - x0);
    const head = 6 / this.view.zoom;
    ctx.beginPath();
    ctx.moveTo(x1, y1);
    ctx.lineTo(x1 - head * Math.cos(ang - 0.4), y1 - head * Math.sin(ang - 0.4));
    ctx.lineTo(x1 - head * Math.cos(ang + 0.4), y1 - head * Math.sin(ang + 0.4));
    ctx.fill();
  }
}

if (typeof document !== "undefined" && document.getElementById("canvas")) {
  new AnnotatorApp().init();
}

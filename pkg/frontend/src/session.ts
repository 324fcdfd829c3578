import type { LayerMeta, RGB, Stroke } from "./types.js";

export interface SessionCallbacks {
  onPreview?: (blob: Blob) => void;
  onBanner?: (message: string | null) => void;
  onJobState?: (running: boolean) => void;
}

export type RecolorFn = (colors: RGB[]) => Promise<Blob>;

/**
 * Client-side editing state for one decomposed layer set.
 *
 * Swatch edits are debounced and recolored with at most one request in
 * flight; edits made while a request is pending collapse into a single
 * follow-up request (latest edit wins). The preview always corresponds to
 * the most recent acknowledged recolor response.
 */
export class StudioSession {
  layerId: string;
  palette: RGB[];
  preview: Blob | null = null;
  requestCount = 0;

  private original: RGB[];
  private strokeGroups: Stroke[][] = [];
  private running = false;

  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private editVersion = 0;
  private sentVersion = 0;

  constructor(meta: LayerMeta, private recolorFn: RecolorFn,
              private cb: SessionCallbacks = {}, private debounceMs = 120) {
    this.layerId = meta.layer_id;
    this.palette = meta.palette.map((c) => [...c] as RGB);
    this.original = meta.palette.map((c) => [...c] as RGB);
  }

  get originalPalette(): RGB[] {
    return this.original.map((c) => [...c] as RGB);
  }

  get jobRunning(): boolean {
    return this.running;
  }

  get canEdit(): boolean {
    return !this.running;
  }

  editSwatch(layer: number, color: RGB): boolean {
    if (!this.canEdit || layer < 0 || layer >= this.palette.length) {
      return false;
    }
    this.palette[layer] = [...color] as RGB;
    this.editVersion += 1;
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
    }
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      void this.flush();
    }, this.debounceMs);
    return true;
  }

  resetSwatch(layer: number): boolean {
    return this.editSwatch(layer, this.original[layer]);
  }

  private async flush(): Promise<void> {
    if (this.inFlight || this.editVersion === this.sentVersion) {
      return;
    }
    this.inFlight = true;
    const version = this.editVersion;
    const colors = this.palette.map((c) => [...c] as RGB);
    this.requestCount += 1;
    try {
      const blob = await this.recolorFn(colors);
      this.sentVersion = version;
      this.preview = blob;
      this.cb.onPreview?.(blob);
      this.cb.onBanner?.(null);
    } catch (err) {
      // edits stay queued locally; the next edit retries
      this.cb.onBanner?.(err instanceof Error ? err.message : String(err));
      this.sentVersion = version;
    } finally {
      this.inFlight = false;
      if (this.editVersion > this.sentVersion) {
        void this.flush(); // latest edit wins
      }
    }
  }

  paintConstraint(points: { x: number; y: number }[], layer: number,
                  value: number, frame = 0): boolean {
    if (!this.canEdit || layer < 0 || layer >= this.palette.length
        || value < 0 || value > 1 || points.length === 0) {
      return false;
    }
    this.strokeGroups.push(points.map((p) => ({
      x: Math.round(p.x), y: Math.round(p.y), t: frame, layer, value,
    })));
    return true;
  }

  undoStroke(): boolean {
    return this.strokeGroups.pop() !== undefined;
  }

  clearStrokes(): void {
    this.strokeGroups = [];
  }

  get strokes(): Stroke[] {
    return this.strokeGroups.flat();
  }

  get strokeGroupCount(): number {
    return this.strokeGroups.length;
  }

  /** JSON body accepted by the service's constraints endpoint. */
  exportConstraints(): string {
    return JSON.stringify({ strokes: this.strokes });
  }

  beginRedecompose(): void {
    this.running = true;
    this.cb.onJobState?.(true);
  }

  failRedecompose(): void {
    this.running = false;
    this.cb.onJobState?.(false);
  }

  /** Adopt a freshly decomposed layer set: new id, swatches reset. */
  adoptLayers(meta: LayerMeta): void {
    this.layerId = meta.layer_id;
    this.palette = meta.palette.map((c) => [...c] as RGB);
    this.original = meta.palette.map((c) => [...c] as RGB);
    this.clearStrokes();
    this.preview = null;
    this.running = false;
    this.editVersion = 0;
    this.sentVersion = 0;
    this.cb.onJobState?.(false);
  }
}

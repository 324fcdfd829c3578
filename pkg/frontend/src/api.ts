import type { JobInfo, LayerMeta, RGB, Stroke } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export interface DecomposeParams {
  num_layers?: number;
  superpixels?: number;
  seed?: number;
  tau?: number;
  auto_constraints?: boolean;
  palette?: RGB[];
}

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onTick?: (job: JobInfo) => void;
}

export interface RecolorResult {
  blob: Blob;
  composeMs: number | null;
}

/** Thin typed client for the decomposition service. */
export class StudioApi {
  constructor(readonly baseUrl: string,
              private fetchFn: typeof fetch = fetch.bind(globalThis)) {}

  url(path: string): string {
    return this.baseUrl.replace(/\/+$/, "") + path;
  }

  private async checked(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.url(path), init);
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const body = await resp.json();
        detail = body.detail ?? JSON.stringify(body);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return resp;
  }

  async health(): Promise<boolean> {
    try {
      await this.checked("/health");
      return true;
    } catch {
      return false;
    }
  }

  async decompose(files: { name: string; data: Blob }[],
                  params: DecomposeParams = {}): Promise<string> {
    const form = new FormData();
    for (const f of files) {
      form.append("images", f.data, f.name);
    }
    const { palette, ...scalars } = params;
    for (const [key, value] of Object.entries(scalars)) {
      if (value !== undefined) {
        form.append(key, String(value));
      }
    }
    if (palette) {
      form.append("palette", JSON.stringify({ colors: palette }));
    }
    const resp = await this.checked("/decompose", { method: "POST", body: form });
    return (await resp.json()).job_id as string;
  }

  async job(jobId: string): Promise<JobInfo> {
    const resp = await this.checked(`/jobs/${jobId}`);
    return await resp.json() as JobInfo;
  }

  /** Poll a job until it reaches done or error. */
  async pollJob(jobId: string, options: PollOptions = {}): Promise<JobInfo> {
    const interval = options.intervalMs ?? 250;
    const deadline = Date.now() + (options.timeoutMs ?? 600_000);
    for (;;) {
      const info = await this.job(jobId);
      options.onTick?.(info);
      if (info.state === "done" || info.state === "error") {
        return info;
      }
      if (Date.now() > deadline) {
        throw new ApiError(408, `job ${jobId} timed out`);
      }
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }

  async meta(layerId: string): Promise<LayerMeta> {
    const resp = await this.checked(`/layers/${layerId}/meta`);
    return await resp.json() as LayerMeta;
  }

  planeUrl(layerId: string, layer: number, frame = 0, tint = true): string {
    return this.url(`/layers/${layerId}/plane/${layer}.png?frame=${frame}`
      + (tint ? "&tint=1" : ""));
  }

  reconstructionUrl(layerId: string, frame = 0): string {
    return this.url(`/layers/${layerId}/reconstruction.png?frame=${frame}`);
  }

  async reconstruction(layerId: string, frame = 0): Promise<Blob> {
    const resp = await this.checked(`/layers/${layerId}/reconstruction.png?frame=${frame}`);
    return await resp.blob();
  }

  async recolor(layerId: string, colors: RGB[], frame = 0): Promise<RecolorResult> {
    const resp = await this.checked(`/layers/${layerId}/recolor?frame=${frame}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ colors }),
    });
    const header = resp.headers.get("X-Compose-Ms");
    return { blob: await resp.blob(), composeMs: header ? parseFloat(header) : null };
  }

  async submitConstraints(layerId: string, strokes: Stroke[]): Promise<string> {
    const resp = await this.checked(`/layers/${layerId}/constraints`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ strokes }),
    });
    return (await resp.json()).job_id as string;
  }
}

export type RGB = [number, number, number];

export interface Stroke {
  x: number;
  y: number;
  t: number;
  layer: number;
  value: number;
}

export type JobState = "queued" | "running" | "done" | "error";

export interface JobInfo {
  job_id: string;
  state: JobState;
  error: string | null;
  layer_id: string | null;
  report: Record<string, unknown> | null;
}

export interface LayerMeta {
  layer_id: string;
  width: number;
  height: number;
  frames: number;
  num_layers: number;
  palette: RGB[];
}

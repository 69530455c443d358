/**
 * Typed client for the session service HTTP API.
 *
 * Every mutating call carries the version the caller last saw; the server
 * answers 409 when the session moved on. `withFreshVersion` wraps that
 * optimistic-concurrency loop: refetch the session, rebuild the request on
 * top of the new version, try again.
 */

export interface ImageRef {
  image_id: string;
  width: number;
  height: number;
}

export type WireBrush = "pencil" | "hull" | "lasso";

export interface BrushActionDoc {
  brush: WireBrush;
  points: [number, number][];
  stroke_width?: number;
}

export interface RegionDoc {
  region_id: string;
  color: [number, number, number];
  description: string;
  actions: BrushActionDoc[];
}

export interface TileInputsDoc {
  scene_prompt: string;
  seed: number | null;
  strength: number;
  regions: RegionDoc[];
  sketch: string | null;
  base_image: ImageRef | null;
}

export interface TreeNodeDoc {
  node_id: string;
  parent_id: string | null;
  children: string[];
  label: string;
  digest: string;
  created_at: number;
  results: ImageRef[];
  seeds: number[];
}

export interface TileTreeDoc {
  root_id: string;
  selected_id: string;
  nodes: TreeNodeDoc[];
}

export interface TileDoc {
  tile_id: string;
  rect: { x: number; y: number; w: number; h: number };
  grid_slot: [number, number];
  inputs: TileInputsDoc;
  current_image: ImageRef | null;
  tree: TileTreeDoc;
  next_region_ordinal: number;
}

export interface SessionDoc {
  session_id: string;
  version: number;
  canvas_width: number;
  canvas_height: number;
  generation_resolution: number;
  grid_rows: number;
  grid_cols: number;
  grid_gap: number;
  blend_prompt: string;
  tiles: TileDoc[];
  blends: { blend_id: string; images: ImageRef[]; created_at: number }[];
  created_with: Record<string, unknown>;
}

export type JobState = "queued" | "running" | "done" | "failed";

export interface JobDoc {
  job_id: string;
  session_id: string;
  tile_id: string | null;
  purpose: "generate" | "blend";
  state: JobState;
  version: number;
  results: ImageRef[];
  error?: string;
}

export interface RegionOp {
  op: "add" | "update" | "remove";
  region_id?: string;
  description?: string;
  actions?: BrushActionDoc[];
}

export interface InputsPatch {
  tile_id?: string;
  set?: {
    scene_prompt?: string;
    seed?: number;
    clear_seed?: boolean;
    strength?: number;
    blend_prompt?: string;
  };
  regions?: RegionOp[];
  sketch_png_b64?: string;
  clear_sketch?: boolean;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** The session moved on under us; refetch and reapply. */
export class VersionConflict extends ApiError {
  constructor(detail: string) {
    super(409, detail);
    this.name = "VersionConflict";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function unwrap<T>(resp: Response): Promise<T> {
  if (resp.ok) return (await resp.json()) as T;
  let detail = resp.statusText;
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  if (resp.status === 409) throw new VersionConflict(detail);
  throw new ApiError(resp.status, detail);
}

export class WorldsmithClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/+$/, "") + path;
  }

  private get<T>(path: string): Promise<T> {
    return this.fetchImpl(this.url(path)).then((r) => unwrap<T>(r));
  }

  private send<T>(method: string, path: string, body: unknown): Promise<T> {
    return this.fetchImpl(this.url(path), {
      method,
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => unwrap<T>(r));
  }

  createSession(body: {
    session_id?: string;
    canvas_width?: number;
    canvas_height?: number;
    tile_count?: number;
    generation_resolution?: number;
    grid_gap?: number;
  }): Promise<SessionDoc> {
    return this.send("POST", "/api/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionDoc> {
    return this.get(`/api/sessions/${sessionId}`);
  }

  patchInputs(
    sessionId: string,
    expectedVersion: number,
    patch: InputsPatch,
  ): Promise<SessionDoc> {
    return this.send("PATCH", `/api/sessions/${sessionId}/inputs`, {
      expected_version: expectedVersion,
      ...patch,
    });
  }

  generate(
    sessionId: string,
    tileId: string,
    expectedVersion: number,
    opts: { seed?: number; count?: number } = {},
  ): Promise<{ job_id: string; version: number }> {
    return this.send("POST", `/api/sessions/${sessionId}/tiles/${tileId}/generate`, {
      expected_version: expectedVersion,
      ...opts,
    });
  }

  blend(
    sessionId: string,
    expectedVersion: number,
    opts: { seed?: number; count?: number; blur_sigma?: number } = {},
  ): Promise<{ job_id: string; version: number }> {
    return this.send("POST", `/api/sessions/${sessionId}/blend`, {
      expected_version: expectedVersion,
      ...opts,
    });
  }

  pollJob(jobId: string): Promise<JobDoc> {
    return this.get(`/api/jobs/${jobId}`);
  }

  pick(sessionId: string, tileId: string, expectedVersion: number, imageId: string): Promise<SessionDoc> {
    return this.send("POST", `/api/sessions/${sessionId}/tiles/${tileId}/pick`, {
      expected_version: expectedVersion,
      image_id: imageId,
    });
  }

  treeSelect(sessionId: string, tileId: string, expectedVersion: number, nodeId: string): Promise<SessionDoc> {
    return this.send("POST", `/api/sessions/${sessionId}/tiles/${tileId}/tree/select`, {
      expected_version: expectedVersion,
      node_id: nodeId,
    });
  }

  imageUrl(sessionId: string, imageId: string, thumb = false): string {
    const suffix = thumb ? "?thumb=1" : "";
    return this.url(`/api/sessions/${sessionId}/images/${imageId}${suffix}`);
  }

  /**
   * Run a versioned mutation with conflict recovery: `attempt` gets the
   * freshest known session document and must issue the mutation against
   * `doc.version`. On 409 the session is refetched and `attempt` runs
   * again, so it must rebuild its request from the new document rather
   * than reuse stale state.
   */
  async withFreshVersion<T>(
    sessionId: string,
    attempt: (doc: SessionDoc) => Promise<T>,
    maxRetries = 3,
  ): Promise<T> {
    let doc = await this.getSession(sessionId);
    for (let retry = 0; ; retry++) {
      try {
        return await attempt(doc);
      } catch (err) {
        if (!(err instanceof VersionConflict) || retry >= maxRetries) throw err;
        doc = await this.getSession(sessionId);
      }
    }
  }
}

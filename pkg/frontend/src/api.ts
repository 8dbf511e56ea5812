/** Typed client for the gateway's /api/v1 surface. */

export interface ExperimentStatus {
  id: string;
  iteration: number;
  status: "awaiting-annotations" | "training" | "done";
  budget_used: number;
  total_iterations: number;
  class_names: string[];
  scenes: string[];
}

export interface PendingQuery {
  scene: string;
  point: number;
  u: number;
}

export interface PendingQuerySet {
  iteration: number;
  status?: string;
  queries: PendingQuery[];
}

export interface LabelSubmission {
  scene: string;
  point: number;
  class_id: number;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function checked(response: Response): Promise<Response> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return response;
}

export class GatewayClient {
  constructor(private baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl}/api/v1${path}`;
  }

  async listExperiments(): Promise<ExperimentStatus[]> {
    const r = await checked(await fetch(this.url("/experiments")));
    return r.json();
  }

  async status(experiment: string): Promise<ExperimentStatus> {
    const r = await checked(await fetch(this.url(`/experiments/${experiment}/status`)));
    return r.json();
  }

  async queries(experiment: string): Promise<PendingQuerySet> {
    const r = await checked(await fetch(this.url(`/experiments/${experiment}/queries`)));
    return r.json();
  }

  async submitLabels(experiment: string,
                     labels: LabelSubmission[]): Promise<ExperimentStatus> {
    const r = await checked(await fetch(this.url(`/experiments/${experiment}/labels`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(labels),
    }));
    return r.json();
  }

  async cloud(experiment: string, scene: string): Promise<ArrayBuffer> {
    const r = await checked(
      await fetch(this.url(`/experiments/${experiment}/scene/${scene}/cloud`)));
    return r.arrayBuffer();
  }

  async heatmap(experiment: string, scene: string): Promise<ArrayBuffer> {
    const r = await checked(
      await fetch(this.url(`/experiments/${experiment}/scene/${scene}/heatmap`)));
    return r.arrayBuffer();
  }

  async metrics(experiment: string): Promise<string> {
    const r = await checked(await fetch(this.url(`/experiments/${experiment}/metrics`)));
    return r.text();
  }
}

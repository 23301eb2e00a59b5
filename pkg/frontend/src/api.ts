// Thin typed client for the annotation service. Configuration is a single
// base URL; every error becomes an ApiError carrying the service's
// {code, message, detail} body so the app can render busy/empty states as
// banners instead of failures.

import type { BatchTicket, LabelSubmission, ProjectStatus } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public detail: unknown = null,
  ) {
    super(message);
  }
}

export interface CreateProjectOptions {
  corpus_path: string;
  scheme_path: string;
  strategy?: Record<string, unknown>;
  train?: Record<string, unknown>;
  hasher?: Record<string, unknown>;
  test_corpus_path?: string;
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/+$/, "") + path;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.url(path), init);
    } catch (err) {
      throw new ApiError(0, "unreachable", `service unreachable: ${err}`);
    }
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const code = body && body.code ? String(body.code) : "http_error";
      const message = body && body.message ? String(body.message) : response.statusText;
      throw new ApiError(response.status, code, message, body ? body.detail : null);
    }
    return body as T;
  }

  createProject(options: CreateProjectOptions): Promise<{ project_id: string }> {
    return this.request("/projects", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(options),
    });
  }

  getBatch(projectId: string, size: number, annotator: string): Promise<BatchTicket> {
    const query = new URLSearchParams({ size: String(size), annotator });
    return this.request(`/projects/${encodeURIComponent(projectId)}/batch?${query}`);
  }

  submitLabels(projectId: string, payload: LabelSubmission): Promise<{ accepted: number }> {
    return this.request(`/projects/${encodeURIComponent(projectId)}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  retrain(projectId: string): Promise<{ generation: number }> {
    return this.request(`/projects/${encodeURIComponent(projectId)}/retrain`, {
      method: "POST",
    });
  }

  getStatus(projectId: string): Promise<ProjectStatus> {
    return this.request(`/projects/${encodeURIComponent(projectId)}/status`);
  }
}

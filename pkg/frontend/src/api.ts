// Typed client for the control API. The console performs no local mutation of
// engagement state: every change below is a POST that the engine turns into a
// state-machine event.

import type { EngagementEvent, PiiFinding, QueueItem, ThreadDetail, ThreadState } from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export type EditOutcome =
  | { accepted: true; state: ThreadState }
  | { accepted: false; findings: PiiFinding[] };

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let message = `${resp.status}`;
      try {
        const body = await resp.clone().json();
        if (body && typeof body.error === 'string') message = body.error;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, message);
    }
    return resp;
  }

  private async getJson<T>(path: string): Promise<T> {
    return (await this.request(path)).json() as Promise<T>;
  }

  async getThreads(): Promise<ThreadState[]> {
    return (await this.getJson<{ threads: ThreadState[] }>('/threads')).threads;
  }

  async getThread(key: string): Promise<ThreadDetail> {
    return this.getJson<ThreadDetail>(`/threads/${encodeURIComponent(key)}`);
  }

  async getEvents(key: string): Promise<EngagementEvent[]> {
    const data = await this.getJson<{ events: EngagementEvent[] }>(
      `/threads/${encodeURIComponent(key)}/events`,
    );
    return data.events;
  }

  async getQueue(): Promise<QueueItem[]> {
    return (await this.getJson<{ drafts: QueueItem[] }>('/queue')).drafts;
  }

  async approveDraft(draftId: string): Promise<ThreadState> {
    const resp = await this.request(`/drafts/${encodeURIComponent(draftId)}/approve`, {
      method: 'POST',
    });
    return ((await resp.json()) as { state: ThreadState }).state;
  }

  // A 422 is not an exception here: rejected edits carry the findings the
  // operator needs to see inline.
  async editDraft(draftId: string, body: string): Promise<EditOutcome> {
    const resp = await this.fetchFn(`${this.base}/drafts/${encodeURIComponent(draftId)}/edit`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ body }),
    });
    if (resp.status === 422) {
      const data = (await resp.json()) as { findings: PiiFinding[] };
      return { accepted: false, findings: data.findings };
    }
    if (!resp.ok) throw new ApiError(resp.status, `edit failed: ${resp.status}`);
    const data = (await resp.json()) as { state: ThreadState };
    return { accepted: true, state: data.state };
  }

  async rejectDraft(draftId: string): Promise<ThreadState> {
    const resp = await this.request(`/drafts/${encodeURIComponent(draftId)}/reject`, {
      method: 'POST',
    });
    return ((await resp.json()) as { state: ThreadState }).state;
  }

  async stopThread(key: string): Promise<ThreadState> {
    const resp = await this.request(`/threads/${encodeURIComponent(key)}/stop`, {
      method: 'POST',
    });
    return ((await resp.json()) as { state: ThreadState }).state;
  }

  async getReportCsv(): Promise<string> {
    return (await this.request('/report')).text();
  }
}

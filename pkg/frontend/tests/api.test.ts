import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';

function fakeFetch(routes: Record<string, { status: number; body: unknown }>) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const route = routes[url];
    if (!route) return new Response('{"error": "not found"}', { status: 404 });
    return new Response(JSON.stringify(route.body), {
      status: route.status,
      headers: { 'Content-Type': 'application/json' },
    });
  };
  return { fetchFn, calls };
}

describe('ApiClient', () => {
  it('lists threads', async () => {
    const { fetchFn } = fakeFetch({
      '/threads': { status: 200, body: { threads: [{ thread_key: 'a@x.com' }] } },
    });
    const client = new ApiClient('', fetchFn);
    const threads = await client.getThreads();
    expect(threads).toHaveLength(1);
    expect(threads[0]!.thread_key).toBe('a@x.com');
  });

  it('url-encodes thread keys', async () => {
    const { fetchFn, calls } = fakeFetch({
      '/threads/kar%40example.com': { status: 200, body: { state: {}, stats: null } },
    });
    await new ApiClient('', fetchFn).getThread('kar@example.com');
    expect(calls[0]!.url).toBe('/threads/kar%40example.com');
  });

  it('approve posts and unwraps the state', async () => {
    const { fetchFn, calls } = fakeFetch({
      '/drafts/d1/approve': { status: 200, body: { state: { status: 'Scheduled' } } },
    });
    const state = await new ApiClient('', fetchFn).approveDraft('d1');
    expect(state.status).toBe('Scheduled');
    expect(calls[0]!.init?.method).toBe('POST');
  });

  it('edit surfaces 422 findings instead of throwing', async () => {
    const { fetchFn } = fakeFetch({
      '/drafts/d1/edit': {
        status: 422,
        body: { error: 'edit reintroduces PII', findings: [{ kind: 'PhoneNumber', start: 0, end: 4, excerpt: '5551' }] },
      },
    });
    const outcome = await new ApiClient('', fetchFn).editDraft('d1', 'call 5551');
    expect(outcome.accepted).toBe(false);
    if (!outcome.accepted) {
      expect(outcome.findings[0]!.kind).toBe('PhoneNumber');
    }
  });

  it('non-2xx responses raise ApiError with the server message', async () => {
    const { fetchFn } = fakeFetch({
      '/threads/gone%40x.com/stop': { status: 409, body: { error: 'already terminated' } },
    });
    await expect(new ApiClient('', fetchFn).stopThread('gone@x.com')).rejects.toThrowError(
      ApiError,
    );
  });
});

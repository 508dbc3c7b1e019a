// DOM wiring: poll the API, render the queue and thread board, surface API
// errors as non-blocking notices. Stale views refresh on window focus.

import { ApiClient, ApiError } from './api.js';
import { extractTimeline } from './timeline.js';
import { renderFindings, renderQueueItem, renderThreadCard, renderTimelineSvg } from './views.js';

const REFRESH_MS = 4000;

export function startApp(root: HTMLElement, api: ApiClient): () => void {
  root.innerHTML = `
    <header>
      <h1>scambait console</h1>
      <span id="notice" class="notice"></span>
    </header>
    <main>
      <section>
        <h2>Review queue</h2>
        <div id="queue"></div>
      </section>
      <section>
        <h2>Threads</h2>
        <div id="threads"></div>
      </section>
      <section id="timeline-section" hidden>
        <h2 id="timeline-title"></h2>
        <div id="timeline"></div>
      </section>
    </main>`;

  const queueEl = root.querySelector<HTMLElement>('#queue')!;
  const threadsEl = root.querySelector<HTMLElement>('#threads')!;
  const noticeEl = root.querySelector<HTMLElement>('#notice')!;

  function notify(message: string): void {
    noticeEl.textContent = message;
    if (message) setTimeout(() => (noticeEl.textContent = ''), 6000);
  }

  async function guard<T>(work: () => Promise<T>): Promise<T | undefined> {
    try {
      return await work();
    } catch (err) {
      notify(err instanceof ApiError ? `API error ${err.status}: ${err.message}` : String(err));
      return undefined;
    }
  }

  async function refresh(): Promise<void> {
    const drafts = await guard(() => api.getQueue());
    if (drafts) {
      queueEl.innerHTML = drafts.length
        ? drafts.map(renderQueueItem).join('')
        : '<p class="empty">Nothing awaiting approval.</p>';
    }
    const threads = await guard(() => api.getThreads());
    if (threads) {
      const cards = await Promise.all(
        threads.map(async (state) => {
          const detail = await guard(() => api.getThread(state.thread_key));
          return renderThreadCard(state, detail?.stats ?? null);
        }),
      );
      threadsEl.innerHTML = cards.length ? cards.join('') : '<p class="empty">No threads yet.</p>';
    }
  }

  async function showTimeline(key: string): Promise<void> {
    const events = await guard(() => api.getEvents(key));
    if (!events) return;
    const section = root.querySelector<HTMLElement>('#timeline-section')!;
    section.hidden = false;
    root.querySelector('#timeline-title')!.textContent = key;
    root.querySelector('#timeline')!.innerHTML = renderTimelineSvg(extractTimeline(events));
  }

  async function onClick(event: Event): Promise<void> {
    const button = event.target as HTMLElement;
    const card = button.closest<HTMLElement>('.card');
    if (!card) return;
    const draftId = card.dataset.draft;
    const threadKey = card.dataset.thread;

    if (button.classList.contains('approve') && draftId) {
      const state = await guard(() => api.approveDraft(draftId));
      if (state) notify(`${state.thread_key} → ${state.status}`);
      await refresh();
    } else if (button.classList.contains('save-edit') && draftId) {
      const body = card.querySelector<HTMLTextAreaElement>('.draft-body')!.value;
      const outcome = await guard(() => api.editDraft(draftId, body));
      if (outcome && !outcome.accepted) {
        card.querySelector<HTMLElement>('.finding-slot')!.innerHTML = renderFindings(
          outcome.findings,
        );
        notify('Edit rejected: personal details detected');
      } else if (outcome) {
        notify('Edit saved');
        await refresh();
      }
    } else if (button.classList.contains('reject') && draftId) {
      await guard(() => api.rejectDraft(draftId));
      await refresh();
    } else if (button.classList.contains('stop') && threadKey) {
      await guard(() => api.stopThread(threadKey));
      await refresh();
    } else if (button.classList.contains('open') && threadKey) {
      await showTimeline(threadKey);
    }
  }

  root.addEventListener('click', onClick);
  const timer = setInterval(refresh, REFRESH_MS);
  const onFocus = () => void refresh();
  window.addEventListener('focus', onFocus);
  void refresh();

  return () => {
    clearInterval(timer);
    window.removeEventListener('focus', onFocus);
    root.removeEventListener('click', onClick);
  };
}

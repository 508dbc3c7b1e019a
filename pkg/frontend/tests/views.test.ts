import { describe, expect, it } from 'vitest';

import { extractTimeline } from '../src/timeline.js';
import {
  escapeHtml,
  fmtAge,
  renderFindings,
  renderQueueItem,
  renderThreadCard,
  renderTimelineSvg,
} from '../src/views.js';
import type { QueueItem, ThreadState, ThreadStats } from '../src/types.js';

const STATE: ThreadState = {
  thread_key: 'kar@example.com',
  status: 'AwaitingApproval',
  termination_reason: null,
  send_at: null,
  awaiting_since: null,
  inbound_count: 1,
  outbound_count: 0,
  first_reply_at: null,
  last_event_at: '2022-11-12T00:00:00+00:00',
  last_seq: 3,
  retry_count: 0,
  last_dsn: null,
};

const ITEM: QueueItem = {
  draft_id: 'abc123',
  thread_key: 'kar@example.com',
  scammer_text: 'Send to me your number',
  body: 'Dear friend, thank you. What next?',
  attempts: 2,
  findings_history: [[{ kind: 'PhoneNumber', start: 0, end: 5, excerpt: '12345' }], []],
  age_seconds: 120,
};

describe('renderQueueItem', () => {
  it('shows the draft, attempts and scammer text', () => {
    const html = renderQueueItem(ITEM);
    expect(html).toContain('data-draft="abc123"');
    expect(html).toContain('attempt 2');
    expect(html).toContain('Send to me your number');
    expect(html).toContain('Dear friend, thank you. What next?');
  });

  it('escapes hostile markup from the scammer', () => {
    const hostile = { ...ITEM, scammer_text: '<script>alert(1)</script>' };
    const html = renderQueueItem(hostile);
    expect(html).not.toContain('<script>alert');
    expect(html).toContain('&lt;script&gt;');
  });

  it('renders attention items without draft controls', () => {
    const html = renderQueueItem({
      ...ITEM,
      draft_id: '',
      body: null,
      attention: 'guardrails exhausted',
    });
    expect(html).toContain('needs attention');
    expect(html).not.toContain('class="approve"');
  });
});

describe('renderFindings', () => {
  it('renders the scan report verbatim', () => {
    const html = renderFindings([
      { kind: 'PhoneNumber', start: 11, end: 26, excerpt: '+1 555 123 4567' },
    ]);
    expect(html).toContain('PhoneNumber');
    expect(html).toContain('+1 555 123 4567');
  });

  it('is empty for a clean scan', () => {
    expect(renderFindings([])).toBe('');
  });
});

describe('renderThreadCard', () => {
  it('shows status badge and counters', () => {
    const stats: ThreadStats = {
      thread_key: 'kar@example.com',
      total_mails: 14,
      scammer: { message_count: 7, avg_chars: 1382, avg_sentences: 12 },
      ours: { message_count: 7, avg_chars: 473, avg_sentences: 5 },
      engagement_days: 27.0,
      first_reply_delay_s: 34560,
      termination: null,
      dsn: null,
      first_contact_at: '2022-12-03T00:00:00+00:00',
    };
    const html = renderThreadCard(STATE, stats);
    expect(html).toContain('AwaitingApproval');
    expect(html).toContain('14 mails');
    expect(html).toContain('27.0d');
  });

  it('disables stop for terminated threads', () => {
    const html = renderThreadCard({ ...STATE, status: 'Terminated' }, null);
    expect(html).toContain('disabled');
  });

  it('shows the DSN badge on failed threads', () => {
    const stats = {
      thread_key: 'kar@example.com',
      total_mails: 2,
      scammer: { message_count: 1, avg_chars: 331, avg_sentences: 2 },
      ours: { message_count: 1, avg_chars: 333, avg_sentences: 3 },
      engagement_days: 0,
      first_reply_delay_s: 86400,
      termination: 'DeliveryFailedPermanent',
      dsn: '5.2.1',
      first_contact_at: null,
    } satisfies ThreadStats;
    expect(renderThreadCard(STATE, stats)).toContain('DSN 5.2.1');
  });
});

describe('renderTimelineSvg', () => {
  it('draws one marker per mail with direction classes', () => {
    const timeline = extractTimeline([
      { seq: 1, at: '2022-11-12T00:00:00+00:00', kind: 'InboundReceived', payload: {} },
      { seq: 2, at: '2022-11-13T00:00:00+00:00', kind: 'Sent', payload: { retry: false } },
    ]);
    const svg = renderTimelineSvg(timeline);
    expect(svg.match(/<circle/g)).toHaveLength(2);
    expect(svg).toContain('mark-in');
    expect(svg).toContain('mark-out');
  });
});

describe('escapeHtml / fmtAge', () => {
  it('escapes the essentials', () => {
    expect(escapeHtml('<a href="x">&</a>')).toBe('&lt;a href=&quot;x&quot;&gt;&amp;&lt;/a&gt;');
  });

  it('picks sensible units', () => {
    expect(fmtAge(30)).toBe('30s');
    expect(fmtAge(600)).toBe('10m');
    expect(fmtAge(7200)).toBe('2h');
    expect(fmtAge(200000)).toBe('2d');
  });
});

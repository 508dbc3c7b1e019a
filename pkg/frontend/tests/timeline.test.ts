import { describe, expect, it } from 'vitest';

import { extractTimeline, gapsBetweenMessages, scalePositions } from '../src/timeline.js';
import type { EngagementEvent } from '../src/types.js';

function ev(seq: number, at: string, kind: string, payload: Record<string, unknown> = {}): EngagementEvent {
  return { seq, at, kind, payload };
}

const DAY0 = '2022-11-12T00:00:00+00:00';

describe('extractTimeline', () => {
  it('is empty without an inbound anchor', () => {
    const timeline = extractTimeline([ev(1, DAY0, 'TriageDecided')]);
    expect(timeline.points).toEqual([]);
    expect(timeline.spanDays).toBe(0);
  });

  it('anchors day offsets at the first inbound', () => {
    const timeline = extractTimeline([
      ev(1, DAY0, 'InboundReceived'),
      ev(2, DAY0, 'TriageDecided'),
      ev(3, DAY0, 'DraftReady'),
      ev(4, '2022-11-13T12:00:00+00:00', 'TimerFired'),
      ev(5, '2022-11-13T12:00:00+00:00', 'Sent', { retry: false }),
    ]);
    expect(timeline.points).toEqual([
      { dayOffset: 0, direction: 'Inbound' },
      { dayOffset: 1.5, direction: 'Outbound' },
    ]);
    expect(timeline.spanDays).toBe(1.5);
  });

  it('skips retransmissions and notes terminations', () => {
    const timeline = extractTimeline([
      ev(1, DAY0, 'InboundReceived'),
      ev(2, '2022-11-13T00:00:00+00:00', 'Sent', { retry: false }),
      ev(3, '2022-11-14T00:00:00+00:00', 'Sent', { retry: true }),
      ev(4, '2022-11-15T00:00:00+00:00', 'TerminatedEvent', { reason: 'ManualStop' }),
    ]);
    expect(timeline.points).toHaveLength(2);
    expect(timeline.termination).toEqual({ dayOffset: 3, reason: 'ManualStop' });
  });

  it('exposes pause gaps between consecutive mails', () => {
    const timeline = extractTimeline([
      ev(1, DAY0, 'InboundReceived'),
      ev(2, '2022-11-13T00:00:00+00:00', 'Sent', {}),
      ev(3, '2022-11-21T00:00:00+00:00', 'InboundReceived'),
      ev(4, '2022-12-07T00:00:00+00:00', 'InboundReceived'),
    ]);
    expect(gapsBetweenMessages(timeline)).toEqual([1, 8, 16]);
  });
});

describe('scalePositions', () => {
  it('maps offsets into the padded pixel range', () => {
    const timeline = extractTimeline([
      ev(1, DAY0, 'InboundReceived'),
      ev(2, '2022-11-22T00:00:00+00:00', 'Sent', {}),
    ]);
    const xs = scalePositions(timeline, 640, 12);
    expect(xs).toHaveLength(2);
    expect(xs[0]).toBe(12);
    expect(xs[1]).toBe(628);
  });

  it('handles a single-point thread without dividing by zero', () => {
    const timeline = extractTimeline([ev(1, DAY0, 'InboundReceived')]);
    const xs = scalePositions(timeline, 640);
    expect(xs).toEqual([12]);
  });
});

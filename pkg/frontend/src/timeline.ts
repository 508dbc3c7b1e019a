// Timeline rendering is a pure function of the thread's event log: day
// offsets from the first inbound, one marker per mail, plus the terminal
// event when the thread is over.

import type { EngagementEvent } from './types.js';

export interface TimelinePoint {
  dayOffset: number;
  direction: 'Inbound' | 'Outbound';
}

export interface TimelineTermination {
  dayOffset: number;
  reason: string;
}

export interface ThreadTimeline {
  points: TimelinePoint[];
  termination: TimelineTermination | null;
  spanDays: number;
}

const DAY_MS = 86_400_000;

function isRetry(event: EngagementEvent): boolean {
  return Boolean(event.payload && (event.payload as { retry?: boolean }).retry);
}

export function extractTimeline(events: EngagementEvent[]): ThreadTimeline {
  const anchorEvent = events.find((e) => e.kind === 'InboundReceived');
  if (!anchorEvent) {
    return { points: [], termination: null, spanDays: 0 };
  }
  const anchor = Date.parse(anchorEvent.at);
  const points: TimelinePoint[] = [];
  let termination: TimelineTermination | null = null;

  for (const event of events) {
    const offset = (Date.parse(event.at) - anchor) / DAY_MS;
    if (event.kind === 'InboundReceived') {
      points.push({ dayOffset: offset, direction: 'Inbound' });
    } else if (event.kind === 'Sent' && !isRetry(event)) {
      points.push({ dayOffset: offset, direction: 'Outbound' });
    } else if (event.kind === 'TerminatedEvent' && termination === null) {
      const reason = (event.payload as { reason?: string }).reason ?? 'Terminated';
      termination = { dayOffset: offset, reason };
    }
  }
  // Terminations recorded as transitions (DSN, silence, window) surface via
  // the last event when no explicit TerminatedEvent exists.
  const spanSource = points.length ? points : [{ dayOffset: 0, direction: 'Inbound' as const }];
  const spanDays = Math.max(
    ...spanSource.map((p) => p.dayOffset),
    termination ? termination.dayOffset : 0,
  );
  return { points, termination, spanDays };
}

// Map day offsets onto [padding, width - padding] pixel positions.
export function scalePositions(
  timeline: ThreadTimeline,
  width: number,
  padding = 12,
): number[] {
  const span = timeline.spanDays > 0 ? timeline.spanDays : 1;
  const usable = Math.max(1, width - 2 * padding);
  return timeline.points.map((p) => padding + (p.dayOffset / span) * usable);
}

export function gapsBetweenMessages(timeline: ThreadTimeline): number[] {
  const gaps: number[] = [];
  for (let i = 1; i < timeline.points.length; i++) {
    gaps.push(timeline.points[i]!.dayOffset - timeline.points[i - 1]!.dayOffset);
  }
  return gaps;
}

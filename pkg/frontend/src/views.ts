// Pure HTML/SVG builders. No fetch, no DOM reads: everything here is a
// function of its arguments so the rendering is unit-testable.

import type { PiiFinding, QueueItem, ThreadState, ThreadStats } from './types.js';
import { ThreadTimeline, scalePositions } from './timeline.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function fmtAge(seconds: number): string {
  if (seconds < 90) return `${Math.round(seconds)}s`;
  if (seconds < 5400) return `${Math.round(seconds / 60)}m`;
  if (seconds < 129600) return `${Math.round(seconds / 3600)}h`;
  return `${Math.round(seconds / 86400)}d`;
}

export function fmtDays(days: number): string {
  return `${days.toFixed(1)}d`;
}

export function statusClass(status: ThreadState['status']): string {
  return `status-${status.toLowerCase()}`;
}

export function renderFindings(findings: PiiFinding[]): string {
  if (!findings.length) return '';
  const rows = findings
    .map(
      (f) =>
        `<li class="finding"><span class="finding-kind">${escapeHtml(f.kind)}</span>` +
        ` <code>${escapeHtml(f.excerpt)}</code></li>`,
    )
    .join('');
  return `<ul class="findings">${rows}</ul>`;
}

export function renderQueueItem(item: QueueItem): string {
  if (!item.draft_id) {
    return (
      `<div class="card attention" data-thread="${escapeHtml(item.thread_key)}">` +
      `<div class="card-head"><strong>${escapeHtml(item.thread_key)}</strong>` +
      `<span class="badge badge-warn">needs attention</span></div>` +
      `<p>${escapeHtml(item.attention ?? 'generation failed')}</p></div>`
    );
  }
  const lastFindings = item.findings_history.length
    ? item.findings_history[item.findings_history.length - 1]!
    : [];
  return (
    `<div class="card draft" data-draft="${escapeHtml(item.draft_id)}" data-thread="${escapeHtml(item.thread_key)}">` +
    `<div class="card-head"><strong>${escapeHtml(item.thread_key)}</strong>` +
    `<span class="meta">attempt ${item.attempts} · waiting ${fmtAge(item.age_seconds)}</span></div>` +
    `<details><summary>scammer wrote</summary><pre class="mail">${escapeHtml(item.scammer_text)}</pre></details>` +
    `<textarea class="draft-body" rows="8">${escapeHtml(item.body ?? '')}</textarea>` +
    `<div class="finding-slot"></div>` +
    renderFindings(lastFindings) +
    `<div class="actions">` +
    `<button class="approve">Approve</button>` +
    `<button class="save-edit">Save edit</button>` +
    `<button class="reject">Regenerate</button>` +
    `</div></div>`
  );
}

export function renderThreadCard(state: ThreadState, stats: ThreadStats | null): string {
  const days = stats ? fmtDays(stats.engagement_days) : '-';
  const mails = stats ? `${stats.total_mails}` : '0';
  const dsn = stats?.dsn ? `<span class="badge badge-fail">DSN ${escapeHtml(stats.dsn)}</span>` : '';
  return (
    `<div class="card thread" data-thread="${escapeHtml(state.thread_key)}">` +
    `<div class="card-head"><strong>${escapeHtml(state.thread_key)}</strong>` +
    `<span class="badge ${statusClass(state.status)}">${escapeHtml(state.status)}</span>${dsn}</div>` +
    `<div class="meta">${mails} mails · in ${state.inbound_count} / out ${state.outbound_count} · engaged ${days}</div>` +
    `<div class="actions"><button class="open">Timeline</button>` +
    `<button class="stop" ${state.status === 'Terminated' ? 'disabled' : ''}>Stop</button></div>` +
    `</div>`
  );
}

export function renderTimelineSvg(timeline: ThreadTimeline, width = 640, height = 64): string {
  const xs = scalePositions(timeline, width);
  const mid = height / 2;
  let marks = `<line x1="0" y1="${mid}" x2="${width}" y2="${mid}" class="axis"/>`;
  timeline.points.forEach((p, i) => {
    const x = xs[i]!;
    const y = p.direction === 'Inbound' ? mid - 12 : mid + 12;
    const cls = p.direction === 'Inbound' ? 'mark-in' : 'mark-out';
    marks += `<circle cx="${x.toFixed(1)}" cy="${y}" r="5" class="${cls}"><title>${p.direction} at day ${p.dayOffset.toFixed(2)}</title></circle>`;
    marks += `<line x1="${x.toFixed(1)}" y1="${mid}" x2="${x.toFixed(1)}" y2="${y}" class="stem"/>`;
  });
  if (timeline.termination) {
    const span = timeline.spanDays > 0 ? timeline.spanDays : 1;
    const x = 12 + (timeline.termination.dayOffset / span) * Math.max(1, width - 24);
    marks += `<text x="${Math.min(x, width - 60).toFixed(1)}" y="12" class="term">${escapeHtml(timeline.termination.reason)}</text>`;
  }
  return `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}" role="img">${marks}</svg>`;
}

/** Pure HTML builders. Observation text is rendered verbatim inside <pre>
 * blocks, so everything passes through escapeHtml first. */

import type { EvaluationReport, ProblemSummary, TranscriptRecord } from './protocol.js';
import { formatSimMs } from './timers.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

export function problemsHtml(problems: ProblemSummary[]): string {
  if (problems.length === 0) return '<p class="empty">no problems cached</p>';
  const rows = problems
    .map(
      (p) => `
  <tr>
    <td><code>${escapeHtml(p.problem_id)}</code></td>
    <td>${escapeHtml(p.task)}</td>
    <td>${escapeHtml(p.app)}</td>
    <td>${escapeHtml(p.focus)}</td>
    <td><button class="start" data-problem="${escapeHtml(p.problem_id)}">start</button></td>
  </tr>`,
    )
    .join('');
  return `<table>
  <thead><tr><th>problem</th><th>task</th><th>app</th><th>focus</th><th></th></tr></thead>
  <tbody>${rows}</tbody>
</table>`;
}

export function recordHtml(record: TranscriptRecord, index: number): string {
  const cls = record.observation.error ? 'record error' : 'record';
  const args = escapeHtml(JSON.stringify(record.action.args));
  const thought = record.thought.trim().length
    ? `<div class="thought">${escapeHtml(record.thought)}</div>`
    : '';
  return `<article class="${cls}">
  <header>#${index + 1} <code>${escapeHtml(record.action.api)}</code> ${args}
    <span class="sim">t=${record.sim_time_ms} ms</span></header>
  ${thought}
  <pre>${escapeHtml(record.observation.text)}</pre>
</article>`;
}

export function transcriptHtml(records: TranscriptRecord[]): string {
  if (records.length === 0) return '<p class="empty">no actions yet</p>';
  return records.map(recordHtml).join('\n');
}

export function panelHtml(title: string, record: TranscriptRecord | null): string {
  const body = record
    ? `<pre>${escapeHtml(record.observation.text)}</pre>
  <footer>as of t=${record.sim_time_ms} ms</footer>`
    : '<p class="empty">no data fetched yet</p>';
  return `<h3>${escapeHtml(title)}</h3>\n${body}`;
}

export function reportHtml(report: EvaluationReport): string {
  const verdict = report.success ? 'success' : 'failure';
  const rows: Array<[string, string]> = [
    ['task', report.task],
    ['success', String(report.success)],
    ['ttd', formatSimMs(report.ttd_ms)],
    ['ttm', formatSimMs(report.ttm_ms)],
    ['interactions', String(report.interactions)],
    ['cost proxy', `${report.cost_proxy_chars} chars`],
    ['sim time', formatSimMs(report.sim_time_ms)],
  ];
  const table = rows
    .map(([k, v]) => `<tr><th>${escapeHtml(k)}</th><td>${escapeHtml(v)}</td></tr>`)
    .join('');
  return `<div class="verdict ${verdict}">${verdict}</div>
<table>${table}</table>
<details><summary>judge detail</summary><pre>${escapeHtml(
    JSON.stringify(report.detail, null, 2),
  )}</pre></details>
<details><summary>ground truth</summary><pre>${escapeHtml(
    JSON.stringify(report.ground_truth, null, 2),
  )}</pre></details>`;
}

export function bannerHtml(message: string): string {
  return `<div class="banner">${escapeHtml(message)}</div>`;
}

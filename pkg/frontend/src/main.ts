/** Console wiring: problem picker, composer, transcript feed, telemetry
 * panels, timers, and the report view. All state shown here is rebuilt from
 * wire responses; the transcript endpoint is polled once per second so a
 * refresh (or a second client on the same session) stays consistent. */

import { buildServiceAction, buildShellAction, buildSolution } from './forms.js';
import { Client, ProtocolFailure } from './protocol.js';
import type { EvaluationReport, TranscriptRecord } from './protocol.js';
import {
  bannerHtml,
  panelHtml,
  problemsHtml,
  reportHtml,
  transcriptHtml,
} from './render.js';
import {
  actionsUsed,
  budgetFromBriefing,
  lastSimTimeMs,
  latestObservation,
  parseTranscript,
  submitRecord,
} from './transcript.js';
import { elapsedTtdMs, elapsedTtmMs, formatElapsed, newAnchors } from './timers.js';
import type { TimerAnchors } from './timers.js';

const POLL_INTERVAL_MS = 1000;
const TICK_INTERVAL_MS = 100;

interface ConsoleSession {
  sessionId: string;
  task: string;
  budget: number | null;
  records: TranscriptRecord[];
  anchors: TimerAnchors;
  report: EvaluationReport | null;
}

const client = new Client('');
let session: ConsoleSession | null = null;
let pollTimer: number | null = null;

function $(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node;
}

function input(id: string): HTMLInputElement {
  return $(id) as HTMLInputElement;
}

function showBanner(message: string): void {
  const banner = $('banner');
  banner.innerHTML = bannerHtml(message);
  banner.hidden = false;
}

function clearBanner(): void {
  const banner = $('banner');
  banner.hidden = true;
  banner.innerHTML = '';
}

function reportFailure(failure: unknown): void {
  if (failure instanceof ProtocolFailure) {
    showBanner(`protocol error (${failure.status}): ${failure.message}`);
  } else {
    showBanner(`request failed: ${String(failure)}`);
  }
}

// --- problem picker ---

async function loadProblems(): Promise<void> {
  try {
    const body = await client.listProblems();
    $('problem-list').innerHTML = problemsHtml(body.problems);
  } catch (failure) {
    reportFailure(failure);
  }
}

function onPickerClick(event: Event): void {
  const target = event.target as HTMLElement;
  const problemId = target.dataset.problem;
  if (target.matches('button.start') && problemId) {
    void startSession(problemId);
  }
}

// --- session lifecycle ---

async function startSession(problemId: string): Promise<void> {
  clearBanner();
  try {
    const started = await client.startSession(problemId);
    session = {
      sessionId: started.session_id,
      task: started.task,
      budget: started.budget,
      records: [],
      anchors: newAnchors(Date.now()),
      report: null,
    };
    window.location.hash = started.session_id;
    enterSessionView(started.briefing, started.problem_id);
  } catch (failure) {
    reportFailure(failure);
  }
}

async function restoreSession(sessionId: string): Promise<void> {
  try {
    const text = await client.transcript(sessionId);
    const parsed = parseTranscript(text);
    if (parsed.header === null) {
      showBanner(`session ${sessionId} has no transcript header`);
      return;
    }
    session = {
      sessionId,
      task: parsed.header.task,
      budget: budgetFromBriefing(parsed.header.briefing),
      records: parsed.records,
      anchors: newAnchors(Date.now()),
      report: null,
    };
    enterSessionView(parsed.header.briefing, parsed.header.problem_id);
    renderSession();
    if (submitRecord(parsed.records) !== null) {
      await fetchReport();
    }
  } catch (failure) {
    reportFailure(failure);
  }
}

function enterSessionView(briefing: string, problemId: string): void {
  if (session === null) return;
  $('picker').hidden = true;
  $('session').hidden = false;
  $('briefing').textContent = briefing;
  $('session-meta').textContent =
    `${session.sessionId} · ${problemId} · task: ${session.task}`;
  $('budget').textContent = session.budget === null ? '–' : String(session.budget);
  configureSolutionForm(session.task);
  onApiChange();
  if (pollTimer === null) {
    pollTimer = window.setInterval(() => void refreshTranscript(), POLL_INTERVAL_MS);
  }
  window.setInterval(tickTimers, TICK_INTERVAL_MS);
}

async function refreshTranscript(): Promise<void> {
  if (session === null) return;
  try {
    const text = await client.transcript(session.sessionId);
    session.records = parseTranscript(text).records;
    renderSession();
    if (submitRecord(session.records) !== null && session.report === null) {
      await fetchReport();
    }
  } catch (failure) {
    reportFailure(failure);
  }
}

function renderSession(): void {
  if (session === null) return;
  $('feed').innerHTML = transcriptHtml(session.records);
  $('log-panel').innerHTML = panelHtml('logs', latestObservation(session.records, 'get_logs'));
  $('metric-panel').innerHTML = panelHtml(
    'metrics',
    latestObservation(session.records, 'get_metrics'),
  );
  $('used').textContent = String(actionsUsed(session.records));
  $('sim').textContent = `${lastSimTimeMs(session.records)} ms`;
}

// --- timers ---

function tickTimers(): void {
  if (session === null) return;
  const now = Date.now();
  $('ttd').textContent = formatElapsed(elapsedTtdMs(session.anchors, now));
  $('ttm').textContent = formatElapsed(elapsedTtmMs(session.anchors, now));
}

function freezeTimers(success: boolean): void {
  if (session === null) return;
  const now = Date.now();
  if (session.anchors.finishedWallMs === null) session.anchors.finishedWallMs = now;
  const detectionTask = session.task === 'detect' || session.task === 'localize';
  if (detectionTask && success && session.anchors.detectionWallMs === null) {
    session.anchors.detectionWallMs = now;
  }
}

// --- composer ---

function onApiChange(): void {
  const api = (input('api') as unknown as HTMLSelectElement).value;
  $('service-field').hidden = !['get_logs', 'get_metrics', 'get_traces'].includes(api);
  $('shell-field').hidden = api !== 'exec_shell';
  $('submit-fields').hidden = api !== 'submit';
  $('form-error').textContent = '';
}

function configureSolutionForm(task: string): void {
  $('anomalous-row').hidden = task !== 'detect';
  $('services-row').hidden = task === 'mitigate';
  $('mitigated-row').hidden = task !== 'mitigate';
}

function readAnomalous(): boolean | undefined {
  const checked = document.querySelector<HTMLInputElement>('input[name="anomalous"]:checked');
  if (checked === null) return undefined;
  return checked.value === 'yes';
}

async function onSend(): Promise<void> {
  if (session === null) return;
  const errorSlot = $('form-error');
  errorSlot.textContent = '';
  clearBanner();
  const api = (input('api') as unknown as HTMLSelectElement).value;
  const thought = input('thought').value;

  if (api === 'submit') {
    const built = buildSolution(session.task, {
      anomalous: readAnomalous(),
      services: input('services').value,
      mitigated: input('mitigated').checked,
    });
    if (!built.ok) {
      errorSlot.textContent = built.message;
      return;
    }
    try {
      const report = await client.submit(session.sessionId, built.solution, thought);
      freezeTimers(report.success);
      session.report = report;
      showReport(report);
      await refreshTranscript();
    } catch (failure) {
      reportFailure(failure);
    }
    return;
  }

  const built =
    api === 'exec_shell'
      ? buildShellAction(input('command').value)
      : buildServiceAction(api, input('service').value);
  if (!built.ok) {
    errorSlot.textContent = built.message;
    return;
  }
  try {
    await client.act(session.sessionId, built.action.api, built.action.args, thought);
    input('thought').value = '';
    await refreshTranscript();
  } catch (failure) {
    reportFailure(failure);
  }
}

// --- report view ---

async function fetchReport(): Promise<void> {
  if (session === null) return;
  try {
    const report = await client.report(session.sessionId);
    freezeTimers(report.success);
    session.report = report;
    showReport(report);
  } catch (failure) {
    if (failure instanceof ProtocolFailure && failure.status === 409) return;
    reportFailure(failure);
  }
}

function showReport(report: EvaluationReport): void {
  $('report-view').hidden = false;
  $('report-body').innerHTML = reportHtml(report);
}

// --- boot ---

function boot(): void {
  $('problem-list').addEventListener('click', onPickerClick);
  $('api').addEventListener('change', onApiChange);
  $('send').addEventListener('click', () => void onSend());
  $('reload-report').addEventListener('click', () => void fetchReport());
  const hash = window.location.hash.replace(/^#/, '');
  if (hash.startsWith('s-')) {
    void restoreSession(hash);
  }
  void loadProblems();
}

boot();

/** Elapsed-time math for the TTD/TTM wall-clock timers. The console anchors
 * on session start; the TTD timer freezes when a detection is submitted and
 * the TTM timer freezes when the session closes. */

export interface TimerAnchors {
  sessionStartWallMs: number;
  detectionWallMs: number | null;
  finishedWallMs: number | null;
}

export function newAnchors(nowMs: number): TimerAnchors {
  return { sessionStartWallMs: nowMs, detectionWallMs: null, finishedWallMs: null };
}

export function elapsedTtdMs(anchors: TimerAnchors, nowMs: number): number {
  const end = anchors.detectionWallMs ?? anchors.finishedWallMs ?? nowMs;
  return Math.max(0, end - anchors.sessionStartWallMs);
}

export function elapsedTtmMs(anchors: TimerAnchors, nowMs: number): number {
  const end = anchors.finishedWallMs ?? nowMs;
  return Math.max(0, end - anchors.sessionStartWallMs);
}

/** mm:ss.d, stable width for a ticking display. */
export function formatElapsed(ms: number): string {
  const totalTenths = Math.floor(ms / 100);
  const tenths = totalTenths % 10;
  const totalSeconds = Math.floor(totalTenths / 10);
  const seconds = totalSeconds % 60;
  const minutes = Math.floor(totalSeconds / 60);
  const pad = (value: number) => String(value).padStart(2, '0');
  return `${pad(minutes)}:${pad(seconds)}.${tenths}`;
}

/** Simulated milliseconds out of the report, rendered as given. */
export function formatSimMs(value: number | null): string {
  if (value === null) return 'n/a';
  return `${value} ms`;
}

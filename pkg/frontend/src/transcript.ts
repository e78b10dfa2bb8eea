/** Pure helpers over the JSON Lines transcript. The transcript endpoint is
 * the source of truth for the whole session view, so a refresh (or another
 * client acting on the same session) reconstructs everything from here. */

import type { TranscriptHeader, TranscriptRecord } from './protocol.js';

export interface ParsedTranscript {
  header: TranscriptHeader | null;
  records: TranscriptRecord[];
}

export function parseTranscript(text: string): ParsedTranscript {
  const lines = text.split('\n').filter((line) => line.trim().length > 0);
  if (lines.length === 0) return { header: null, records: [] };
  let header: TranscriptHeader | null = null;
  const records: TranscriptRecord[] = [];
  for (const [index, line] of lines.entries()) {
    let row: unknown;
    try {
      row = JSON.parse(line);
    } catch {
      continue;
    }
    if (index === 0 && isHeader(row)) {
      header = row;
    } else if (isRecord(row)) {
      records.push(row);
    }
  }
  return { header, records };
}

function isHeader(row: unknown): row is TranscriptHeader {
  const candidate = row as TranscriptHeader;
  return (
    typeof candidate === 'object' &&
    candidate !== null &&
    typeof candidate.problem_id === 'string' &&
    typeof candidate.task === 'string' &&
    typeof candidate.briefing === 'string'
  );
}

function isRecord(row: unknown): row is TranscriptRecord {
  const candidate = row as TranscriptRecord;
  return (
    typeof candidate === 'object' &&
    candidate !== null &&
    typeof candidate.action === 'object' &&
    candidate.action !== null &&
    typeof candidate.action.api === 'string' &&
    typeof candidate.observation === 'object' &&
    candidate.observation !== null &&
    typeof candidate.observation.text === 'string' &&
    typeof candidate.sim_time_ms === 'number'
  );
}

/** Newest observation for one API; feeds the live log/metric panels. */
export function latestObservation(
  records: TranscriptRecord[],
  api: string,
): TranscriptRecord | null {
  for (let i = records.length - 1; i >= 0; i -= 1) {
    if (records[i].action.api === api && !records[i].observation.error) return records[i];
  }
  return null;
}

export function lastSimTimeMs(records: TranscriptRecord[]): number {
  return records.length === 0 ? 0 : records[records.length - 1].sim_time_ms;
}

/** The submit record, if the session already ended. */
export function submitRecord(records: TranscriptRecord[]): TranscriptRecord | null {
  for (const record of records) {
    if (record.action.api === 'submit') return record;
  }
  return null;
}

export function actionsUsed(records: TranscriptRecord[]): number {
  return records.length;
}

/** Session parameters are embedded in the briefing text; reading them back
 * lets a refreshed tab rebuild its header from the transcript alone. */
export function budgetFromBriefing(briefing: string): number | null {
  const match = briefing.match(/Action budget: (\d+) actions/);
  return match ? Number(match[1]) : null;
}

export function latencyFromBriefing(briefing: string): number | null {
  const match = briefing.match(/takes about (\d+) ms/);
  return match ? Number(match[1]) : null;
}

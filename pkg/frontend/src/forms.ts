/** Client-side composition and validation of actions. Invalid forms never
 * reach the wire: the composer shows the message and sends nothing. */

export interface ActionDraft {
  api: string;
  args: Record<string, unknown>;
}

export type FormResult =
  | { ok: true; action: ActionDraft }
  | { ok: false; message: string };

export type SolutionResult =
  | { ok: true; solution: Record<string, unknown> }
  | { ok: false; message: string };

const SERVICE_APIS = ['get_logs', 'get_metrics', 'get_traces'];

export function buildServiceAction(api: string, service: string): FormResult {
  if (!SERVICE_APIS.includes(api)) {
    return { ok: false, message: `not a service api: ${api}` };
  }
  const trimmed = service.trim();
  if (trimmed.length === 0) {
    return { ok: false, message: 'service is required' };
  }
  return { ok: true, action: { api, args: { service: trimmed } } };
}

export function buildShellAction(command: string): FormResult {
  const trimmed = command.trim();
  if (trimmed.length === 0) {
    return { ok: false, message: 'command is required' };
  }
  return { ok: true, action: { api: 'exec_shell', args: { command: trimmed } } };
}

export function parseServiceList(text: string): string[] {
  return text
    .split(',')
    .map((part) => part.trim())
    .filter((part) => part.length > 0);
}

export interface SolutionForm {
  anomalous?: boolean;
  services?: string;
  mitigated?: boolean;
}

export function buildSolution(task: string, form: SolutionForm): SolutionResult {
  if (task === 'detect') {
    if (form.anomalous === undefined) {
      return { ok: false, message: 'choose anomalous or healthy' };
    }
    if (!form.anomalous) {
      return { ok: true, solution: { anomalous: false } };
    }
    const services = parseServiceList(form.services ?? '');
    if (services.length === 0) {
      return { ok: false, message: 'name at least one anomalous service' };
    }
    return { ok: true, solution: { anomalous: true, services } };
  }
  if (task === 'localize') {
    const services = parseServiceList(form.services ?? '');
    if (services.length === 0) {
      return { ok: false, message: 'name at least one faulty service' };
    }
    return { ok: true, solution: { services } };
  }
  if (task === 'mitigate') {
    return { ok: true, solution: { mitigated: form.mitigated === true } };
  }
  return { ok: false, message: `unknown task: ${task}` };
}

// Wire types of the control API, mirrored field-for-field.

export type ThreadStatus =
  | 'New'
  | 'DraftPending'
  | 'AwaitingApproval'
  | 'Scheduled'
  | 'AwaitingScammer'
  | 'Terminated';

export interface ThreadState {
  thread_key: string;
  status: ThreadStatus;
  termination_reason: string | null;
  send_at: string | null;
  awaiting_since: string | null;
  inbound_count: number;
  outbound_count: number;
  first_reply_at: string | null;
  last_event_at: string | null;
  last_seq: number;
  retry_count: number;
  last_dsn: string | null;
  attention?: string | null;
}

export interface SideStats {
  message_count: number;
  avg_chars: number;
  avg_sentences: number;
}

export interface ThreadStats {
  thread_key: string;
  total_mails: number;
  scammer: SideStats;
  ours: SideStats;
  engagement_days: number;
  first_reply_delay_s: number | null;
  termination: string | null;
  dsn: string | null;
  first_contact_at: string | null;
}

export interface ThreadDetail {
  state: ThreadState;
  stats: ThreadStats | null;
}

export interface EngagementEvent {
  seq: number;
  at: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface PiiFinding {
  kind: string;
  start: number;
  end: number;
  excerpt: string;
}

export interface QueueItem {
  draft_id: string;
  thread_key: string;
  scammer_text: string;
  body: string | null;
  attempts: number;
  findings_history: PiiFinding[][];
  age_seconds: number;
  attention?: string;
}

/** JSON payloads of the assessment service (schema_version 1). */

export interface TopicSnapshot {
  topic_id: string;
  phase: string;
  pool_size: number;
  relevant: number;
  judged: number;
  ratio: number;
  batch_position: number;
  batch_size: number;
  terminal_reason: string | null;
}

export interface SessionStatus {
  schema_version: number;
  session_id: string;
  task: string;
  seed: number;
  total_judged: number;
  budget_remaining: number | null;
  topics: TopicSnapshot[];
}

export interface GradeInfo {
  grade: number;
  label: string;
  description: string;
}

export interface GradeScale {
  task: string;
  grades: GradeInfo[];
}

export interface DocumentView {
  doc_id: string;
  url?: string;
  title?: string;
  body?: string;
  text?: string;
}

export interface IssuedDocument {
  topic_id: string;
  doc_id: string;
  phase: string;
  position_in_phase: { position: number; batch_size: number };
  document: DocumentView;
}

export interface JudgmentRecord {
  doc_id: string;
  grade: number;
  revisions: { grade: number; at: number }[];
}

export interface TopicHistory {
  topic_id: string;
  judgments: JudgmentRecord[];
}

export interface QrelsExport {
  content: string;
  partial: boolean;
  totalJudged: number;
  qrelsSize: number;
}

import { TopicConflictError } from "./api.js";
import type { AssessApi } from "./api.js";
import type {
  GradeInfo,
  IssuedDocument,
  JudgmentRecord,
  TopicSnapshot,
} from "./types.js";

export interface FlowState {
  sessionId: string | null;
  task: string | null;
  grades: GradeInfo[];
  topics: TopicSnapshot[];
  activeTopic: string | null;
  current: IssuedDocument | null;
  history: JudgmentRecord[];
  banner: string | null;
  busy: boolean;
}

export type FlowListener = (state: FlowState) => void;

const TERMINAL = new Set(["Finished", "Discarded"]);

/**
 * The judge flow: one assessor, one session, one topic at a time.
 *
 * Every counter shown to the assessor comes straight from a service
 * response; this class never computes R/J/ratio itself, it only replaces
 * snapshots with fresher ones.
 */
export class JudgeFlow {
  state: FlowState = {
    sessionId: null,
    task: null,
    grades: [],
    topics: [],
    activeTopic: null,
    current: null,
    history: [],
    banner: null,
    busy: false,
  };

  private listeners: FlowListener[] = [];

  constructor(private api: AssessApi) {}

  subscribe(listener: FlowListener): void {
    this.listeners.push(listener);
    listener(this.state);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private patchTopic(snapshot: TopicSnapshot): void {
    this.state.topics = this.state.topics.map((t) =>
      t.topic_id === snapshot.topic_id ? snapshot : t,
    );
  }

  liveTopics(): TopicSnapshot[] {
    return this.state.topics.filter((t) => !TERMINAL.has(t.phase));
  }

  topic(topicId: string): TopicSnapshot | undefined {
    return this.state.topics.find((t) => t.topic_id === topicId);
  }

  async attach(sessionId: string): Promise<void> {
    this.state.busy = true;
    this.emit();
    try {
      const status = await this.api.status(sessionId);
      const scale = await this.api.scale(sessionId);
      this.state.sessionId = sessionId;
      this.state.task = status.task;
      this.state.grades = scale.grades;
      this.state.topics = status.topics;
      this.state.banner = null;
      const live = this.liveTopics();
      const first = live.length > 0 ? live[0] : this.state.topics[0];
      this.state.activeTopic = first ? first.topic_id : null;
      if (this.state.activeTopic !== null) {
        await this.refreshTopic(this.state.activeTopic);
      }
    } finally {
      this.state.busy = false;
      this.emit();
    }
  }

  async selectTopic(topicId: string): Promise<void> {
    return this.switchTopic(topicId, false);
  }

  private async switchTopic(topicId: string, keepBanner: boolean): Promise<void> {
    if (!this.state.sessionId) return;
    this.state.activeTopic = topicId;
    if (!keepBanner) this.state.banner = null;
    await this.refreshTopic(topicId);
    this.emit();
  }

  /** Fetch the outstanding document and judgment history for one topic. */
  private async refreshTopic(topicId: string): Promise<void> {
    const sid = this.state.sessionId;
    if (!sid) return;
    this.state.history = (await this.api.history(sid, topicId)).judgments;
    const snapshot = this.topic(topicId);
    if (snapshot && TERMINAL.has(snapshot.phase)) {
      this.state.current = null;
      this.state.banner = `Topic ${topicId} is ${snapshot.phase}`;
      return;
    }
    try {
      this.state.current = await this.api.nextDocument(sid, topicId);
    } catch (err) {
      if (err instanceof TopicConflictError) {
        this.state.current = null;
        this.state.banner = `Topic ${topicId} is ${err.status}`;
        if (err.topic) this.patchTopic(err.topic);
      } else {
        throw err;
      }
    }
  }

  /** Submit a grade for the outstanding document, then pull the next one. */
  async submitGrade(grade: number): Promise<void> {
    const sid = this.state.sessionId;
    const current = this.state.current;
    if (!sid || !current) return;
    const snapshot = await this.api.judge(sid, current.topic_id, current.doc_id, grade);
    this.patchTopic(snapshot);
    this.state.history = (await this.api.history(sid, current.topic_id)).judgments;
    if (TERMINAL.has(snapshot.phase)) {
      this.state.current = null;
      this.state.banner = `Topic ${current.topic_id} is ${snapshot.phase}`;
      this.autoAdvance();
    } else {
      try {
        this.state.current = await this.api.nextDocument(sid, current.topic_id);
        this.state.banner = null;
      } catch (err) {
        if (err instanceof TopicConflictError) {
          this.state.current = null;
          this.state.banner = `Topic ${current.topic_id} is ${err.status}`;
          if (err.topic) this.patchTopic(err.topic);
          this.autoAdvance();
        } else {
          throw err;
        }
      }
    }
    this.emit();
  }

  /** Change an earlier judgment; counters come back from the service. */
  async reviseJudgment(docId: string, grade: number): Promise<void> {
    const sid = this.state.sessionId;
    const topicId = this.state.activeTopic;
    if (!sid || !topicId) return;
    const snapshot = await this.api.revise(sid, topicId, docId, grade);
    this.patchTopic(snapshot);
    this.state.history = (await this.api.history(sid, topicId)).judgments;
    this.emit();
  }

  /** After a topic terminates, move the assessor to the next live topic,
   * keeping the terminal notice visible. */
  private autoAdvance(): void {
    const live = this.liveTopics();
    if (live.length === 0 || !live[0]) return;
    const nextTopic = live[0].topic_id;
    const notice = this.state.banner;
    void this.switchTopic(nextTopic, true)
      .then(() => {
        if (notice && this.state.banner === notice) {
          this.state.banner = `${notice} — continuing with topic ${nextTopic}`;
          this.emit();
        }
      })
      .catch(() => {
        /* surfaced through the banner on the next render */
      });
  }

  async refreshStatus(): Promise<void> {
    if (!this.state.sessionId) return;
    const status = await this.api.status(this.state.sessionId);
    this.state.topics = status.topics;
    this.emit();
  }

  async exportQrels(): Promise<{ content: string; partial: boolean }> {
    if (!this.state.sessionId) throw new Error("no session attached");
    const out = await this.api.exportQrels(this.state.sessionId);
    return { content: out.content, partial: out.partial };
  }
}

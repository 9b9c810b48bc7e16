import { AssessApi } from "./api.js";
import { JudgeFlow } from "./flow.js";
import type { FlowState } from "./flow.js";
import type { DocumentView } from "./types.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function renderDocument(doc: DocumentView, task: string | null): string {
  if (task === "passage" || doc.text !== undefined) {
    return `<p class="passage">${esc(doc.text ?? "")}</p>`;
  }
  const url = doc.url ? `<p class="url"><a href="${esc(doc.url)}" target="_blank" rel="noopener">${esc(doc.url)}</a></p>` : "";
  return `
    <h3>${esc(doc.title ?? "")}</h3>
    ${url}
    <p class="body">${esc(doc.body ?? "")}</p>`;
}

function render(state: FlowState): string {
  const topics = state.topics
    .map((t) => {
      const active = t.topic_id === state.activeTopic ? " active" : "";
      const ratio = t.judged > 0 ? t.ratio.toFixed(3) : "-";
      return `
        <li class="topic${active}" data-action="select-topic" data-topic="${esc(t.topic_id)}">
          <span class="tid">${esc(t.topic_id)}</span>
          <span class="phase" data-phase="${esc(t.phase)}">${esc(t.phase)}</span>
          <span class="counters">R=<b data-counter="relevant">${t.relevant}</b>
            J=<b data-counter="judged">${t.judged}</b>
            ratio=<span data-counter="ratio">${ratio}</span></span>
        </li>`;
    })
    .join("");

  const gradeButtons = state.grades
    .map(
      (g) => `
      <button class="grade" data-action="grade" data-grade="${g.grade}"
              title="${esc(g.description)}">
        <kbd>${g.grade}</kbd> ${esc(g.label)}
      </button>`,
    )
    .join("");

  let main: string;
  if (state.current) {
    const pos = state.current.position_in_phase;
    main = `
      <div class="progress">${esc(state.current.phase)} &middot;
        document ${pos.position} of ${pos.batch_size} &middot;
        <code id="current-doc">${esc(state.current.doc_id)}</code></div>
      <div class="doc">${renderDocument(state.current.document, state.task)}</div>
      <div class="grades">${gradeButtons}</div>`;
  } else {
    main = `<div class="idle">No document issued.</div>`;
  }

  const history = state.history
    .map((j) => {
      const revisers = state.grades
        .map(
          (g) =>
            `<button class="mini${j.grade === g.grade ? " current" : ""}"
                     data-action="revise" data-doc="${esc(j.doc_id)}"
                     data-grade="${g.grade}">${g.grade}</button>`,
        )
        .join("");
      return `
        <tr data-doc="${esc(j.doc_id)}">
          <td class="doc-id">${esc(j.doc_id)}</td>
          <td class="grade-now">${j.grade}</td>
          <td class="revise">${revisers}</td>
        </tr>`;
    })
    .join("");

  const banner = state.banner
    ? `<div id="banner" class="banner">${esc(state.banner)}</div>`
    : `<div id="banner" class="banner hidden"></div>`;

  return `
    ${banner}
    <div class="columns">
      <aside id="topics"><h2>Topics</h2><ul>${topics}</ul></aside>
      <main id="main">${main}</main>
      <aside id="history">
        <h2>Judged</h2>
        <table><thead><tr><th>doc</th><th>grade</th><th>revise</th></tr></thead>
        <tbody>${history}</tbody></table>
      </aside>
    </div>`;
}

export interface App {
  flow: JudgeFlow;
  attach(sessionId: string): Promise<void>;
  exportQrels(): Promise<void>;
}

/**
 * Wire the assessor console into `root`. The page shell (toolbar inputs and
 * the app container) lives in index.html; everything below the toolbar is
 * re-rendered from flow state.
 */
export function initApp(root: HTMLElement, api: AssessApi): App {
  const flow = new JudgeFlow(api);
  const view = root.ownerDocument.createElement("div");
  view.id = "view";
  root.appendChild(view);
  const exportBox = root.ownerDocument.createElement("textarea");
  exportBox.id = "export-box";
  exportBox.setAttribute("readonly", "readonly");
  root.appendChild(exportBox);

  flow.subscribe((state) => {
    view.innerHTML = render(state);
  });

  view.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target) return;
    const action = target.dataset.action;
    if (action === "select-topic" && target.dataset.topic) {
      void flow.selectTopic(target.dataset.topic);
    } else if (action === "grade" && target.dataset.grade) {
      void flow.submitGrade(Number(target.dataset.grade));
    } else if (action === "revise" && target.dataset.doc && target.dataset.grade) {
      void flow.reviseJudgment(target.dataset.doc, Number(target.dataset.grade));
    }
  });

  root.ownerDocument.addEventListener("keydown", (event) => {
    const key = event.key;
    if (!/^[0-3]$/.test(key)) return;
    const tag = (event.target as HTMLElement).tagName;
    if (tag === "INPUT" || tag === "TEXTAREA") return;
    if (flow.state.current) void flow.submitGrade(Number(key));
  });

  const app: App = {
    flow,
    attach: (sessionId: string) => flow.attach(sessionId),
    exportQrels: async () => {
      const out = await flow.exportQrels();
      exportBox.value = out.content;
      exportBox.dataset.partial = String(out.partial);
    },
  };
  return app;
}

/** Browser entry point: reads the toolbar inputs and boots the console. */
export function bootstrap(doc: Document): void {
  const root = doc.getElementById("app");
  const serverInput = doc.getElementById("server-url") as HTMLInputElement | null;
  const sessionInput = doc.getElementById("session-id") as HTMLInputElement | null;
  const tokenInput = doc.getElementById("token") as HTMLInputElement | null;
  const attachButton = doc.getElementById("attach");
  const exportButton = doc.getElementById("export");
  if (!root || !serverInput || !sessionInput || !attachButton || !exportButton) return;
  let app: App | null = null;
  attachButton.addEventListener("click", () => {
    root.querySelector("#view")?.remove();
    root.querySelector("#export-box")?.remove();
    const api = new AssessApi(serverInput.value, tokenInput?.value || undefined);
    app = initApp(root, api);
    void app.attach(sessionInput.value).catch((err) => {
      const view = root.querySelector("#view");
      if (view) view.innerHTML = `<div class="banner">${esc(String(err))}</div>`;
    });
  });
  exportButton.addEventListener("click", () => {
    if (app) void app.exportQrels();
  });
}

declare global {
  interface Window {
    __POOLKIT_NO_BOOT?: boolean;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined"
    && !window.__POOLKIT_NO_BOOT) {
  document.addEventListener("DOMContentLoaded", () => bootstrap(document));
}

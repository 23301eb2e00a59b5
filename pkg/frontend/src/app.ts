// DOM wiring: labeling queue with dialogue context, one-keystroke tagging,
// and live progress panels polled from the service.

import { ApiClient, ApiError } from "./api.js";
import { dataMapSvg, escapeXml, learningCurveSvg, tagBarsSvg } from "./charts.js";
import { keyForTag, tagIndexForKey } from "./keyboard.js";
import { AnnotationSession, applicableTags } from "./session.js";
import type { ProjectStatus, SchemeTag } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

let api: ApiClient | null = null;
let session: AnnotationSession | null = null;
let focusedIndex = 0;
let pollTimer: number | null = null;

function banner(text: string, kind: "info" | "warn" | "error" = "info"): void {
  const el = $("banner");
  el.textContent = text;
  el.className = `banner ${kind}`;
  el.style.display = text ? "block" : "none";
}

function schemeFromStatus(status: ProjectStatus): SchemeTag[] {
  // tag order and roles come with every status snapshot via per_tag_counts
  // keys; roles are refined lazily from ticket sentences. The service is the
  // source of truth for names and order.
  return Object.keys(status.per_tag_counts).map((name) => ({ name, role: "both" }));
}

async function connect(): Promise<void> {
  const baseUrl = ($("base-url") as HTMLInputElement).value.trim();
  const projectId = ($("project-id") as HTMLInputElement).value.trim();
  const annotator = ($("annotator-id") as HTMLInputElement).value.trim() || "anonymous";
  if (!baseUrl || !projectId) {
    banner("set the service URL and project id first", "warn");
    return;
  }
  api = new ApiClient(baseUrl);
  try {
    const status = await api.getStatus(projectId);
    session = new AnnotationSession(projectId, annotator, schemeFromStatus(status));
    session.observeStatus(status);
    renderStatus(status);
    banner(`connected to ${projectId} (${status.strategy} strategy)`, "info");
    startPolling();
  } catch (err) {
    banner(describe(err), "error");
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `${err.code}: ${err.message}`;
  }
  return String(err);
}

async function fetchBatch(): Promise<void> {
  if (!api || !session) return;
  const size = parseInt(($("batch-size") as HTMLInputElement).value, 10) || 10;
  try {
    const ticket = await api.getBatch(session.projectId, size, session.annotatorId);
    session.loadTicket(ticket);
    focusedIndex = 0;
    if (ticket.final) {
      banner("final batch: the pool will be empty after this one", "info");
    } else {
      banner("", "info");
    }
    renderQueue();
  } catch (err) {
    if (err instanceof ApiError && err.code === "pool_empty") {
      banner("annotation complete: no unlabeled sentences remain", "info");
      session.clearTicket();
      renderQueue();
    } else if (err instanceof ApiError && err.code === "busy") {
      banner("model is retraining; fetch again shortly", "warn");
    } else {
      banner(describe(err), "error");
    }
  }
}

async function submitBuffer(): Promise<void> {
  if (!api || !session || !session.ticket) return;
  if (!session.allTagged()) {
    banner(
      `submit blocked: ${session.items.length - session.taggedCount()} sentences still untagged`,
      "warn",
    );
    return;
  }
  try {
    const result = await api.submitLabels(session.projectId, {
      ticket_id: session.ticket.ticket_id,
      annotator_id: session.annotatorId,
      labels: session.buffer(),
    });
    banner(`submitted ${result.accepted} labels; fetching next batch`, "info");
    session.clearTicket();
    await refreshStatus();
    await fetchBatch(); // the feedback loop: label, submit, continue
  } catch (err) {
    banner(describe(err), "error");
  }
}

async function retrain(): Promise<void> {
  if (!api || !session) return;
  try {
    const result = await api.retrain(session.projectId);
    banner(`retraining model generation ${result.generation}...`, "info");
  } catch (err) {
    if (err instanceof ApiError && (err.code === "busy" || err.code === "insufficient_labels")) {
      banner(describe(err), "warn");
    } else {
      banner(describe(err), "error");
    }
  }
}

async function refreshStatus(): Promise<void> {
  if (!api || !session) return;
  try {
    const status = await api.getStatus(session.projectId);
    const generationChanged = session.observeStatus(status);
    renderStatus(status);
    if (generationChanged) {
      renderPanels(status);
    }
  } catch {
    // polling errors are transient; the next tick retries
  }
}

function startPolling(): void {
  if (pollTimer !== null) {
    clearInterval(pollTimer);
  }
  pollTimer = window.setInterval(refreshStatus, 2000);
  if (session?.lastStatus) {
    renderPanels(session.lastStatus);
  }
}

function renderStatus(status: ProjectStatus): void {
  $("stat-labeled").textContent = String(status.labeled);
  $("stat-pool").textContent = String(status.pool);
  $("stat-total").textContent = String(status.total_sentences);
  $("stat-generation").textContent = String(status.model_generation);
  $("stat-state").textContent = status.state;
  $("stat-kappa").textContent = status.kappa === null ? "n/a" : status.kappa.toFixed(3);
  renderPanels(status);
}

function renderPanels(status: ProjectStatus): void {
  if (!session) return;
  $("panel-map").innerHTML = status.data_map
    ? dataMapSvg(status.data_map)
    : placeholder("data map appears after the first retrain");
  $("panel-curve").innerHTML = learningCurveSvg(session.curve);
  $("panel-tags").innerHTML = tagBarsSvg(status.per_tag_counts);
  $("panel-generation").textContent = `model generation ${status.model_generation}`;
}

function placeholder(text: string): string {
  return `<div class="placeholder">${escapeXml(text)}</div>`;
}

function renderQueue(): void {
  if (!session) return;
  const queue = $("queue");
  queue.innerHTML = "";
  if (!session.items.length) {
    queue.innerHTML = '<p class="placeholder">fetch a batch to start labeling</p>';
    renderProgressLine();
    return;
  }
  session.items.forEach((item, index) => {
    const card = document.createElement("div");
    card.className = `card ${index === focusedIndex ? "focused" : ""}`;
    const context = item.sentence.context
      .map((c) => `<div class="ctx"><span class="role">${c.role}</span> ${escapeXml(c.text)}</div>`)
      .join("");
    const tags = applicableTags(session!.scheme, item.sentence.role)
      .map((tag) => {
        const globalIndex = session!.scheme.findIndex((t) => t.name === tag.name);
        const key = keyForTag(globalIndex);
        const selected = item.selectedTag === tag.name ? "selected" : "";
        return `<button class="tag ${selected}" data-sentence="${item.sentence.id}" data-tag="${escapeXml(tag.name)}">${key ? `<kbd>${key}</kbd> ` : ""}${escapeXml(tag.name)}</button>`;
      })
      .join("");
    card.innerHTML = `
      ${context}
      <div class="sentence"><span class="role">${item.sentence.role}</span> ${escapeXml(item.sentence.text)}</div>
      <div class="palette">${tags}</div>`;
    card.addEventListener("click", () => {
      focusedIndex = index;
      renderQueue();
    });
    queue.appendChild(card);
  });
  queue.querySelectorAll<HTMLButtonElement>("button.tag").forEach((button) => {
    button.addEventListener("click", (event) => {
      event.stopPropagation();
      assignTag(button.dataset.sentence!, button.dataset.tag!);
    });
  });
  renderProgressLine();
}

function renderProgressLine(): void {
  if (!session) return;
  $("queue-progress").textContent = session.items.length
    ? `${session.taggedCount()} / ${session.items.length} tagged`
    : "";
}

function assignTag(sentenceId: string, tag: string): void {
  if (!session) return;
  try {
    session.setTag(sentenceId, tag);
    const index = session.items.findIndex((i) => i.sentence.id === sentenceId);
    focusedIndex = Math.min(index + 1, session.items.length - 1);
    renderQueue();
  } catch (err) {
    banner(String(err), "warn");
  }
}

function onKeydown(event: KeyboardEvent): void {
  if (!session || !session.items.length) return;
  const target = event.target as HTMLElement;
  if (target.tagName === "INPUT" || target.tagName === "TEXTAREA") return;
  if (event.key === "ArrowDown" || event.key === "j") {
    focusedIndex = Math.min(focusedIndex + 1, session.items.length - 1);
    renderQueue();
    return;
  }
  if (event.key === "ArrowUp" || event.key === "k") {
    focusedIndex = Math.max(focusedIndex - 1, 0);
    renderQueue();
    return;
  }
  if (event.key === "Enter" && (event.ctrlKey || event.metaKey)) {
    void submitBuffer();
    return;
  }
  const tagIndex = tagIndexForKey(event.key);
  if (tagIndex === null || tagIndex >= session.scheme.length) return;
  const item = session.items[focusedIndex];
  const tag = session.scheme[tagIndex];
  const allowed = applicableTags(session.scheme, item.sentence.role).some(
    (t) => t.name === tag.name,
  );
  if (allowed) {
    assignTag(item.sentence.id, tag.name);
  }
}

export function start(): void {
  $("connect").addEventListener("click", () => void connect());
  $("fetch").addEventListener("click", () => void fetchBatch());
  $("submit").addEventListener("click", () => void submitBuffer());
  $("retrain").addEventListener("click", () => void retrain());
  document.addEventListener("keydown", onKeydown);
}

if (typeof document !== "undefined" && document.getElementById("queue")) {
  start();
}

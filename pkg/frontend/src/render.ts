import { layerColumns, layerOf } from "./layout.js";
import type { UiState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Conversation log: one bubble per query and per final response. */
export function renderChat(state: UiState): string {
  if (!state.chat.length) {
    return '<div class="chat-empty">No messages yet.</div>';
  }
  const bubbles = state.chat.map((entry) => {
    const badge =
      entry.role === "assistant" && entry.status && entry.status !== "ok"
        ? `<span class="badge badge-${escapeHtml(entry.status)}">${escapeHtml(entry.status)}</span>`
        : "";
    return [
      `<div class="msg msg-${entry.role}" data-query="${escapeHtml(entry.queryId)}">`,
      badge,
      `<p>${escapeHtml(entry.text)}</p>`,
      "</div>",
    ].join("");
  });
  const spinner = state.busy ? '<div class="msg msg-pending">working&hellip;</div>' : "";
  return `<div class="chat">${bubbles.join("")}${spinner}</div>`;
}

const BOX_W = 150;
const BOX_H = 44;
const H_GAP = 48;
const V_GAP = 24;
const MARGIN = 24;

/**
 * Task graph as layered SVG: dependency-free tasks in the left column,
 * each remaining task one column right of its deepest dependency. Box
 * color tracks the task's folded status.
 */
export function renderDag(state: UiState): string {
  const plan = state.plan;
  if (!plan || !plan.nodes.length) {
    return '<div class="dag-empty">No plan yet.</div>';
  }
  const layers = layerOf(plan.nodes);
  const columns = layerColumns(plan.nodes);
  const rows = Math.max(...columns.map((c) => c.length));
  const width = MARGIN * 2 + columns.length * BOX_W + (columns.length - 1) * H_GAP;
  const height = MARGIN * 2 + rows * BOX_H + (rows - 1) * V_GAP;

  const position: Record<string, { x: number; y: number }> = {};
  columns.forEach((column, col) => {
    column.forEach((taskId, row) => {
      position[taskId] = {
        x: MARGIN + col * (BOX_W + H_GAP),
        y: MARGIN + row * (BOX_H + V_GAP),
      };
    });
  });

  const edges: string[] = [];
  for (const node of plan.nodes) {
    const to = position[node.task_id];
    if (!to) continue;
    for (const dep of [...node.depends_on].sort()) {
      const from = position[dep];
      if (!from) continue;
      edges.push(
        `<line class="edge" x1="${from.x + BOX_W}" y1="${from.y + BOX_H / 2}" ` +
          `x2="${to.x}" y2="${to.y + BOX_H / 2}" />`,
      );
    }
  }

  const descriptions: Record<string, string> = {};
  for (const node of plan.nodes) {
    descriptions[node.task_id] = node.description;
  }

  const boxes: string[] = [];
  for (const column of columns) {
    for (const taskId of column) {
      const { x, y } = position[taskId]!;
      const status = state.taskStatuses[taskId] ?? "pending";
      boxes.push(
        `<g class="task task-${status}" data-task="${escapeHtml(taskId)}" data-layer="${layers[taskId]}">` +
          `<title>${escapeHtml(descriptions[taskId] ?? taskId)}</title>` +
          `<rect x="${x}" y="${y}" width="${BOX_W}" height="${BOX_H}" rx="6" />` +
          `<text x="${x + BOX_W / 2}" y="${y + BOX_H / 2 + 4}" text-anchor="middle">${escapeHtml(taskId)}</text>` +
          "</g>",
      );
    }
  }

  return (
    `<svg class="dag" viewBox="0 0 ${width} ${height}" role="img" aria-label="task graph">` +
    edges.join("") +
    boxes.join("") +
    "</svg>"
  );
}

/** Persona pool table; rows only ever get appended or gain reuse counts. */
export function renderPool(state: UiState): string {
  if (!state.pool.length) {
    return '<div class="pool-empty">No personas yet.</div>';
  }
  const rows = state.pool.map(
    (row) =>
      "<tr>" +
      `<td class="mono">${escapeHtml(row.personaId)}</td>` +
      `<td>${escapeHtml(row.role)}</td>` +
      `<td>${escapeHtml(row.style)}</td>` +
      `<td>${escapeHtml(row.capabilities.join(", "))}</td>` +
      `<td class="mono">${escapeHtml(row.createdForTask)}</td>` +
      `<td class="num">${row.reuseCount}</td>` +
      "</tr>",
  );
  const footer = `${state.pool.length} personas, ${state.agents.length} agents`;
  return (
    '<table class="pool">' +
    "<thead><tr><th>id</th><th>role</th><th>style</th><th>capabilities</th><th>first task</th><th>reused</th></tr></thead>" +
    `<tbody>${rows.join("")}</tbody>` +
    `<tfoot><tr><td colspan="6">${escapeHtml(footer)}</td></tr></tfoot>` +
    "</table>"
  );
}

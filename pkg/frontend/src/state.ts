import type {
  AgentDoc,
  Persona,
  PipelineEvent,
  Plan,
  TaskNode,
} from "./types.js";

export type TaskStatus =
  | "pending"
  | "running"
  | "done"
  | "failed"
  | "failed-upstream";

export interface ChatEntry {
  role: "user" | "assistant";
  text: string;
  queryId: string;
  // "ok" | "partial" | "failed"; only set on assistant entries
  status?: string;
}

export interface PoolRow {
  personaId: string;
  role: string;
  style: string;
  capabilities: string[];
  createdForTask: string;
  reuseCount: number;
}

export interface UiState {
  lastSeq: number;
  busy: boolean;
  degraded: boolean;
  chat: ChatEntry[];
  plan: Plan | null;
  waves: string[][];
  taskStatuses: Record<string, TaskStatus>;
  pool: PoolRow[];
  agents: AgentDoc[];
}

export function initialState(): UiState {
  return {
    lastSeq: 0,
    busy: false,
    degraded: false,
    chat: [],
    plan: null,
    waves: [],
    taskStatuses: {},
    pool: [],
    agents: [],
  };
}

function pendingStatuses(nodes: TaskNode[]): Record<string, TaskStatus> {
  const statuses: Record<string, TaskStatus> = {};
  for (const node of nodes) {
    statuses[node.task_id] = "pending";
  }
  return statuses;
}

function poolRow(persona: Persona): PoolRow {
  return {
    personaId: persona.persona_id,
    role: persona.role,
    style: persona.communication_style,
    capabilities: [...persona.capabilities],
    createdForTask: persona.created_for_task,
    reuseCount: 0,
  };
}

/**
 * Fold one event into the view state.
 *
 * Pure: returns a new state object and never mutates the input. Events
 * at or below lastSeq are replays from a resumed stream and leave the
 * state untouched, so folding a transcript is idempotent per seq.
 */
export function applyEvent(state: UiState, event: PipelineEvent): UiState {
  if (event.seq <= state.lastSeq) {
    return state;
  }
  const next: UiState = { ...state, lastSeq: event.seq };
  switch (event.kind) {
    case "query_received":
      next.busy = true;
      next.chat = [
        ...state.chat,
        {
          role: "user",
          text: event.payload.query.text,
          queryId: event.payload.query.id,
        },
      ];
      break;
    case "profile_updated":
      next.degraded = event.payload.degraded;
      break;
    case "plan_ready":
      next.plan = event.payload.plan;
      next.waves = event.payload.waves;
      next.taskStatuses = pendingStatuses(event.payload.plan.nodes);
      break;
    case "persona_created":
      next.pool = [...state.pool, poolRow(event.payload.persona)];
      break;
    case "persona_reused":
      next.pool = state.pool.map((row) =>
        row.personaId === event.payload.persona_id
          ? { ...row, reuseCount: row.reuseCount + 1 }
          : row,
      );
      break;
    case "agent_spawned": {
      const agent = event.payload.agent;
      const known = state.agents.some((a) => a.agent_id === agent.agent_id);
      next.agents = known
        ? state.agents.map((a) => (a.agent_id === agent.agent_id ? agent : a))
        : [...state.agents, agent];
      break;
    }
    case "wave_started":
      break;
    case "task_started":
      next.taskStatuses = {
        ...state.taskStatuses,
        [event.payload.task_id]: "running",
      };
      break;
    case "task_completed":
      next.taskStatuses = {
        ...state.taskStatuses,
        [event.payload.task_id]: "done",
      };
      break;
    case "task_failed":
      next.taskStatuses = {
        ...state.taskStatuses,
        [event.payload.task_id]:
          event.payload.reason === "upstream" ? "failed-upstream" : "failed",
      };
      break;
    case "response_ready":
      next.busy = false;
      next.chat = [
        ...state.chat,
        {
          role: "assistant",
          text: event.payload.response.content,
          queryId: event.payload.response.query_id,
          status: event.payload.status,
        },
      ];
      break;
  }
  return next;
}

export function foldEvents(
  state: UiState,
  events: Iterable<PipelineEvent>,
): UiState {
  let folded = state;
  for (const event of events) {
    folded = applyEvent(folded, event);
  }
  return folded;
}

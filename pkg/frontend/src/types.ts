// Wire types for the session-service HTTP API and its event stream.
// These mirror the JSON documents the service emits; the UI never
// derives pipeline facts on its own, it only folds these.

export interface TaskNode {
  task_id: string;
  description: string;
  depends_on: string[];
  required_capabilities: string[];
  expected_output: string;
}

export interface Plan {
  plan_id: string;
  query_id: string;
  nodes: TaskNode[];
}

export interface Persona {
  persona_id: string;
  role: string;
  competencies: string[];
  communication_style: string;
  capabilities: string[];
  system_prompt_seed: string;
  created_for_task: string;
  reused: boolean;
}

export interface AgentDoc {
  agent_id: string;
  persona_id: string;
  rendered_system_prompt: string;
  backend_ref: string;
  status: string;
}

export interface UserProfile {
  intent: string;
  domain: string;
  expertise_level: string;
  communication_style: string;
  signals: string[];
  confidence: number;
}

export interface TaskResultDoc {
  task_id: string;
  agent_id: string;
  content: string;
  inputs_used: string[];
  attempt: number;
  completed_at?: string;
}

export interface FinalResponseDoc {
  query_id: string;
  content: string;
  source_results: string[];
  style_applied: string;
}

export interface QueryDoc {
  id: string;
  session_id: string;
  text: string;
  submitted_at?: string;
}

export interface QueryReceivedPayload {
  query: QueryDoc;
}

export interface ProfileUpdatedPayload {
  profile: UserProfile;
  degraded: boolean;
}

export interface PlanReadyPayload {
  plan: Plan;
  waves: string[][];
  plan_repair: boolean;
  structured_repair: boolean;
}

export interface PersonaCreatedPayload {
  persona: Persona;
  fingerprint: string;
  task_id: string;
}

export interface PersonaReusedPayload {
  persona_id: string;
  fingerprint: string;
  task_id: string;
}

export interface AgentSpawnedPayload {
  agent: AgentDoc;
  task_id: string;
}

export interface WaveStartedPayload {
  wave: number;
  tasks: string[];
}

export interface TaskStartedPayload {
  task_id: string;
  wave: number;
  agent_id: string | null;
  inputs: string[];
}

export interface TaskCompletedPayload {
  task_id: string;
  wave: number;
  agent_id: string;
  result: TaskResultDoc;
}

export interface TaskFailedPayload {
  task_id: string;
  wave: number;
  agent_id: string | null;
  reason: string;
  detail: string;
  attempts: number;
  failed_dependencies: string[];
}

export interface ResponseReadyPayload {
  response: FinalResponseDoc;
  status: string;
  fallback: boolean;
}

interface EventBase {
  seq: number;
  at?: string;
}

export type PipelineEvent = EventBase &
  (
    | { kind: "query_received"; payload: QueryReceivedPayload }
    | { kind: "profile_updated"; payload: ProfileUpdatedPayload }
    | { kind: "plan_ready"; payload: PlanReadyPayload }
    | { kind: "persona_created"; payload: PersonaCreatedPayload }
    | { kind: "persona_reused"; payload: PersonaReusedPayload }
    | { kind: "agent_spawned"; payload: AgentSpawnedPayload }
    | { kind: "wave_started"; payload: WaveStartedPayload }
    | { kind: "task_started"; payload: TaskStartedPayload }
    | { kind: "task_completed"; payload: TaskCompletedPayload }
    | { kind: "task_failed"; payload: TaskFailedPayload }
    | { kind: "response_ready"; payload: ResponseReadyPayload }
  );

export type EventKind = PipelineEvent["kind"];

import { SessionClient } from "./client.js";
import { EventStream } from "./events.js";
import { applyEvent, initialState, type UiState } from "./state.js";
import { renderChat, renderDag, renderPool } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  private state: UiState = initialState();
  private stream: EventStream | null = null;
  private sessionId = "";

  constructor(private readonly client: SessionClient) {}

  async start(): Promise<void> {
    const form = el<HTMLFormElement>("composer");
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit();
    });
    try {
      this.sessionId = await this.client.createSession();
    } catch (error) {
      this.notice(`could not create session: ${(error as Error).message}`);
      return;
    }
    el("session-label").textContent = this.sessionId;
    this.stream = new EventStream(
      this.client.eventsUrl(this.sessionId),
      (event) => {
        this.state = applyEvent(this.state, event);
        this.repaint();
      },
    );
    this.stream.start(0);
    this.repaint();
  }

  private async submit(): Promise<void> {
    const input = el<HTMLInputElement>("query-input");
    const text = input.value.trim();
    if (!text) return;
    this.notice("");
    const outcome = await this.client.submitQuery(this.sessionId, text);
    if (!outcome.accepted) {
      this.notice(outcome.message);
      return;
    }
    input.value = "";
  }

  private notice(message: string): void {
    el("notice").textContent = message;
  }

  private repaint(): void {
    el("chat-view").innerHTML = renderChat(this.state);
    el("dag-view").innerHTML = renderDag(this.state);
    el("pool-view").innerHTML = renderPool(this.state);
    el<HTMLInputElement>("query-input").disabled = this.state.busy;
    el<HTMLButtonElement>("send-button").disabled = this.state.busy;
    el("degraded-flag").textContent = this.state.degraded
      ? "profile degraded"
      : "";
  }
}

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8080";
void new App(new SessionClient(baseUrl)).start();

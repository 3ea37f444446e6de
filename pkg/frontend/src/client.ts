export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export type SubmitOutcome =
  | { accepted: true; queryId: string }
  | { accepted: false; busy: boolean; message: string };

async function detailOf(response: Response): Promise<string> {
  try {
    const doc = (await response.json()) as { detail?: string };
    if (doc && typeof doc.detail === "string") return doc.detail;
  } catch {
    // fall through to the status line
  }
  return `request failed (${response.status})`;
}

export class SessionClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  eventsUrl(sessionId: string): string {
    return `${this.baseUrl}/v1/sessions/${sessionId}/events`;
  }

  async createSession(): Promise<string> {
    const response = await this.fetchFn(`${this.baseUrl}/v1/sessions`, {
      method: "POST",
    });
    if (!response.ok) {
      throw new Error(await detailOf(response));
    }
    const doc = (await response.json()) as { session_id: string };
    return doc.session_id;
  }

  async submitQuery(sessionId: string, text: string): Promise<SubmitOutcome> {
    const response = await this.fetchFn(
      `${this.baseUrl}/v1/sessions/${sessionId}/queries`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ text }),
      },
    );
    if (response.status === 202) {
      const doc = (await response.json()) as { query_id: string };
      return { accepted: true, queryId: doc.query_id };
    }
    return {
      accepted: false,
      busy: response.status === 409,
      message: await detailOf(response),
    };
  }

  async deleteSession(sessionId: string): Promise<void> {
    await this.fetchFn(`${this.baseUrl}/v1/sessions/${sessionId}`, {
      method: "DELETE",
    });
  }
}

/** Thin typed client for the Cafe endpoints.
 *
 * Every mutating call sends a fresh Idempotency-Key so transport retries
 * can never double-claim, double-submit, or double-purchase.
 */

import type {
  CategorySummary,
  ClaimResponse,
  ContextLabel,
  JobListing,
  Profile,
  PurchaseAck,
  RewardListing,
  SubmitAck,
  TransactionsResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
  ) {
    super(`${status}: ${code}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

function newIdempotencyKey(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) {
    return crypto.randomUUID();
  }
  return `${Date.now()}-${Math.random().toString(36).slice(2)}`;
}

export class CafeClient {
  constructor(
    private token: string,
    private baseUrl = "",
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    idempotent = false,
  ): Promise<T> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
    };
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (idempotent) headers["Idempotency-Key"] = newIdempotencyKey();
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = "unknown";
      try {
        code = ((await response.json()) as { error?: string }).error ?? code;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, code);
    }
    return (await response.json()) as T;
  }

  categories(): Promise<CategorySummary[]> {
    return this.request("GET", "/cafe/categories");
  }

  jobs(category?: string): Promise<JobListing[]> {
    const query = category ? `?category=${encodeURIComponent(category)}` : "";
    return this.request("GET", `/cafe/jobs${query}`);
  }

  claim(jobId: string): Promise<ClaimResponse> {
    return this.request(
      "POST",
      `/cafe/jobs/${encodeURIComponent(jobId)}/claim`,
      undefined,
      true,
    );
  }

  submit(
    instanceId: string,
    answers: Record<string, Record<string, string>>,
    context: ContextLabel,
  ): Promise<SubmitAck> {
    return this.request(
      "POST",
      `/cafe/instances/${encodeURIComponent(instanceId)}/submit`,
      { answers, context },
      true,
    );
  }

  rewards(): Promise<RewardListing[]> {
    return this.request("GET", "/cafe/rewards");
  }

  purchase(rewardId: string): Promise<PurchaseAck> {
    return this.request(
      "POST",
      `/cafe/rewards/${encodeURIComponent(rewardId)}/purchase`,
      undefined,
      true,
    );
  }

  transactions(): Promise<TransactionsResponse> {
    return this.request("GET", "/cafe/transactions");
  }

  me(): Promise<Profile> {
    return this.request("GET", "/cafe/me");
  }
}

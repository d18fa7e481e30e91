/** Shared types mirroring the service's JSON bodies. */

export interface Money {
  cents: number;
  currency: string;
}

export interface CategorySummary {
  category: string;
  nominal_duration: number;
  available_jobs: number;
}

export interface JobListing {
  id: string;
  title: string;
  instructions: string;
  category: string;
  reward: Money;
  answer_fields: string[];
  instances_available: number;
}

export interface ClaimedUnit {
  id: string;
  payload: Record<string, string>;
  rendered: string;
}

export interface ClaimResponse {
  instance: { id: string; job_id: string; unit_ids: string[] };
  units: ClaimedUnit[];
  template: string;
  answer_fields: string[];
  instructions: string;
}

export interface SubmitAck {
  instance_id: string;
  units: { unit_id: string; accepted: boolean }[];
  banned: boolean;
  credited: Money;
  balance: Money;
}

export interface RewardListing {
  id: string;
  title: string;
  price: Money;
  venue: string;
  remaining: number;
}

export interface PurchaseAck {
  id: string;
  code: string;
  reward_item_id: string;
  issued_at: string;
  balance: Money;
}

export interface TransactionEntry {
  id: string;
  amount: Money;
  kind: { type: string } & Record<string, unknown>;
  created_at: string;
}

export interface TransactionsResponse {
  balance: Money;
  transactions: TransactionEntry[];
}

export interface Profile {
  id: string;
  display_name: string;
  balance: Money;
}

export type ContextLabel =
  | "workplace"
  | "outside"
  | "bus"
  | "home"
  | "train"
  | "walking"
  | "unspecified";

export const CONTEXT_LABELS: ContextLabel[] = [
  "workplace",
  "outside",
  "bus",
  "home",
  "train",
  "walking",
  "unspecified",
];

/** HTML string renderers for the app's views.
 *
 * Pure functions over response data so they are testable without a DOM.
 * Only whitelisted fields are ever rendered; anything the server might
 * add later (and anything quality-control related) stays invisible.
 */

import type {
  CategorySummary,
  ClaimedUnit,
  JobListing,
  Money,
  RewardListing,
  TransactionEntry,
} from "./types.js";
import { CONTEXT_LABELS } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function formatMoney(money: Money): string {
  const euros = (money.cents / 100).toFixed(2);
  return `€${euros}`;
}

export function renderCategoryTile(summary: CategorySummary): string {
  return [
    `<button class="category-tile" data-category="${escapeHtml(summary.category)}">`,
    `<span class="category-name">${escapeHtml(summary.category)}</span>`,
    `<span class="category-count">${summary.available_jobs} jobs</span>`,
    `</button>`,
  ].join("");
}

export function renderJobCard(job: JobListing): string {
  return [
    `<article class="job-card" data-job-id="${escapeHtml(job.id)}">`,
    `<h3>${escapeHtml(job.title)}</h3>`,
    `<p class="job-reward">${formatMoney(job.reward)} per task</p>`,
    `<p class="job-remaining">${job.instances_available} tasks left</p>`,
    `<button class="claim-button" data-job-id="${escapeHtml(job.id)}">Start</button>`,
    `</article>`,
  ].join("");
}

/** One swipeable unit card: server-rendered template plus answer inputs.
 *
 * The unit body comes from the server's sanitized `rendered` field; the
 * only unit metadata shown is its id (as a data attribute for wiring).
 */
export function renderUnitCard(
  unit: ClaimedUnit,
  answerFields: string[],
  index: number,
  total: number,
): string {
  const inputs = answerFields
    .map(
      (field) =>
        `<label class="answer-field">${escapeHtml(field)}` +
        `<input name="${escapeHtml(field)}" data-unit-id="${escapeHtml(unit.id)}"` +
        ` autocomplete="off" /></label>`,
    )
    .join("");
  return [
    `<section class="unit-card" data-unit-id="${escapeHtml(unit.id)}">`,
    `<header class="unit-progress">${index + 1} / ${total}</header>`,
    `<div class="unit-body">${unit.rendered}</div>`,
    `<form class="unit-answers">${inputs}</form>`,
    `</section>`,
  ].join("");
}

export function renderContextPicker(selected: string): string {
  const options = CONTEXT_LABELS.map(
    (label) =>
      `<option value="${label}"${label === selected ? " selected" : ""}>` +
      `${label}</option>`,
  ).join("");
  return `<select class="context-picker">${options}</select>`;
}

export function renderSubmitButton(enabled: boolean): string {
  const disabled = enabled ? "" : " disabled";
  return `<button class="submit-button" type="submit"${disabled}>Submit</button>`;
}

export function renderRewardCard(reward: RewardListing): string {
  const soldOut = reward.remaining === 0;
  return [
    `<article class="reward-card" data-reward-id="${escapeHtml(reward.id)}">`,
    `<h3>${escapeHtml(reward.title)}</h3>`,
    `<p class="reward-venue">${escapeHtml(reward.venue)}</p>`,
    `<p class="reward-price">${formatMoney(reward.price)}</p>`,
    `<button class="purchase-button" data-reward-id="${escapeHtml(reward.id)}"` +
      `${soldOut ? " disabled" : ""}>${soldOut ? "Sold out" : "Redeem"}</button>`,
    `</article>`,
  ].join("");
}

const TRANSACTION_LABELS: Record<string, string> = {
  judgment_credit: "Task reward",
  coupon_purchase: "Coupon",
  manual_adjustment: "Adjustment",
};

export function renderTransactionRow(entry: TransactionEntry): string {
  const label = TRANSACTION_LABELS[entry.kind.type] ?? "Entry";
  const sign = entry.amount.cents < 0 ? "debit" : "credit";
  return [
    `<li class="transaction ${sign}">`,
    `<span class="transaction-label">${escapeHtml(label)}</span>`,
    `<span class="transaction-amount">${formatMoney(entry.amount)}</span>`,
    `<time>${escapeHtml(entry.created_at)}</time>`,
    `</li>`,
  ].join("");
}

export function renderBalance(balance: Money): string {
  return `<span class="balance">${formatMoney(balance)}</span>`;
}

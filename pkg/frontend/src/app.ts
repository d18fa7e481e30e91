/** Application shell: wires the view-models to the DOM.
 *
 * Single logical UI thread; at most one in-flight submit per instance,
 * enforced by disabling the controls while a request is pending.
 */

import { ApiError, CafeClient } from "./api.js";
import { afterClaimFailure, afterSubmit } from "./flow.js";
import {
  canSubmit,
  completedAnswers,
  newFormState,
  setAnswer,
  setContext,
  type TaskFormState,
} from "./form.js";
import {
  renderBalance,
  renderCategoryTile,
  renderContextPicker,
  renderJobCard,
  renderRewardCard,
  renderSubmitButton,
  renderTransactionRow,
  renderUnitCard,
} from "./render.js";
import { attachSwipe } from "./swipe.js";
import type { ClaimResponse, ContextLabel } from "./types.js";

const TOKEN_KEY = "crowdcafe-token";
const CONTEXT_KEY = "crowdcafe-context";

interface AppState {
  client: CafeClient | null;
  context: ContextLabel;
  claim: ClaimResponse | null;
  form: TaskFormState | null;
  jobId: string | null;
  cardIndex: number;
  detachSwipe: (() => void) | null;
}

const state: AppState = {
  client: null,
  context: (localStorage.getItem(CONTEXT_KEY) as ContextLabel) || "unspecified",
  claim: null,
  form: null,
  jobId: null,
  cardIndex: 0,
  detachSwipe: null,
};

function root(): HTMLElement {
  return document.getElementById("app") as HTMLElement;
}

function notice(message: string): void {
  const banner = document.getElementById("notice");
  if (!banner) return;
  banner.textContent = message;
  banner.classList.toggle("hidden", message === "");
}

// ---------------------------------------------------------------------------
// Views

function showLogin(): void {
  root().innerHTML = `
    <section class="login">
      <h1>CrowdCafe</h1>
      <p>Paste your access token to start working.</p>
      <input id="token-input" type="password" placeholder="access token" />
      <button id="login-button">Sign in</button>
    </section>`;
  const button = document.getElementById("login-button") as HTMLButtonElement;
  button.onclick = async () => {
    const input = document.getElementById("token-input") as HTMLInputElement;
    const client = new CafeClient(input.value.trim());
    try {
      await client.me();
    } catch {
      notice("That token was not accepted.");
      return;
    }
    localStorage.setItem(TOKEN_KEY, input.value.trim());
    state.client = client;
    notice("");
    void showHome();
  };
}

async function showHome(): Promise<void> {
  const client = state.client;
  if (!client) return showLogin();
  const [profile, categories] = await Promise.all([
    client.me(),
    client.categories(),
  ]);
  root().innerHTML = `
    <section class="home">
      <header class="home-header">
        <h1>Hi ${profile.display_name}</h1>
        ${renderBalance(profile.balance)}
      </header>
      <label class="context-label">Where are you right now?
        ${renderContextPicker(state.context)}
      </label>
      <div class="categories">
        ${categories.map(renderCategoryTile).join("")}
      </div>
      <nav class="home-nav">
        <button id="nav-rewards">Rewards</button>
        <button id="nav-transactions">Transactions</button>
        <button id="nav-logout">Sign out</button>
      </nav>
    </section>`;
  const picker = root().querySelector(".context-picker") as HTMLSelectElement;
  picker.onchange = () => {
    state.context = picker.value as ContextLabel;
    localStorage.setItem(CONTEXT_KEY, state.context);
    if (state.form) state.form = setContext(state.form, state.context);
  };
  for (const tile of root().querySelectorAll<HTMLButtonElement>(".category-tile")) {
    tile.onclick = () => void showListing(tile.dataset.category as string);
  }
  (document.getElementById("nav-rewards") as HTMLButtonElement).onclick = () =>
    void showRewards();
  (document.getElementById("nav-transactions") as HTMLButtonElement).onclick =
    () => void showTransactions();
  (document.getElementById("nav-logout") as HTMLButtonElement).onclick = () => {
    localStorage.removeItem(TOKEN_KEY);
    state.client = null;
    showLogin();
  };
}

async function showListing(category?: string): Promise<void> {
  const client = state.client;
  if (!client) return showLogin();
  const jobs = await client.jobs(category);
  root().innerHTML = `
    <section class="listing">
      <header><button id="back-home">&larr; Home</button>
        <h2>${category ?? "All tasks"}</h2></header>
      <div class="job-cards">
        ${jobs.length ? jobs.map(renderJobCard).join("") : "<p>No tasks right now.</p>"}
      </div>
    </section>`;
  (document.getElementById("back-home") as HTMLButtonElement).onclick = () =>
    void showHome();
  for (const button of root().querySelectorAll<HTMLButtonElement>(".claim-button")) {
    button.onclick = () => void claimJob(button.dataset.jobId as string);
  }
}

async function claimJob(jobId: string): Promise<void> {
  const client = state.client;
  if (!client) return showLogin();
  try {
    const claim = await client.claim(jobId);
    state.claim = claim;
    state.jobId = jobId;
    state.form = newFormState(claim, state.context);
    state.cardIndex = 0;
    showTask();
  } catch (error) {
    if (error instanceof ApiError) {
      const step = afterClaimFailure(error.code);
      if (step.kind === "home") {
        notice(step.notice);
        void showHome();
        return;
      }
    }
    void showListing();
  }
}

function showTask(): void {
  const claim = state.claim;
  const form = state.form;
  if (!claim || !form) return void showListing();
  state.detachSwipe?.();

  const total = claim.units.length;
  const cards = claim.units
    .map((unit, i) => renderUnitCard(unit, claim.answer_fields, i, total))
    .join("");
  root().innerHTML = `
    <section class="task">
      <header><button id="back-listing">&larr; Tasks</button>
        <p class="task-instructions">${claim.instructions}</p></header>
      <div class="card-stack" data-index="${state.cardIndex}">${cards}</div>
      <footer class="task-footer">${renderSubmitButton(canSubmit(form))}</footer>
    </section>`;
  updateVisibleCard();

  (document.getElementById("back-listing") as HTMLButtonElement).onclick = () =>
    void showListing();

  for (const input of root().querySelectorAll<HTMLInputElement>(
    ".unit-answers input",
  )) {
    input.oninput = () => {
      if (!state.form) return;
      state.form = setAnswer(
        state.form,
        input.dataset.unitId as string,
        input.name,
        input.value,
      );
      refreshSubmitButton();
    };
  }

  const stack = root().querySelector(".card-stack") as HTMLElement;
  state.detachSwipe = attachSwipe(stack, (direction) => {
    const delta = direction === "left" ? 1 : -1;
    const next = state.cardIndex + delta;
    if (next >= 0 && next < total) {
      state.cardIndex = next;
      updateVisibleCard();
    }
  });

  const submit = root().querySelector(".submit-button") as HTMLButtonElement;
  submit.onclick = (event) => {
    event.preventDefault();
    void submitInstance();
  };
}

function updateVisibleCard(): void {
  const cards = root().querySelectorAll<HTMLElement>(".unit-card");
  cards.forEach((card, i) => {
    card.classList.toggle("hidden", i !== state.cardIndex);
  });
}

function refreshSubmitButton(): void {
  const form = state.form;
  const button = root().querySelector(".submit-button") as HTMLButtonElement | null;
  if (form && button) button.disabled = !canSubmit(form);
}

async function submitInstance(): Promise<void> {
  const client = state.client;
  const form = state.form;
  const jobId = state.jobId;
  if (!client || !form || !jobId || !canSubmit(form)) return;
  state.form = { ...form, submitting: true };
  refreshSubmitButton();
  try {
    const ack = await client.submit(
      form.instanceId,
      completedAnswers(form),
      form.context,
    );
    notice(`Earned ${(ack.credited.cents / 100).toFixed(2)}€ — balance ${(ack.balance.cents / 100).toFixed(2)}€`);
    const step = afterSubmit(ack, jobId);
    if (step.kind === "home") {
      notice(step.notice);
      state.claim = null;
      state.form = null;
      void showHome();
      return;
    }
    await claimJob(jobId);
  } catch (error) {
    if (error instanceof ApiError && error.code === "reservation_expired") {
      notice("This task expired; pick a new one.");
      void showListing();
      return;
    }
    state.form = { ...form, submitting: false };
    refreshSubmitButton();
    notice("Submit failed; please try again.");
  }
}

async function showRewards(): Promise<void> {
  const client = state.client;
  if (!client) return showLogin();
  const [profile, rewards] = await Promise.all([client.me(), client.rewards()]);
  root().innerHTML = `
    <section class="rewards">
      <header><button id="back-home">&larr; Home</button>
        <h2>Rewards</h2>${renderBalance(profile.balance)}</header>
      <div class="reward-cards">${rewards.map(renderRewardCard).join("")}</div>
    </section>`;
  (document.getElementById("back-home") as HTMLButtonElement).onclick = () =>
    void showHome();
  for (const button of root().querySelectorAll<HTMLButtonElement>(
    ".purchase-button",
  )) {
    button.onclick = async () => {
      button.disabled = true;
      try {
        const ack = await client.purchase(button.dataset.rewardId as string);
        notice(`Your code: ${ack.code}`);
      } catch (error) {
        if (error instanceof ApiError && error.code === "insufficient_funds") {
          notice("Not enough balance yet.");
        } else {
          notice("Purchase failed.");
        }
      }
      void showRewards();
    };
  }
}

async function showTransactions(): Promise<void> {
  const client = state.client;
  if (!client) return showLogin();
  const log = await client.transactions();
  root().innerHTML = `
    <section class="transactions">
      <header><button id="back-home">&larr; Home</button>
        <h2>Transactions</h2>${renderBalance(log.balance)}</header>
      <ul class="transaction-list">
        ${log.transactions.map(renderTransactionRow).join("")}
      </ul>
    </section>`;
  (document.getElementById("back-home") as HTMLButtonElement).onclick = () =>
    void showHome();
}

// ---------------------------------------------------------------------------
// Boot

export function start(): void {
  const saved = localStorage.getItem(TOKEN_KEY);
  if (saved) {
    state.client = new CafeClient(saved);
    void showHome();
  } else {
    showLogin();
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  start();
}

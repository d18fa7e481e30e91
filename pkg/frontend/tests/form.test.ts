import { describe, expect, it } from "vitest";

import {
  canSubmit,
  completedAnswers,
  isComplete,
  newFormState,
  setAnswer,
  setContext,
} from "../src/form.js";
import type { ClaimResponse } from "../src/types.js";

const CLAIM: ClaimResponse = {
  instance: { id: "inst-1", job_id: "job-1", unit_ids: ["u1", "u2", "u3"] },
  units: [
    { id: "u1", payload: { text: "one" }, rendered: "<p>one</p>" },
    { id: "u2", payload: { text: "two" }, rendered: "<p>two</p>" },
    { id: "u3", payload: { text: "three" }, rendered: "<p>three</p>" },
  ],
  template: "<p>{{text}}</p>",
  answer_fields: ["relation", "confidence"],
  instructions: "Answer both questions.",
};

function fillAll(state = newFormState(CLAIM)) {
  for (const unit of CLAIM.units) {
    state = setAnswer(state, unit.id, "relation", "yes");
    state = setAnswer(state, unit.id, "confidence", "high");
  }
  return state;
}

describe("submit gating", () => {
  it("starts disabled with every field blank", () => {
    const state = newFormState(CLAIM);
    expect(isComplete(state)).toBe(false);
    expect(canSubmit(state)).toBe(false);
  });

  it("stays disabled until the last field of the last unit is filled", () => {
    let state = newFormState(CLAIM);
    state = setAnswer(state, "u1", "relation", "yes");
    state = setAnswer(state, "u1", "confidence", "high");
    state = setAnswer(state, "u2", "relation", "no");
    state = setAnswer(state, "u2", "confidence", "low");
    state = setAnswer(state, "u3", "relation", "yes");
    expect(canSubmit(state)).toBe(false);
    state = setAnswer(state, "u3", "confidence", "high");
    expect(canSubmit(state)).toBe(true);
  });

  it("treats whitespace-only answers as blank", () => {
    let state = fillAll();
    state = setAnswer(state, "u2", "relation", "   ");
    expect(canSubmit(state)).toBe(false);
  });

  it("clearing a field disables submit again", () => {
    let state = fillAll();
    expect(canSubmit(state)).toBe(true);
    state = setAnswer(state, "u1", "confidence", "");
    expect(canSubmit(state)).toBe(false);
  });

  it("ignores writes to unknown units or fields", () => {
    let state = newFormState(CLAIM);
    state = setAnswer(state, "u99", "relation", "yes");
    state = setAnswer(state, "u1", "not-a-field", "yes");
    expect(state.answers).toEqual(newFormState(CLAIM).answers);
  });

  it("disables submit while a request is in flight", () => {
    const state = { ...fillAll(), submitting: true };
    expect(isComplete(state)).toBe(true);
    expect(canSubmit(state)).toBe(false);
  });
});

describe("answers payload", () => {
  it("yields one entry per unit and field", () => {
    const answers = completedAnswers(fillAll());
    expect(Object.keys(answers).sort()).toEqual(["u1", "u2", "u3"]);
    expect(answers.u2).toEqual({ relation: "yes", confidence: "high" });
  });

  it("refuses to serialize an incomplete form", () => {
    expect(() => completedAnswers(newFormState(CLAIM))).toThrow();
  });
});

describe("context label", () => {
  it("defaults to unspecified and follows the picker", () => {
    let state = newFormState(CLAIM);
    expect(state.context).toBe("unspecified");
    state = setContext(state, "train");
    expect(state.context).toBe("train");
  });

  it("claim-time context is attached to the form", () => {
    const state = newFormState(CLAIM, "bus");
    expect(state.context).toBe("bus");
  });
});

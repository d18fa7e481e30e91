/** View-model for one claimed task instance.
 *
 * Mirrors the server contract client-side: the submit button stays
 * disabled until every answer field of every unit has a non-blank value,
 * so an incomplete submit request is never sent.
 */

import type { ClaimResponse, ContextLabel } from "./types.js";

export interface TaskFormState {
  instanceId: string;
  unitIds: string[];
  answerFields: string[];
  /** unitId -> fieldName -> value ("" = unanswered) */
  answers: Record<string, Record<string, string>>;
  context: ContextLabel;
  submitting: boolean;
}

export function newFormState(
  claim: ClaimResponse,
  context: ContextLabel = "unspecified",
): TaskFormState {
  const answers: Record<string, Record<string, string>> = {};
  for (const unit of claim.units) {
    answers[unit.id] = {};
    for (const field of claim.answer_fields) {
      answers[unit.id][field] = "";
    }
  }
  return {
    instanceId: claim.instance.id,
    unitIds: claim.units.map((u) => u.id),
    answerFields: [...claim.answer_fields],
    answers,
    context,
    submitting: false,
  };
}

export function setAnswer(
  state: TaskFormState,
  unitId: string,
  field: string,
  value: string,
): TaskFormState {
  if (!(unitId in state.answers) || !state.answerFields.includes(field)) {
    return state;
  }
  return {
    ...state,
    answers: {
      ...state.answers,
      [unitId]: { ...state.answers[unitId], [field]: value },
    },
  };
}

export function setContext(
  state: TaskFormState,
  context: ContextLabel,
): TaskFormState {
  return { ...state, context };
}

export function isComplete(state: TaskFormState): boolean {
  return state.unitIds.every((unitId) =>
    state.answerFields.every(
      (field) => (state.answers[unitId]?.[field] ?? "").trim() !== "",
    ),
  );
}

/** The submit control is enabled only for a complete, idle form. */
export function canSubmit(state: TaskFormState): boolean {
  return isComplete(state) && !state.submitting;
}

export function completedAnswers(
  state: TaskFormState,
): Record<string, Record<string, string>> {
  if (!isComplete(state)) {
    throw new Error("form is incomplete");
  }
  return state.answers;
}

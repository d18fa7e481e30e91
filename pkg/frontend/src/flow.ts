/** Navigation decisions after a submit acknowledgment.
 *
 * After a successful submit the app immediately tries to claim the next
 * instance of the same job; if none is available it falls back to the
 * task listing.  A ban short-circuits to home with a notice.
 */

import type { SubmitAck } from "./types.js";

export type NextStep =
  | { kind: "claim-next"; jobId: string }
  | { kind: "listing" }
  | { kind: "home"; notice: string };

export function afterSubmit(ack: SubmitAck, jobId: string): NextStep {
  if (ack.banned) {
    return {
      kind: "home",
      notice: "You can no longer work on this job.",
    };
  }
  return { kind: "claim-next", jobId };
}

/** Fallback when the follow-up claim fails. */
export function afterClaimFailure(errorCode: string): NextStep {
  if (errorCode === "not_eligible") {
    return { kind: "home", notice: "This job is no longer available to you." };
  }
  return { kind: "listing" };
}

/** Horizontal swipe recognition for moving between unit cards.
 *
 * Pure state machine over pointer coordinates so the threshold rule is
 * unit-testable: a swipe only triggers when the horizontal travel is at
 * least 35% of the card width and mostly horizontal.
 */

export const SWIPE_THRESHOLD_RATIO = 0.35;

export type SwipeDirection = "left" | "right";

export interface SwipeTracker {
  startX: number;
  startY: number;
  cardWidth: number;
  active: boolean;
}

export function beginSwipe(
  x: number,
  y: number,
  cardWidth: number,
): SwipeTracker {
  return { startX: x, startY: y, cardWidth, active: cardWidth > 0 };
}

/** Resolve a completed gesture; null means "not a swipe" (tap/scroll). */
export function endSwipe(
  tracker: SwipeTracker,
  x: number,
  y: number,
): SwipeDirection | null {
  if (!tracker.active) return null;
  const dx = x - tracker.startX;
  const dy = y - tracker.startY;
  if (Math.abs(dx) < tracker.cardWidth * SWIPE_THRESHOLD_RATIO) return null;
  if (Math.abs(dy) > Math.abs(dx)) return null; // vertical scroll wins
  return dx < 0 ? "left" : "right";
}

/** Attach pointer handlers to a card container. */
export function attachSwipe(
  element: HTMLElement,
  onSwipe: (direction: SwipeDirection) => void,
): () => void {
  let tracker: SwipeTracker | null = null;

  const down = (event: PointerEvent) => {
    tracker = beginSwipe(event.clientX, event.clientY, element.clientWidth);
  };
  const up = (event: PointerEvent) => {
    if (!tracker) return;
    const direction = endSwipe(tracker, event.clientX, event.clientY);
    tracker = null;
    if (direction) onSwipe(direction);
  };
  const cancel = () => {
    tracker = null;
  };

  element.addEventListener("pointerdown", down);
  element.addEventListener("pointerup", up);
  element.addEventListener("pointercancel", cancel);
  return () => {
    element.removeEventListener("pointerdown", down);
    element.removeEventListener("pointerup", up);
    element.removeEventListener("pointercancel", cancel);
  };
}

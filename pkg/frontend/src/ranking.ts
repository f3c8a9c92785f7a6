/** Drag-to-order ranking of the blinded report slots.
 *
 * The model is just an ordered array of slot letters; the DOM layer
 * maps drag events to moveSlot calls.
 */

export function moveSlot(ranking: string[], from: number, to: number): string[] {
  if (from < 0 || from >= ranking.length || to < 0 || to >= ranking.length) {
    throw new Error(`move ${from} -> ${to} out of range for ${ranking.length} slots`);
  }
  const next = [...ranking];
  const [item] = next.splice(from, 1);
  next.splice(to, 0, item);
  return next;
}

/** Position labels shown beside the ordered list. */
export function rankLabel(index: number, count: number): string {
  if (index === 0) return 'Most useful';
  if (index === count - 1) return 'Least useful';
  return `#${index + 1}`;
}

/** Two-point distance measurement on an axial slice.
 *
 * Points are in pixel coordinates of the rendered PNG; spacing comes
 * from the X-Pixel-Spacing-MM response header and may be anisotropic.
 */

export interface PixelPoint {
  x: number;
  y: number;
}

export function measureDistance(
  p1: PixelPoint,
  p2: PixelPoint,
  spacingMmPerPx: number | [number, number],
): number {
  const [sx, sy] = typeof spacingMmPerPx === 'number'
    ? [spacingMmPerPx, spacingMmPerPx]
    : spacingMmPerPx;
  if (!(sx > 0) || !(sy > 0)) throw new Error('pixel spacing must be positive');
  const dx = (p2.x - p1.x) * sx;
  const dy = (p2.y - p1.y) * sy;
  return Math.hypot(dx, dy);
}

/** Display formatting used next to the measurement cursor. */
export function formatDistance(mm: number): string {
  return `${mm.toFixed(1)} mm`;
}

// Color scale for energy intensity.  Documented stops, in kWh per mile:
// under 1 is light duty, 1-2 typical electric, 2-4 hybrid territory,
// 4-8 typical diesel, over 8 is heavy.  The same function colors both the
// map polylines and the legend swatches, so they cannot disagree.

export const SCALE: { limit: number; color: string; label: string }[] = [
  { limit: 1, color: "#1a9850", label: "< 1" },
  { limit: 2, color: "#91cf60", label: "1 – 2" },
  { limit: 4, color: "#fee08b", label: "2 – 4" },
  { limit: 8, color: "#fc8d59", label: "4 – 8" },
  { limit: Infinity, color: "#d73027", label: "≥ 8" },
];

export const NO_DATA_COLOR = "#9e9e9e";

export function colorFor(kwhPerMile: number | null): string {
  if (kwhPerMile === null) return NO_DATA_COLOR;
  for (const stop of SCALE) {
    if (kwhPerMile < stop.limit) return stop.color;
  }
  return SCALE[SCALE.length - 1]!.color;
}

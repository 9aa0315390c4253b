/** Cluster colors. Noise is always black; cluster ids map to a fixed
 * palette so colors never shift between re-renders of the same ids. */

export const NOISE_COLOR = "#000000";

const PALETTE = [
  "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2",
  "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
  "#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

export function clusterColor(clusterId: number): string {
  if (clusterId < 0) {
    return NOISE_COLOR;
  }
  return PALETTE[clusterId % PALETTE.length];
}

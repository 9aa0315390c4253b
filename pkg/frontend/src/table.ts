/** Reduction-summary table: one row per class plus a totals row, kept
 * percentage with two decimals. All numbers come from the server. */

import { SummaryResponse } from "./api.js";

export function formatPct(value: number): string {
  return `${value.toFixed(2)}%`;
}

export interface TableRow {
  label: string;
  total: number;
  kept: number;
  removed: number;
  keptPct: string;
}

export function summaryRows(summary: SummaryResponse): TableRow[] {
  const rows = summary.classes.map((r) => ({
    label: `class ${r.class}`,
    total: r.total,
    kept: r.kept,
    removed: r.removed,
    keptPct: formatPct(r.kept_pct),
  }));
  rows.push({
    label: "total",
    total: summary.total.n,
    kept: summary.total.kept,
    removed: summary.total.removed,
    keptPct: formatPct(summary.total.kept_pct),
  });
  return rows;
}

export function renderTable(el: HTMLElement, summary: SummaryResponse): void {
  const rows = summaryRows(summary);
  const header = "<tr><th>class</th><th>total</th><th>kept</th><th>removed</th><th>kept %</th></tr>";
  const body = rows
    .map(
      (r) =>
        `<tr${r.label === "total" ? ' class="total-row"' : ""}><td>${r.label}</td>` +
        `<td>${r.total}</td><td>${r.kept}</td><td>${r.removed}</td><td>${r.keptPct}</td></tr>`,
    )
    .join("");
  el.innerHTML = `<table>${header}${body}</table>`;
}

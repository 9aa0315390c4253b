// @vitest-environment happy-dom

import { describe, expect, it } from "vitest";

import { formatPct, renderTable, summaryRows } from "../src/table.js";

const SUMMARY = {
  classes: [
    { class: 0, total: 70, kept: 65, removed: 5, kept_pct: 92.857142857 },
    { class: 1, total: 70, kept: 70, removed: 0, kept_pct: 100.0 },
    { class: 2, total: 60, kept: 51, removed: 9, kept_pct: 85.0 },
  ],
  total: { n: 200, kept: 186, removed: 14, kept_pct: 93.0 },
};

describe("summaryRows", () => {
  it("class rows sum to the totals row", () => {
    const rows = summaryRows(SUMMARY);
    const classRows = rows.slice(0, -1);
    const total = rows[rows.length - 1];
    expect(classRows.reduce((acc, r) => acc + r.total, 0)).toBe(total.total);
    expect(classRows.reduce((acc, r) => acc + r.kept, 0)).toBe(total.kept);
    expect(classRows.reduce((acc, r) => acc + r.removed, 0)).toBe(total.removed);
  });

  it("formats kept percentage with two decimals", () => {
    expect(formatPct(92.857142857)).toBe("92.86%");
    expect(formatPct(98.756)).toBe("98.76%");
    expect(formatPct(100)).toBe("100.00%");
  });
});

describe("renderTable", () => {
  it("renders one row per class plus totals", () => {
    const host = document.createElement("div");
    renderTable(host, SUMMARY);
    const rows = host.querySelectorAll("tr");
    expect(rows).toHaveLength(1 + 3 + 1); // header + classes + total
    expect(host.textContent).toContain("92.86%");
    expect(host.textContent).toContain("total");
  });
});

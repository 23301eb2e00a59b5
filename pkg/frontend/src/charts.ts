// Pure SVG string builders for the progress panels. Kept DOM-free so they
// are unit-testable; the app injects the strings into containers.

import type { CurvePoint } from "./session.js";
import type { DataMapPoint } from "./types.js";

const BUCKET_COLORS: Record<string, string> = {
  Easy: "#4c72b0",
  Medium: "#55a868",
  Hard: "#dd8452",
  Impossible: "#c44e52",
};

const W = 320;
const H = 240;
const M = { left: 34, right: 10, top: 10, bottom: 26 };

function frame(): string {
  return `<rect x="0" y="0" width="${W}" height="${H}" fill="#fff" stroke="#ccc"/>`;
}

function open(): string {
  return `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" class="panel-chart">`;
}

// Scatter over the fixed informativeness plane: variability 0..0.5 on x,
// confidence 0..1 on y, bucket as color.
export function dataMapSvg(points: DataMapPoint[]): string {
  const x0 = M.left;
  const x1 = W - M.right;
  const y0 = H - M.bottom;
  const y1 = M.top;
  const parts = [open(), frame()];
  parts.push(
    `<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="#333"/>`,
    `<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="#333"/>`,
    `<text x="${(x0 + x1) / 2}" y="${H - 6}" font-size="10" text-anchor="middle">variability</text>`,
    `<text x="10" y="${(y0 + y1) / 2}" font-size="10" text-anchor="middle" transform="rotate(-90 10 ${(y0 + y1) / 2})">confidence</text>`,
  );
  for (const p of points) {
    const px = x0 + (Math.min(p.variability, 0.5) / 0.5) * (x1 - x0);
    const py = y0 - p.confidence * (y0 - y1);
    parts.push(
      `<circle class="dm-${p.bucket}" cx="${px.toFixed(1)}" cy="${py.toFixed(1)}" r="2.5" fill="${BUCKET_COLORS[p.bucket]}" fill-opacity="0.75"/>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}

// Learning curve of test metrics over labeled-set size, one point per
// completed model generation.
export function learningCurveSvg(curve: CurvePoint[]): string {
  const parts = [open(), frame()];
  const x0 = M.left;
  const x1 = W - M.right;
  const y0 = H - M.bottom;
  const y1 = M.top;
  parts.push(
    `<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="#333"/>`,
    `<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="#333"/>`,
    `<text x="${(x0 + x1) / 2}" y="${H - 6}" font-size="10" text-anchor="middle">labeled examples</text>`,
  );
  if (curve.length === 0) {
    parts.push(
      `<text x="${W / 2}" y="${H / 2}" font-size="11" text-anchor="middle" fill="#888">no trained model yet</text>`,
      "</svg>",
    );
    return parts.join("");
  }
  const maxX = Math.max(...curve.map((p) => p.labeled), 1);
  const toXY = (p: CurvePoint, value: number): string => {
    const px = x0 + (p.labeled / maxX) * (x1 - x0);
    const py = y0 - value * (y0 - y1);
    return `${px.toFixed(1)},${py.toFixed(1)}`;
  };
  const f1 = curve.map((p) => toXY(p, p.metrics.macro_f1)).join(" ");
  const acc = curve.map((p) => toXY(p, p.metrics.accuracy)).join(" ");
  if (curve.length === 1) {
    parts.push(`<circle cx="${f1.split(",")[0]}" cy="${f1.split(",")[1]}" r="3" fill="#dd8452"/>`);
    parts.push(`<circle cx="${acc.split(",")[0]}" cy="${acc.split(",")[1]}" r="3" fill="#4c72b0"/>`);
  } else {
    parts.push(`<polyline points="${f1}" fill="none" stroke="#dd8452" stroke-width="1.5"/>`);
    parts.push(`<polyline points="${acc}" fill="none" stroke="#4c72b0" stroke-width="1.5"/>`);
  }
  parts.push(
    `<text x="${x1 - 4}" y="${y1 + 10}" font-size="9" text-anchor="end" fill="#4c72b0">accuracy</text>`,
    `<text x="${x1 - 4}" y="${y1 + 22}" font-size="9" text-anchor="end" fill="#dd8452">macro F1</text>`,
    "</svg>",
  );
  return parts.join("");
}

// Horizontal bars of cumulative label counts per tag, sorted descending.
export function tagBarsSvg(counts: Record<string, number>): string {
  const entries = Object.entries(counts)
    .filter(([, v]) => v > 0)
    .sort((a, b) => b[1] - a[1] || a[0].localeCompare(b[0]));
  const rowH = 16;
  const height = Math.max(40, entries.length * rowH + 20);
  const max = entries.length ? entries[0][1] : 1;
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${height}" class="panel-chart">`,
    `<rect x="0" y="0" width="${W}" height="${height}" fill="#fff" stroke="#ccc"/>`,
  ];
  entries.forEach(([tag, value], i) => {
    const y = 10 + i * rowH;
    const barW = (value / max) * (W - 150);
    parts.push(
      `<text x="4" y="${y + 10}" font-size="9">${escapeXml(tag)}</text>`,
      `<rect class="tag-bar" x="130" y="${y + 2}" width="${barW.toFixed(1)}" height="${rowH - 6}" fill="#4c72b0"/>`,
      `<text x="${134 + barW}" y="${y + 10}" font-size="9">${value}</text>`,
    );
  });
  if (!entries.length) {
    parts.push(
      `<text x="${W / 2}" y="24" font-size="11" text-anchor="middle" fill="#888">no labels yet</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

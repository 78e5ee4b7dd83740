// Schematic scene rendering and probability bars.
//
// Scene coordinates live in [-1, 1] on both axes (y grows downward); the
// canvas is square, so a box maps linearly: pixel = (coord + 1) / 2 * side.

import type { SceneObject } from "./types.js";

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export function boxToCanvas(
  box: [number, number, number, number],
  side: number,
): Rect {
  const [x0, y0, x1, y1] = box;
  return {
    x: ((x0 + 1) / 2) * side,
    y: ((y0 + 1) / 2) * side,
    w: ((x1 - x0) / 2) * side,
    h: ((y1 - y0) / 2) * side,
  };
}

export function canvasToScene(px: number, py: number, side: number): [number, number] {
  return [(px / side) * 2 - 1, (py / side) * 2 - 1];
}

/** Index of the topmost object whose box contains the scene point. */
export function hitTest(objects: SceneObject[], x: number, y: number): number | null {
  for (let i = objects.length - 1; i >= 0; i--) {
    const [x0, y0, x1, y1] = objects[i].box;
    if (x >= x0 && x <= x1 && y >= y0 && y <= y1) {
      return objects[i].index;
    }
  }
  return null;
}

const FILL_BY_COLOR: Record<string, string> = {
  red: "#e05252",
  blue: "#527de0",
  green: "#4caf50",
  yellow: "#e0c152",
  black: "#444444",
  white: "#eeeeee",
  purple: "#9b59b6",
  orange: "#e67e22",
};

export function drawScene(
  canvas: HTMLCanvasElement,
  objects: SceneObject[],
  selected: number | null,
  highlight: number | null = null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const side = canvas.width;
  ctx.clearRect(0, 0, side, side);
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, side, side);
  ctx.strokeStyle = "#d0d0d0";
  ctx.beginPath();
  ctx.moveTo(side / 2, 0);
  ctx.lineTo(side / 2, side);
  ctx.moveTo(0, side / 2);
  ctx.lineTo(side, side / 2);
  ctx.stroke();

  for (const obj of objects) {
    const rect = boxToCanvas(obj.box, side);
    ctx.fillStyle = FILL_BY_COLOR[obj.color] ?? "#999999";
    ctx.globalAlpha = 0.75;
    ctx.fillRect(rect.x, rect.y, rect.w, rect.h);
    ctx.globalAlpha = 1.0;
    ctx.lineWidth = obj.index === selected || obj.index === highlight ? 3 : 1;
    ctx.strokeStyle =
      obj.index === selected ? "#1a7f37" : obj.index === highlight ? "#b8860b" : "#333";
    ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
    ctx.fillStyle = "#222";
    ctx.font = "12px sans-serif";
    ctx.fillText(
      `${obj.index}: ${obj.category}`,
      rect.x + 3,
      rect.y + 13,
      Math.max(rect.w - 6, 30),
    );
  }
}

function sparklinePoints(series: number[], width: number, height: number): string {
  if (series.length === 1) {
    return `0,${height - series[0] * height}`;
  }
  const step = width / (series.length - 1);
  return series
    .map((v, i) => `${(i * step).toFixed(1)},${(height - v * height).toFixed(1)}`)
    .join(" ");
}

/**
 * Render one probability bar per object: the verbatim belief value, its
 * round-over-round delta, and a sparkline of the full history.
 */
export function renderBeliefBars(
  root: HTMLElement,
  objects: SceneObject[],
  belief: number[],
  deltas: number[],
  series: (index: number) => number[],
): void {
  root.replaceChildren();
  for (const obj of objects) {
    const value = belief[obj.index];
    const delta = deltas[obj.index];
    const row = document.createElement("div");
    row.className = "belief-row";
    row.dataset.object = String(obj.index);

    const label = document.createElement("span");
    label.className = "belief-label";
    label.textContent = `${obj.index}: ${obj.size} ${obj.color} ${obj.category}`;

    const track = document.createElement("div");
    track.className = "belief-track";
    const fill = document.createElement("div");
    fill.className = "belief-fill";
    fill.style.width = `${(value * 100).toFixed(2)}%`;
    track.appendChild(fill);

    const number = document.createElement("span");
    number.className = "belief-value";
    number.textContent = value.toFixed(4); // exact API value, 4 places shown
    number.title = String(value);

    const deltaSpan = document.createElement("span");
    deltaSpan.className =
      delta > 0 ? "belief-delta up" : delta < 0 ? "belief-delta down" : "belief-delta";
    deltaSpan.textContent =
      delta === 0 ? "·" : `${delta > 0 ? "+" : ""}${delta.toFixed(3)}`;

    const spark = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    spark.setAttribute("width", "60");
    spark.setAttribute("height", "16");
    spark.setAttribute("class", "belief-spark");
    const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
    line.setAttribute("points", sparklinePoints(series(obj.index), 60, 16));
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", "#527de0");
    line.setAttribute("stroke-width", "1.5");
    spark.appendChild(line);

    row.append(label, track, number, deltaSpan, spark);
    root.appendChild(row);
  }
}

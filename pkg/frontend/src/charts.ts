/** Hand-rolled SVG line charts: one <path class="curve"> per series. */

const SVG_NS = "http://www.w3.org/2000/svg";

export interface Series {
  values: number[];
  color: string;
  label: string;
}

export interface ChartOptions {
  width?: number;
  height?: number;
  padding?: number;
}

function scale(values: number[], lo: number, hi: number, outLo: number, outHi: number): number[] {
  const span = hi - lo || 1;
  return values.map((v) => outLo + ((v - lo) / span) * (outHi - outLo));
}

export function pathFor(values: number[], width: number, height: number, padding: number, lo: number, hi: number): string {
  const n = values.length;
  const xs = scale(
    values.map((_, i) => i),
    0,
    Math.max(n - 1, 1),
    padding,
    width - padding,
  );
  const ys = scale(values, lo, hi, height - padding, padding);
  return values.map((_, i) => `${i === 0 ? "M" : "L"}${xs[i].toFixed(2)},${ys[i].toFixed(2)}`).join(" ");
}

/** Replace the chart's curves with one path per series, sharing a y-range. */
export function renderLineChart(svg: SVGSVGElement, series: Series[], options: ChartOptions = {}): void {
  const width = options.width ?? 560;
  const height = options.height ?? 180;
  const padding = options.padding ?? 24;
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  while (svg.firstChild) svg.removeChild(svg.firstChild);

  const axis = document.createElementNS(SVG_NS, "path");
  axis.setAttribute("class", "axis");
  axis.setAttribute("d", `M${padding},${padding} L${padding},${height - padding} L${width - padding},${height - padding}`);
  axis.setAttribute("fill", "none");
  axis.setAttribute("stroke", "#94a3b8");
  svg.appendChild(axis);

  if (series.length === 0) return;
  const all = series.flatMap((s) => s.values);
  const lo = Math.min(...all);
  const hi = Math.max(...all);

  for (const s of series) {
    const path = document.createElementNS(SVG_NS, "path");
    path.setAttribute("class", "curve");
    path.setAttribute("data-label", s.label);
    path.setAttribute("d", pathFor(s.values, width, height, padding, lo, hi));
    path.setAttribute("fill", "none");
    path.setAttribute("stroke", s.color);
    path.setAttribute("stroke-width", "1.5");
    svg.appendChild(path);
  }

  const bounds = document.createElementNS(SVG_NS, "text");
  bounds.setAttribute("class", "y-bounds");
  bounds.setAttribute("x", "2");
  bounds.setAttribute("y", String(padding));
  bounds.setAttribute("font-size", "9");
  bounds.textContent = `${lo.toFixed(1)}..${hi.toFixed(1)}`;
  svg.appendChild(bounds);
}

import type { Scenario } from "./types.js";

/**
 * Column-separated dump of every visible scenario: a step column, then a
 * speed and heart-rate column per scenario, labelled by calorie target.
 */
export function scenariosToCsv(scenarios: readonly Scenario[]): string {
  if (scenarios.length === 0) return "";
  const length = scenarios[0].response.speed_seq.length;
  const header = ["step"];
  for (const s of scenarios) {
    const label = `${s.request.target_calories}`;
    header.push(`speed_${label}`, `heartrate_${label}`);
  }
  const lines = [header.join(",")];
  for (let step = 0; step < length; step++) {
    const row = [String(step)];
    for (const s of scenarios) {
      row.push(String(s.response.speed_seq[step]), String(s.response.heartrate_seq[step]));
    }
    lines.push(row.join(","));
  }
  return lines.join("\n") + "\n";
}

export function downloadCsv(filename: string, content: string): void {
  const blob = new Blob([content], { type: "text/csv" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}

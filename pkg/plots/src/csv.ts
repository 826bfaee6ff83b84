/**
 * Readers for the simulator's run artifacts: the per-step summary CSV and
 * the per-step damage contour CSVs living in one run directory.
 */

import * as fs from "fs";
import * as path from "path";

export interface SummaryRow {
  step: number;
  u: number;
  Fx: number;
  Fy: number;
  dissipation: number;
  dofs: number;
  elements: number;
  elAssemblyTime: number;
  elSolverTime: number;
  pfAssemblyTime: number;
  pfSolverTime: number;
  projectionTime: number;
}

export interface ContourPoint {
  x: number;
  y: number;
}

export interface RunArtifacts {
  name: string;
  dir: string;
  summary: SummaryRow[];
  /** step number -> contour point cloud */
  contours: Map<number, ContourPoint[]>;
}

export class CsvFormatError extends Error {
  constructor(file: string, detail: string) {
    super(`${file}: ${detail}`);
    this.name = "CsvFormatError";
  }
}

const SUMMARY_COLUMNS = [
  "step", "u", "Fx", "Fy", "dissipation", "dofs", "elements",
  "elAssemblyTime", "elSolverTime", "pfAssemblyTime", "pfSolverTime",
  "projectionTime",
];

function parseNumber(file: string, field: string, raw: string): number {
  const v = Number(raw);
  if (!Number.isFinite(v)) {
    throw new CsvFormatError(file, `field ${field} is not a number: ${raw}`);
  }
  return v;
}

export function readSummary(file: string): SummaryRow[] {
  const text = fs.readFileSync(file, "utf8");
  const lines = text.trim().split(/\r?\n/);
  if (lines.length === 0) {
    throw new CsvFormatError(file, "empty file");
  }
  const header = lines[0].split(",");
  for (const col of SUMMARY_COLUMNS) {
    if (!header.includes(col)) {
      throw new CsvFormatError(file, `missing column ${col}`);
    }
  }
  const idx = new Map(header.map((h, i) => [h, i] as const));
  const rows: SummaryRow[] = [];
  for (const line of lines.slice(1)) {
    if (!line.trim()) continue;
    const parts = line.split(",");
    const get = (name: string) =>
      parseNumber(file, name, parts[idx.get(name)!]);
    rows.push({
      step: get("step"),
      u: get("u"),
      Fx: get("Fx"),
      Fy: get("Fy"),
      dissipation: get("dissipation"),
      dofs: get("dofs"),
      elements: get("elements"),
      elAssemblyTime: get("elAssemblyTime"),
      elSolverTime: get("elSolverTime"),
      pfAssemblyTime: get("pfAssemblyTime"),
      pfSolverTime: get("pfSolverTime"),
      projectionTime: get("projectionTime"),
    });
  }
  return rows;
}

export function readContour(file: string): ContourPoint[] {
  const text = fs.readFileSync(file, "utf8");
  const lines = text.trim().split(/\r?\n/);
  const header = lines[0].split(",");
  // contour columns: x at index 1, y at index 2
  if (header[1] !== "x" || header[2] !== "y") {
    throw new CsvFormatError(file, `unexpected header ${lines[0]}`);
  }
  const pts: ContourPoint[] = [];
  for (const line of lines.slice(1)) {
    if (!line.trim()) continue;
    const parts = line.split(",");
    pts.push({
      x: parseNumber(file, "x", parts[1]),
      y: parseNumber(file, "y", parts[2]),
    });
  }
  return pts;
}

/** Load everything plottable from one run directory. */
export function loadRun(dir: string): RunArtifacts {
  const summaryPath = path.join(dir, "summary.csv");
  if (!fs.existsSync(summaryPath)) {
    throw new CsvFormatError(summaryPath, "summary.csv not found");
  }
  const summary = readSummary(summaryPath);
  const contours = new Map<number, ContourPoint[]>();
  for (const entry of fs.readdirSync(dir)) {
    const m = entry.match(/^contour_(\d+)\.csv$/);
    if (m) {
      contours.set(Number(m[1]), readContour(path.join(dir, entry)));
    }
  }
  return { name: path.basename(path.resolve(dir)), dir, summary, contours };
}

/**
 * Figure builders: each returns an SVG string rendered server-side with
 * echarts. Four figure kinds mirror the simulator's standard outputs:
 * reaction force and dissipated energy versus edge displacement, overlaid
 * damage contours colored by load step, and a stacked horizontal bar chart
 * of the CPU-time breakdown (assembly/solver per subproblem + projection).
 */

import * as echarts from "echarts";
import { RunArtifacts } from "./csv";

const WIDTH = 860;
const HEIGHT = 560;

function renderSvg(option: echarts.EChartsCoreOption,
                   width = WIDTH, height = HEIGHT): string {
  const chart = echarts.init(null, undefined, {
    renderer: "svg",
    ssr: true,
    width,
    height,
  });
  chart.setOption(option);
  const svg = chart.renderToSVGString();
  chart.dispose();
  return svg;
}

function baseGrid(xName: string, yName: string) {
  return {
    animation: false,
    grid: { left: 80, right: 180, top: 40, bottom: 60 },
    legend: { orient: "vertical" as const, right: 10, top: "center" },
    xAxis: { type: "value" as const, name: xName, nameLocation: "middle" as const, nameGap: 30 },
    yAxis: { type: "value" as const, name: yName, nameLocation: "middle" as const, nameGap: 55 },
  };
}

export function forcesFigure(runs: RunArtifacts[]): string {
  const series: object[] = [];
  for (const run of runs) {
    series.push({
      name: `${run.name} Fy`,
      type: "line",
      showSymbol: false,
      data: run.summary.map((r) => [r.u, r.Fy]),
    });
    series.push({
      name: `${run.name} Fx`,
      type: "line",
      showSymbol: false,
      lineStyle: { type: "dashed" },
      data: run.summary.map((r) => [r.u, r.Fx]),
    });
  }
  return renderSvg({
    ...baseGrid("edge displacement u [mm]", "reaction force [kN]"),
    series,
  });
}

export function dissipationFigure(runs: RunArtifacts[]): string {
  const series = runs.map((run) => ({
    name: run.name,
    type: "line",
    showSymbol: false,
    data: run.summary.map((r) => [r.u, r.dissipation]),
  }));
  return renderSvg({
    ...baseGrid("edge displacement u [mm]", "dissipated energy [kN mm]"),
    series,
  });
}

export function contoursFigure(runs: RunArtifacts[]): string {
  // overlay the d = 0.5 contours of every step, colored by load step
  const series: object[] = [];
  for (const run of runs) {
    const steps = [...run.contours.keys()].sort((a, b) => a - b);
    const maxStep = steps.length ? steps[steps.length - 1] : 1;
    for (const step of steps) {
      const pts = run.contours.get(step)!;
      if (pts.length === 0) continue;
      const frac = maxStep > 0 ? step / maxStep : 0;
      series.push({
        name: `${run.name}`,
        type: "scatter",
        symbolSize: 2,
        itemStyle: { color: interpolateColor(frac) },
        data: pts.map((p) => [p.x, p.y]),
      });
    }
  }
  return renderSvg({
    animation: false,
    grid: { left: 80, right: 40, top: 40, bottom: 60 },
    xAxis: { type: "value", name: "x [mm]", min: 0, max: 1 },
    yAxis: { type: "value", name: "y [mm]", min: 0, max: 1 },
    series,
  }, 720, 720);
}

function interpolateColor(t: number): string {
  // dark blue -> orange ramp over the load history
  const a = [31, 64, 140];
  const b = [240, 140, 40];
  const c = a.map((v, i) => Math.round(v + (b[i] - v) * t));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}

const CPU_CATEGORIES = [
  ["elAssemblyTime", "elasticity assembly"],
  ["elSolverTime", "elasticity solver"],
  ["pfAssemblyTime", "phase-field assembly"],
  ["pfSolverTime", "phase-field solver"],
  ["projectionTime", "projection"],
] as const;

export function cpuFigure(runs: RunArtifacts[]): string {
  const series = CPU_CATEGORIES.map(([key, label]) => ({
    name: label,
    type: "bar",
    stack: "total",
    data: runs.map((run) =>
      run.summary.reduce((acc, r) => acc + (r as never as Record<string, number>)[key], 0)),
  }));
  return renderSvg({
    animation: false,
    grid: { left: 150, right: 180, top: 40, bottom: 60 },
    legend: { orient: "vertical" as const, right: 10, top: "center" },
    xAxis: { type: "value", name: "CPU wall time [s]" },
    yAxis: { type: "category", data: runs.map((r) => r.name) },
    series,
  });
}

export const FIGURES = {
  forces: forcesFigure,
  dissipation: dissipationFigure,
  contours: contoursFigure,
  cpu: cpuFigure,
} as const;

export type FigureKind = keyof typeof FIGURES;

#!/usr/bin/env node
/**
 * Plot CLI:
 *
 *   thbfrac-plot --runs DIR [DIR...] --out DIR --kind forces|dissipation|contours|cpu|all
 *
 * Reads each run directory's summary/contour CSVs and writes one SVG per
 * requested figure kind. Exits nonzero with a per-file diagnostic when an
 * artifact is missing or malformed.
 */

import * as fs from "fs";
import * as path from "path";
import { CsvFormatError, loadRun, RunArtifacts } from "./csv";
import { FIGURES, FigureKind } from "./figures";

interface Args {
  runs: string[];
  out: string;
  kind: string;
}

export function parseArgs(argv: string[]): Args {
  const args: Args = { runs: [], out: "figures", kind: "all" };
  let i = 0;
  while (i < argv.length) {
    const a = argv[i];
    if (a === "--runs") {
      i += 1;
      while (i < argv.length && !argv[i].startsWith("--")) {
        args.runs.push(argv[i]);
        i += 1;
      }
    } else if (a === "--out") {
      args.out = argv[i + 1];
      i += 2;
    } else if (a === "--kind") {
      args.kind = argv[i + 1];
      i += 2;
    } else {
      throw new Error(`unknown argument: ${a}`);
    }
  }
  if (args.runs.length === 0) {
    throw new Error("at least one --runs directory is required");
  }
  return args;
}

export function makeFigures(runs: RunArtifacts[], outDir: string,
                            kind: string): string[] {
  const kinds: FigureKind[] =
    kind === "all" ? (Object.keys(FIGURES) as FigureKind[]) : [kind as FigureKind];
  for (const k of kinds) {
    if (!(k in FIGURES)) {
      throw new Error(`unknown figure kind: ${k}`);
    }
  }
  fs.mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  for (const k of kinds) {
    const svg = FIGURES[k](runs);
    const file = path.join(outDir, `${k}.svg`);
    fs.writeFileSync(file, svg);
    written.push(file);
  }
  return written;
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  const runs: RunArtifacts[] = [];
  let failed = false;
  for (const dir of args.runs) {
    try {
      runs.push(loadRun(dir));
    } catch (err) {
      if (err instanceof CsvFormatError || (err as NodeJS.ErrnoException).code) {
        console.error(`error reading ${dir}: ${(err as Error).message}`);
        failed = true;
      } else {
        throw err;
      }
    }
  }
  if (failed || runs.length === 0) {
    return 1;
  }
  try {
    const written = makeFigures(runs, args.out, args.kind);
    for (const f of written) {
      console.log(f);
    }
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}

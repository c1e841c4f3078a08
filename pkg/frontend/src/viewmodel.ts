// ============================================================
// View model
//
// Pure layout math for the stage diagrams.  A stage graph is drawn
// as nested rounded rectangles: the root stage is the outermost
// region and each child sits strictly inside its parent, leaving a
// band along the bottom of the parent where the parent's own
// configuration nodes live.  Configuration nodes from a session
// snapshot are placed inside the region of the stage the service
// reported for them; nodes that satisfy no stage land in a gutter
// strip below the diagrams.
//
// Everything in this file is deterministic.  Node coordinates come
// from a hash of the node id, so re-rendering the same snapshot
// always reproduces the same picture.
// ============================================================

import type {
  ConstraintJson,
  SessionSnapshot,
  StageGraphJson,
  StageJson,
} from "./api.js";

export interface Rect {
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface Region {
  stageId: string;
  outputValue: number;
  depth: number;
  rect: Rect;
  // Bounding box of the child regions, or null for a leaf.  The
  // parent's own nodes are drawn between hole.bottom and rect.bottom.
  hole: Rect | null;
  stage: StageJson;
}

export interface DiagramLayout {
  outputValue: number;
  frame: Rect;
  regions: Region[];
  warnings: string[];
}

export interface DiagramSet {
  layouts: DiagramLayout[];
  gutter: Rect;
  width: number;
  height: number;
}

export interface PlacedNode {
  id: string;
  counts: Record<string, number>;
  x: number;
  y: number;
  stageId: string | null;
  outputValue: number | null;
  current: boolean;
}

// ------------------------------------------------------------
// Sizing constants
// ------------------------------------------------------------

const REGION_PAD_X = 22;
const REGION_LABEL_BAND = 26; // title strip at the top of a region
const REGION_NODE_BAND = 44; // strip at the bottom reserved for the region's own nodes
const SIBLING_GAP = 14;
const MIN_REGION_WIDTH = 72;
const MIN_REGION_HEIGHT = 64;
const NODE_MARGIN = 16;

const DIAGRAM_HEIGHT = 330;
const DIAGRAM_GAP = 26;
const GUTTER_GAP = 16;
const GUTTER_HEIGHT = 58;

// ------------------------------------------------------------
// Deterministic jitter
// ------------------------------------------------------------

/** Fold a string to [0, 1) with FNV-1a; stable across reloads. */
export function hashUnit(key: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < key.length; i++) {
    h ^= key.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return (h >>> 0) / 0x1_0000_0000;
}

// ------------------------------------------------------------
// Stage graph layout
// ------------------------------------------------------------

function childrenByStage(graph: StageGraphJson): Map<string, string[]> {
  const children = new Map<string, string[]>();
  for (const stage of graph.stages) {
    children.set(stage.id, []);
  }
  for (const edge of graph.edges) {
    const [parent, child] = edge;
    if (parent === undefined || child === undefined) {
      continue;
    }
    children.get(parent)?.push(child);
  }
  return children;
}

export function rootStageIds(graph: StageGraphJson): string[] {
  const isChild = new Set<string>();
  for (const edge of graph.edges) {
    const child = edge[1];
    if (child !== undefined) {
      isChild.add(child);
    }
  }
  return graph.stages.map((s) => s.id).filter((id) => !isChild.has(id));
}

export function layoutStageGraph(graph: StageGraphJson, frame: Rect): DiagramLayout {
  const children = childrenByStage(graph);
  const byId = new Map(graph.stages.map((s) => [s.id, s]));
  const regions: Region[] = [];
  const warnings: string[] = [];
  const seen = new Set<string>();

  const placeOne = (stageId: string, rect: Rect, depth: number): void => {
    const stage = byId.get(stageId);
    if (stage === undefined || seen.has(stageId)) {
      return;
    }
    seen.add(stageId);
    if (rect.width < MIN_REGION_WIDTH || rect.height < MIN_REGION_HEIGHT) {
      warnings.push(`region for stage ${stageId} is below minimum size and may overlap`);
    }
    const kidIds = (children.get(stageId) ?? []).filter((id) => byId.has(id));
    let hole: Rect | null = null;
    if (kidIds.length > 0) {
      hole = {
        x: rect.x + REGION_PAD_X,
        y: rect.y + REGION_LABEL_BAND,
        width: rect.width - 2 * REGION_PAD_X,
        height: rect.height - REGION_LABEL_BAND - REGION_NODE_BAND,
      };
    }
    regions.push({ stageId, outputValue: graph.output_value, depth, rect, hole, stage });
    if (hole === null) {
      return;
    }
    if (kidIds.length === 1) {
      placeOne(kidIds[0]!, hole, depth + 1);
    } else {
      // Not a chain: fall back to a side-by-side tree layout.
      warnings.push(`stage ${stageId} has ${kidIds.length} children; using a tree layout`);
      placeSiblings(kidIds, hole, depth + 1);
    }
  };

  const placeSiblings = (stageIds: string[], rect: Rect, depth: number): void => {
    const n = stageIds.length;
    const slotWidth = (rect.width - (n - 1) * SIBLING_GAP) / n;
    stageIds.forEach((stageId, index) => {
      placeOne(
        stageId,
        {
          x: rect.x + index * (slotWidth + SIBLING_GAP),
          y: rect.y,
          width: slotWidth,
          height: rect.height,
        },
        depth,
      );
    });
  };

  const roots = rootStageIds(graph);
  if (roots.length === 0 && graph.stages.length > 0) {
    warnings.push("stage graph has no root; drawing stages side by side");
    placeSiblings(
      graph.stages.map((s) => s.id),
      frame,
      0,
    );
  } else if (roots.length === 1) {
    placeOne(roots[0]!, frame, 0);
  } else if (roots.length > 1) {
    warnings.push(`stage graph has ${roots.length} roots; using a tree layout`);
    placeSiblings(roots, frame, 0);
  }

  // Anything unreachable from a root still deserves a box so the
  // picture never silently drops a stage.
  const leftovers = graph.stages.map((s) => s.id).filter((id) => !seen.has(id));
  if (leftovers.length > 0) {
    warnings.push(`${leftovers.length} stage(s) unreachable from the root; drawn in the gutter row`);
    const strip: Rect = {
      x: frame.x,
      y: frame.y + frame.height - MIN_REGION_HEIGHT,
      width: frame.width,
      height: MIN_REGION_HEIGHT,
    };
    placeSiblings(leftovers, strip, 0);
  }

  return { outputValue: graph.output_value, frame, regions, warnings };
}

/** The deepest region of a layout; ties break toward the first one placed. */
export function innermostRegion(layout: DiagramLayout): Region | null {
  let best: Region | null = null;
  for (const region of layout.regions) {
    if (best === null || region.depth > best.depth) {
      best = region;
    }
  }
  return best;
}

export function layoutDiagrams(graphs: StageGraphJson[], width = 860): DiagramSet {
  const n = Math.max(graphs.length, 1);
  const columnWidth = (width - (n - 1) * DIAGRAM_GAP) / n;
  const layouts = graphs.map((graph, index) =>
    layoutStageGraph(graph, {
      x: index * (columnWidth + DIAGRAM_GAP),
      y: 0,
      width: columnWidth,
      height: DIAGRAM_HEIGHT,
    }),
  );
  const gutter: Rect = {
    x: 0,
    y: DIAGRAM_HEIGHT + GUTTER_GAP,
    width,
    height: GUTTER_HEIGHT,
  };
  return { layouts, gutter, width, height: gutter.y + gutter.height };
}

// ------------------------------------------------------------
// Node placement
// ------------------------------------------------------------

function regionById(set: DiagramSet, graphIndex: number, stageId: string): Region | null {
  const layout = set.layouts[graphIndex];
  if (layout === undefined) {
    return null;
  }
  return layout.regions.find((r) => r.stageId === stageId) ?? null;
}

function nodeSpot(region: Region, nodeId: string): { x: number; y: number } {
  const rect = region.rect;
  const u = hashUnit(`${nodeId}@${region.stageId}`);
  const v = hashUnit(`${nodeId}@${region.stageId}#y`);
  const x = rect.x + NODE_MARGIN + u * Math.max(rect.width - 2 * NODE_MARGIN, 1);
  if (region.hole !== null) {
    // Own band: between the children's bounding box and our bottom edge.
    const top = region.hole.y + region.hole.height;
    const bottom = rect.y + rect.height;
    const y = top + 10 + v * Math.max(bottom - top - 20, 1);
    return { x, y };
  }
  const top = rect.y + REGION_LABEL_BAND;
  const bottom = rect.y + rect.height;
  const y = top + 10 + v * Math.max(bottom - top - 20, 1);
  return { x, y };
}

export function placeSessionNodes(snapshot: SessionSnapshot, set: DiagramSet): PlacedNode[] {
  const currentId = snapshot.run[snapshot.cursor];
  const placed: PlacedNode[] = [];
  for (const node of snapshot.nodes) {
    let region: Region | null = null;
    let outputValue: number | null = null;
    for (let gi = 0; gi < node.placements.length; gi++) {
      const stageId = node.placements[gi];
      if (stageId !== undefined && stageId !== null) {
        region = regionById(set, gi, stageId);
        if (region !== null) {
          outputValue = region.outputValue;
          break;
        }
      }
    }
    if (region !== null) {
      const { x, y } = nodeSpot(region, node.id);
      placed.push({
        id: node.id,
        counts: node.counts,
        x,
        y,
        stageId: region.stageId,
        outputValue,
        current: node.id === currentId,
      });
    } else {
      const u = hashUnit(`${node.id}@gutter`);
      placed.push({
        id: node.id,
        counts: node.counts,
        x: set.gutter.x + NODE_MARGIN + u * Math.max(set.gutter.width - 2 * NODE_MARGIN, 1),
        y: set.gutter.y + set.gutter.height / 2 + 8,
        stageId: null,
        outputValue: null,
        current: node.id === currentId,
      });
    }
  }
  return placed;
}

// ------------------------------------------------------------
// Text labels
// ------------------------------------------------------------

function linearTerms(coeffs: Record<string, number>): string {
  const parts: string[] = [];
  for (const [state, weight] of Object.entries(coeffs)) {
    if (weight === 0) {
      continue;
    }
    const magnitude = Math.abs(weight);
    const term = magnitude === 1 ? `C(${state})` : `${magnitude}·C(${state})`;
    if (parts.length === 0) {
      parts.push(weight < 0 ? `-${term}` : term);
    } else {
      parts.push(weight < 0 ? `- ${term}` : `+ ${term}`);
    }
  }
  return parts.length === 0 ? "0" : parts.join(" ");
}

export function constraintLabel(constraint: ConstraintJson): string {
  const op = constraint.op === "<=" ? "≤" : constraint.op === ">=" ? "≥" : constraint.op;
  return `${linearTerms(constraint.coeffs)} ${op} ${constraint.const}`;
}

export function certificateLabel(weights: Record<string, number>): string {
  return linearTerms(weights);
}

export function countsLabel(counts: Record<string, number>): string {
  const states = Object.keys(counts).sort();
  const parts: string[] = [];
  for (const state of states) {
    const count = counts[state] ?? 0;
    if (count === 0) {
      continue;
    }
    parts.push(count === 1 ? state : `${count}·${state}`);
  }
  return `{${parts.join(", ")}}`;
}

export function speedLabel(speed: string | null): string {
  return speed ?? "–";
}

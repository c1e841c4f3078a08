// ============================================================
// Rendering
//
// Builds SVG for the nested stage diagrams and plain DOM for the
// stage panel, agent chips, warnings, and toasts.  No state lives
// here; callers pass everything in and re-render on change, so the
// same snapshot always produces the same markup.
// ============================================================

import type { SessionEdgeJson, StageDetail } from "./api.js";
import type { DiagramSet, PlacedNode } from "./viewmodel.js";
import {
  certificateLabel,
  constraintLabel,
  countsLabel,
  speedLabel,
} from "./viewmodel.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl<K extends keyof SVGElementTagNameMap>(
  name: K,
  attrs: Record<string, string | number> = {},
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, name);
  for (const [key, value] of Object.entries(attrs)) {
    el.setAttribute(key, String(value));
  }
  return el;
}

export interface DiagramHandlers {
  onStageClick?: (outputValue: number, stageId: string) => void;
}

export function renderDiagrams(
  svg: SVGSVGElement,
  set: DiagramSet,
  nodes: PlacedNode[],
  edges: SessionEdgeJson[],
  selectedStageId: string | null,
  handlers: DiagramHandlers = {},
): void {
  svg.setAttribute("viewBox", `0 0 ${set.width} ${set.height}`);
  svg.replaceChildren();

  const defs = svgEl("defs");
  const marker = svgEl("marker", {
    id: "arrow",
    viewBox: "0 0 8 8",
    refX: 7,
    refY: 4,
    markerWidth: 6,
    markerHeight: 6,
    orient: "auto-start-reverse",
  });
  marker.append(svgEl("path", { d: "M 0 0 L 8 4 L 0 8 z", fill: "#5a5f6a" }));
  defs.append(marker);
  svg.append(defs);

  for (const layout of set.layouts) {
    const group = svgEl("g", { class: "diagram", "data-output-value": layout.outputValue });
    const title = svgEl("text", {
      class: "diagram-title",
      x: layout.frame.x + 4,
      y: layout.frame.y - 6,
    });
    title.textContent = `output ${layout.outputValue}`;
    group.append(title);

    // Outer regions first so inner ones paint on top and stay clickable.
    const ordered = [...layout.regions].sort((a, b) => a.depth - b.depth);
    for (const region of ordered) {
      const rect = svgEl("rect", {
        class: region.stageId === selectedStageId ? "region selected" : "region",
        x: region.rect.x,
        y: region.rect.y,
        width: region.rect.width,
        height: region.rect.height,
        rx: 14,
        "data-stage-id": region.stageId,
        "data-depth": region.depth,
      });
      const label = svgEl("text", {
        class: "region-label",
        x: region.rect.x + 10,
        y: region.rect.y + 17,
        "data-stage-id": region.stageId,
      });
      const speed = region.stage.speed;
      label.textContent = speed === null ? region.stageId : `${region.stageId}  ${speed}`;
      const pick = () => handlers.onStageClick?.(region.outputValue, region.stageId);
      rect.addEventListener("click", pick);
      label.addEventListener("click", pick);
      group.append(rect, label);
    }
    svg.append(group);
  }

  const gutter = svgEl("g", { class: "gutter" });
  gutter.append(
    svgEl("rect", {
      class: "gutter-box",
      x: set.gutter.x,
      y: set.gutter.y,
      width: set.gutter.width,
      height: set.gutter.height,
      rx: 10,
    }),
  );
  const gutterLabel = svgEl("text", {
    class: "gutter-label",
    x: set.gutter.x + 10,
    y: set.gutter.y + 16,
  });
  gutterLabel.textContent = "outside every stage graph";
  gutter.append(gutterLabel);
  svg.append(gutter);

  const spotById = new Map(nodes.map((n) => [n.id, n]));
  const edgeGroup = svgEl("g", { class: "edges" });
  for (const edge of edges) {
    const a = spotById.get(edge.from);
    const b = spotById.get(edge.to);
    if (a === undefined || b === undefined) {
      continue;
    }
    const line = svgEl("line", {
      class: "edge",
      x1: a.x,
      y1: a.y,
      x2: b.x,
      y2: b.y,
      "marker-end": "url(#arrow)",
      "data-transition": edge.transition,
    });
    const text = svgEl("text", {
      class: "edge-label",
      x: (a.x + b.x) / 2 + 4,
      y: (a.y + b.y) / 2 - 4,
    });
    text.textContent = edge.transition;
    edgeGroup.append(line, text);
  }
  svg.append(edgeGroup);

  const nodeGroup = svgEl("g", { class: "nodes" });
  for (const node of nodes) {
    const circle = svgEl("circle", {
      class: node.current ? "config-node current" : "config-node",
      cx: node.x,
      cy: node.y,
      r: node.current ? 9 : 6,
      "data-node-id": node.id,
      "data-stage-id": node.stageId ?? "",
    });
    const tip = svgEl("title");
    tip.textContent = `${node.id} ${countsLabel(node.counts)}`;
    circle.append(tip);
    nodeGroup.append(circle);
  }
  svg.append(nodeGroup);
}

// ------------------------------------------------------------
// Stage panel
// ------------------------------------------------------------

function panelRow(dl: HTMLDListElement, term: string, value: string, className?: string): void {
  const dt = document.createElement("dt");
  dt.textContent = term;
  const dd = document.createElement("dd");
  dd.textContent = value;
  if (className !== undefined) {
    dd.className = className;
  }
  dl.append(dt, dd);
}

export function renderStagePanel(panel: HTMLElement, detail: StageDetail | null): void {
  panel.replaceChildren();
  if (detail === null) {
    const hint = document.createElement("p");
    hint.className = "hint";
    hint.textContent = "Click a stage to inspect it.";
    panel.append(hint);
    return;
  }

  const heading = document.createElement("h3");
  const badges: string[] = [];
  if (detail.terminal) {
    badges.push("terminal");
  }
  if (detail.incomplete) {
    badges.push("incomplete");
  }
  heading.textContent = badges.length > 0 ? `${detail.id} (${badges.join(", ")})` : detail.id;
  panel.append(heading);

  const dl = document.createElement("dl");
  for (const constraint of detail.constraints) {
    panelRow(dl, "constraint", constraintLabel(constraint));
  }
  panelRow(
    dl,
    "certificate",
    detail.certificate === null ? "none" : certificateLabel(detail.certificate.weights),
  );
  if (detail.certificate_value !== null && detail.config !== null) {
    panelRow(dl, `value at ${countsLabel(detail.config)}`, String(detail.certificate_value), "cert-value");
  }
  if (detail.config !== null && detail.config_in_stage !== null) {
    panelRow(dl, "configuration in stage", detail.config_in_stage ? "yes" : "no");
  }
  panelRow(dl, "dead", detail.dead.length > 0 ? detail.dead.join(", ") : "none");
  panelRow(
    dl,
    "eventually dead",
    detail.eventually_dead.length > 0 ? detail.eventually_dead.join(", ") : "none",
  );
  panelRow(dl, "speed", speedLabel(detail.speed));
  if (detail.witness !== null) {
    panelRow(dl, "witness", countsLabel(detail.witness));
  }
  panel.append(dl);
}

// ------------------------------------------------------------
// Agent chips
// ------------------------------------------------------------

export function renderChips(
  host: HTMLElement,
  counts: Record<string, number>,
  selected: string[],
  onPick: (chipKey: string) => void,
): void {
  host.replaceChildren();
  const states = Object.keys(counts).sort();
  for (const state of states) {
    const count = counts[state] ?? 0;
    if (count === 0) {
      continue;
    }
    const group = document.createElement("span");
    group.className = "chip-group";
    const label = document.createElement("span");
    label.className = "chip-state";
    label.textContent = `${state}:`;
    group.append(label);
    for (let i = 0; i < count; i++) {
      const key = `${state}#${i}`;
      const chip = document.createElement("button");
      chip.type = "button";
      chip.className = selected.includes(key) ? "chip selected" : "chip";
      chip.dataset["chip"] = key;
      chip.textContent = state;
      chip.addEventListener("click", () => onPick(key));
      group.append(chip);
    }
    host.append(group);
  }
}

// ------------------------------------------------------------
// Warnings and toasts
// ------------------------------------------------------------

export function renderWarnings(host: HTMLElement, warnings: string[]): void {
  host.replaceChildren();
  if (warnings.length === 0) {
    return;
  }
  const list = document.createElement("ul");
  list.className = "warnings";
  for (const warning of warnings) {
    const item = document.createElement("li");
    item.textContent = warning;
    list.append(item);
  }
  host.append(list);
}

export function toast(host: HTMLElement, message: string, ttlMs = 4000): void {
  const el = document.createElement("div");
  el.className = "toast";
  el.textContent = message;
  host.append(el);
  setTimeout(() => {
    el.remove();
  }, ttlMs);
}

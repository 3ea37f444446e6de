import type { TaskNode } from "./types.js";

/**
 * Column index per task: 0 for tasks with no dependencies, otherwise one
 * past the deepest dependency. Computed from the plan's edges alone so
 * the drawing is independent of the order events arrived in.
 */
export function layerOf(nodes: TaskNode[]): Record<string, number> {
  const known = new Set(nodes.map((n) => n.task_id));
  const layers: Record<string, number> = {};
  for (const node of nodes) {
    layers[node.task_id] = 0;
  }
  // Plans are acyclic, so |nodes| relaxation rounds reach a fixed point.
  for (let round = 0; round < nodes.length; round += 1) {
    let changed = false;
    for (const node of nodes) {
      let depth = 0;
      for (const dep of node.depends_on) {
        if (!known.has(dep)) continue;
        depth = Math.max(depth, (layers[dep] ?? 0) + 1);
      }
      if (depth !== layers[node.task_id]) {
        layers[node.task_id] = depth;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return layers;
}

/** Tasks grouped by layer, each column sorted by task id. */
export function layerColumns(nodes: TaskNode[]): string[][] {
  const layers = layerOf(nodes);
  const depth = nodes.length ? Math.max(...Object.values(layers)) + 1 : 0;
  const columns: string[][] = Array.from({ length: depth }, () => []);
  for (const node of nodes) {
    columns[layers[node.task_id] ?? 0]?.push(node.task_id);
  }
  for (const column of columns) {
    column.sort();
  }
  return columns;
}

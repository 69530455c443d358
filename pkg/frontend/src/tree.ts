/**
 * History-tree presentation math: tidy node layout plus the pan/zoom
 * viewport, including the auto-centering applied when a node is selected.
 *
 * World coordinates are layout units; screen = world * zoom + pan.
 */

import type { TileTreeDoc } from "./api.js";

export interface NodePosition {
  x: number;
  y: number;
  depth: number;
}

export interface LayoutOptions {
  levelGap: number;
  siblingGap: number;
}

export const DEFAULT_LAYOUT: LayoutOptions = { levelGap: 90, siblingGap: 64 };

/**
 * Tidy top-down layout: depth fixes y, leaves take consecutive columns in
 * traversal order, and every parent sits centered over its children.
 * Children keep their document order, so sibling order is stable across
 * re-layouts.
 */
export function layoutTree(
  tree: TileTreeDoc,
  opts: LayoutOptions = DEFAULT_LAYOUT,
): Map<string, NodePosition> {
  const byId = new Map(tree.nodes.map((n) => [n.node_id, n]));
  const positions = new Map<string, NodePosition>();
  let nextLeafColumn = 0;

  const place = (nodeId: string, depth: number): number => {
    const node = byId.get(nodeId);
    if (!node) throw new Error(`tree references unknown node ${nodeId}`);
    let x: number;
    if (node.children.length === 0) {
      x = nextLeafColumn * opts.siblingGap;
      nextLeafColumn += 1;
    } else {
      const childXs = node.children.map((child) => place(child, depth + 1));
      x = (childXs[0]! + childXs[childXs.length - 1]!) / 2;
    }
    positions.set(nodeId, { x, y: depth * opts.levelGap, depth });
    return x;
  };

  place(tree.root_id, 0);
  return positions;
}

export interface Viewport {
  panX: number;
  panY: number;
  zoom: number;
}

export const MIN_ZOOM = 0.25;
export const MAX_ZOOM = 4.0;

export function worldToScreen(vp: Viewport, world: [number, number]): [number, number] {
  return [world[0] * vp.zoom + vp.panX, world[1] * vp.zoom + vp.panY];
}

export function screenToWorld(vp: Viewport, screen: [number, number]): [number, number] {
  return [(screen[0] - vp.panX) / vp.zoom, (screen[1] - vp.panY) / vp.zoom];
}

/** Pan (zoom untouched) so a world point lands on the canvas center. */
export function centerOn(
  vp: Viewport,
  world: [number, number],
  canvasWidth: number,
  canvasHeight: number,
): Viewport {
  return {
    zoom: vp.zoom,
    panX: canvasWidth / 2 - world[0] * vp.zoom,
    panY: canvasHeight / 2 - world[1] * vp.zoom,
  };
}

export function panBy(vp: Viewport, dx: number, dy: number): Viewport {
  return { ...vp, panX: vp.panX + dx, panY: vp.panY + dy };
}

/**
 * Scale about a screen-space anchor (the cursor): the world point under
 * the anchor stays under it at the new zoom. Zoom is clamped to
 * [MIN_ZOOM, MAX_ZOOM].
 */
export function zoomAt(vp: Viewport, anchor: [number, number], factor: number): Viewport {
  const zoom = Math.min(Math.max(vp.zoom * factor, MIN_ZOOM), MAX_ZOOM);
  const world = screenToWorld(vp, anchor);
  return {
    zoom,
    panX: anchor[0] - world[0] * zoom,
    panY: anchor[1] - world[1] * zoom,
  };
}

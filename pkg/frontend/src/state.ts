/**
 * Editor state and its transitions, kept as pure functions over plain
 * data so every invariant is testable without a DOM.
 *
 * Invariants:
 *  - the editor is either in the global canvas view or in the detail view
 *    of exactly one tile;
 *  - brush modes exist only in the detail view, and exactly one of the
 *    four is active there (sketching, or one of the three region brushes);
 *  - selecting a history node replaces the working inputs wholesale with
 *    that node's inputs: scene text, seed, strength, and the full region
 *    list, never a merge.
 */

import type { RegionDoc, TileInputsDoc, WireBrush } from "./api.js";

export type View = { kind: "global" } | { kind: "detail"; tileId: string };

export type BrushMode = "sketch" | "pencil-region" | "hull-region" | "lasso-region";

export const BRUSH_MODES: readonly BrushMode[] = [
  "sketch",
  "pencil-region",
  "hull-region",
  "lasso-region",
];

/** The wire name the engine expects for a region-capturing brush mode. */
export function wireBrush(mode: BrushMode): WireBrush {
  switch (mode) {
    case "pencil-region":
      return "pencil";
    case "hull-region":
      return "hull";
    case "lasso-region":
      return "lasso";
    case "sketch":
      throw new Error("the sketch brush paints pixels, not regions");
  }
}

export interface EditorState {
  view: View;
  /** Meaningful only in the detail view; exactly one mode is active there. */
  brush: BrushMode;
  /** Region the region brushes append strokes to; null before the first add. */
  activeRegionId: string | null;
  sceneText: string;
  seed: number | null;
  strength: number;
  regions: RegionDoc[];
  sketchPresent: boolean;
}

export function initialState(): EditorState {
  return {
    view: { kind: "global" },
    brush: "sketch",
    activeRegionId: null,
    sceneText: "",
    seed: null,
    strength: 0.65,
    regions: [],
    sketchPresent: false,
  };
}

export function enterDetail(state: EditorState, tileId: string): EditorState {
  return { ...state, view: { kind: "detail", tileId }, brush: "sketch" };
}

export function exitToGlobal(state: EditorState): EditorState {
  return { ...state, view: { kind: "global" }, activeRegionId: null };
}

export function setBrush(state: EditorState, mode: BrushMode): EditorState {
  if (state.view.kind !== "detail") {
    throw new Error("brush modes exist only in the detail view");
  }
  return { ...state, brush: mode };
}

export function selectRegion(state: EditorState, regionId: string): EditorState {
  if (!state.regions.some((r) => r.region_id === regionId)) {
    throw new Error(`unknown region ${regionId}`);
  }
  return { ...state, activeRegionId: regionId };
}

/**
 * Replace the working inputs with a tile's inputs document, exactly:
 * the scene text, seed, strength, and region list become the node's own.
 * A dangling active-region selection is dropped rather than remapped.
 */
export function hydrateFromInputs(state: EditorState, inputs: TileInputsDoc): EditorState {
  const regions = inputs.regions.map((region) => ({
    region_id: region.region_id,
    color: [...region.color] as [number, number, number],
    description: region.description,
    actions: region.actions.map((action) => ({
      brush: action.brush,
      points: action.points.map((p) => [...p] as [number, number]),
      ...(action.stroke_width === undefined ? {} : { stroke_width: action.stroke_width }),
    })),
  }));
  const activeRegionId = regions.some((r) => r.region_id === state.activeRegionId)
    ? state.activeRegionId
    : null;
  return {
    ...state,
    sceneText: inputs.scene_prompt,
    seed: inputs.seed,
    strength: inputs.strength,
    regions,
    sketchPresent: inputs.sketch !== null,
    activeRegionId,
  };
}

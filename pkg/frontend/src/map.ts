/**
 * Schematic site map: a 2D cross, not a geographic map.
 *
 * The site frames live on fixed world coordinates (checkpoint at the origin,
 * one gate 100 m out along each axis). Asset markers are pure projections of
 * streamed telemetry x/y — the world coordinates are carried through
 * unchanged so a marker is always traceable to one telemetry message.
 */

import type { AssetRecord } from "./types.js";

export const SITE_FRAMES: Record<string, readonly [number, number]> = {
  FRAME_Checkpoint: [0, 0],
  FRAME_NorthGate: [0, 100],
  FRAME_EastGate: [100, 0],
  FRAME_SouthGate: [0, -100],
  FRAME_WestGate: [-100, 0],
};

/** World half-extent rendered; slightly beyond the gates so markers never clip. */
export const WORLD_EXTENT = 120;

export const MAP_SIZE = 480;

export interface MapPoint {
  px: number;
  py: number;
}

/** World (x, y) -> pixel coordinates; screen y grows downward. */
export function project(x: number, y: number, size: number = MAP_SIZE): MapPoint {
  return {
    px: ((x + WORLD_EXTENT) / (2 * WORLD_EXTENT)) * size,
    py: ((WORLD_EXTENT - y) / (2 * WORLD_EXTENT)) * size,
  };
}

export function unproject(px: number, py: number, size: number = MAP_SIZE): { x: number; y: number } {
  return {
    x: (px / size) * 2 * WORLD_EXTENT - WORLD_EXTENT,
    y: WORLD_EXTENT - (py / size) * 2 * WORLD_EXTENT,
  };
}

export interface FrameAnchor extends MapPoint {
  name: string;
  /** Short label: "North", "East", ... or "CP" for the checkpoint. */
  label: string;
}

export function siteAnchors(size: number = MAP_SIZE): FrameAnchor[] {
  return Object.entries(SITE_FRAMES).map(([name, [x, y]]) => ({
    name,
    label: name === "FRAME_Checkpoint" ? "CP" : name.replace("FRAME_", "").replace("Gate", ""),
    ...project(x, y, size),
  }));
}

export interface Segment {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

/** The cross itself: one spoke from the checkpoint to each gate. */
export function crossSegments(size: number = MAP_SIZE): Segment[] {
  const center = project(0, 0, size);
  return Object.entries(SITE_FRAMES)
    .filter(([name]) => name !== "FRAME_Checkpoint")
    .map(([, [x, y]]) => {
      const p = project(x, y, size);
      return { x1: center.px, y1: center.py, x2: p.px, y2: p.py };
    });
}

export interface MarkerView extends MapPoint {
  name: string;
  kind: string;
  frame: string;
  status: string;
  battery: number;
  worldX: number;
  worldY: number;
  inTransit: boolean;
  unavailable: boolean;
}

export function markersFrom(
  assets: Record<string, AssetRecord>,
  size: number = MAP_SIZE,
): MarkerView[] {
  return Object.values(assets)
    .sort((a, b) => a.name.localeCompare(b.name))
    .map((asset) => ({
      name: asset.name,
      kind: asset.kind,
      frame: asset.frame,
      status: asset.status,
      battery: asset.battery,
      worldX: asset.x,
      worldY: asset.y,
      inTransit: asset.frame === "in_transit",
      unavailable: asset.status === "unavailable",
      ...project(asset.x, asset.y, size),
    }));
}

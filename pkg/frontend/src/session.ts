/** Client-side editing state for one tile.
 *
 * Everything stays in the browser until an explicit save; the session tracks
 * the last-saved point list so `dirty` means exactly "working list differs
 * from what the server has under our revision".
 */

import { imageToScreen, Vec2, Viewport } from "./transform.js";

export type LabelValue = "cow" | "no cow";

export interface TileAnnotations {
  points: Vec2[];
  label: LabelValue;
  revision: number;
  width: number;
  height: number;
}

export interface SaveBody {
  points: { x: number; y: number }[];
  label: LabelValue;
  revision: number;
}

/** Clicks within this many *screen* pixels of a marker remove it. */
export const HIT_RADIUS_PX = 6;

function copyPoints(points: readonly Vec2[]): Vec2[] {
  return points.map((p) => ({ x: p.x, y: p.y }));
}

export class AnnotationSession {
  readonly tileId: string;
  readonly width: number;
  readonly height: number;
  revision: number;
  private working: Vec2[];
  private saved: Vec2[];

  constructor(tileId: string, remote: TileAnnotations) {
    this.tileId = tileId;
    this.width = remote.width;
    this.height = remote.height;
    this.revision = remote.revision;
    this.saved = copyPoints(remote.points);
    this.working = copyPoints(remote.points);
  }

  get points(): readonly Vec2[] {
    return this.working;
  }

  /** The label is fully determined by the point list: any point means "cow". */
  get label(): LabelValue {
    return this.working.length > 0 ? "cow" : "no cow";
  }

  get dirty(): boolean {
    if (this.working.length !== this.saved.length) return true;
    return this.working.some(
      (p, i) => p.x !== this.saved[i].x || p.y !== this.saved[i].y,
    );
  }

  /** Add a point in image coordinates; rejects positions outside the image. */
  addPoint(p: Vec2): void {
    if (!(p.x >= 0 && p.x < this.width && p.y >= 0 && p.y < this.height)) {
      throw new RangeError(
        `point (${p.x}, ${p.y}) outside ${this.width}x${this.height} image`,
      );
    }
    this.working.push({ x: p.x, y: p.y });
  }

  /**
   * Remove the marker nearest to a screen position, if any lies within
   * `radius` screen pixels under the current view. Returns whether one went.
   */
  removeAtScreen(screen: Vec2, view: Viewport, radius = HIT_RADIUS_PX): boolean {
    let bestIndex = -1;
    let bestDistance = radius;
    this.working.forEach((p, i) => {
      const s = imageToScreen(view, p);
      const d = Math.hypot(s.x - screen.x, s.y - screen.y);
      if (d <= bestDistance) {
        bestDistance = d;
        bestIndex = i;
      }
    });
    if (bestIndex < 0) return false;
    this.working.splice(bestIndex, 1);
    return true;
  }

  /** The "no cow" button: clears every working point (label follows). */
  markNoCow(): void {
    this.working = [];
  }

  saveBody(): SaveBody {
    return {
      points: copyPoints(this.working),
      label: this.label,
      revision: this.revision,
    };
  }

  /** A save went through: the working list becomes the saved baseline. */
  applySaved(revision: number): void {
    this.revision = revision;
    this.saved = copyPoints(this.working);
  }

  /**
   * Conflict resolution, "keep mine": adopt the remote revision as the new
   * baseline but keep the local working list, so a second save overwrites.
   */
  rebaseOnto(remote: TileAnnotations): void {
    this.revision = remote.revision;
    this.saved = copyPoints(remote.points);
  }

  /** Conflict resolution, "take theirs": discard local edits entirely. */
  resetTo(remote: TileAnnotations): void {
    this.revision = remote.revision;
    this.saved = copyPoints(remote.points);
    this.working = copyPoints(remote.points);
  }
}

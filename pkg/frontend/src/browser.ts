/** Tile list state: selection, unlabeled-only filter, wrap-around navigation. */

export interface TileSummary {
  id: string;
  labeled: boolean;
  count: number;
  label: string;
  split: string;
  revision: number;
  width: number;
  height: number;
}

export class TileBrowser {
  private tiles: TileSummary[] = [];
  private selectedId: string | null = null;
  filterUnlabeled = false;

  setTiles(tiles: readonly TileSummary[]): void {
    this.tiles = [...tiles];
    if (this.selectedId !== null && !this.tiles.some((t) => t.id === this.selectedId)) {
      this.selectedId = null;
    }
  }

  /** Tiles the list should show under the current filter. */
  get visible(): TileSummary[] {
    return this.filterUnlabeled
      ? this.tiles.filter((t) => !t.labeled)
      : [...this.tiles];
  }

  get selected(): TileSummary | null {
    return this.tiles.find((t) => t.id === this.selectedId) ?? null;
  }

  select(id: string): TileSummary | null {
    const tile = this.tiles.find((t) => t.id === id) ?? null;
    if (tile !== null) this.selectedId = id;
    return tile;
  }

  /** Step through the visible list, wrapping at the ends. */
  next(): TileSummary | null {
    return this.step(+1);
  }

  prev(): TileSummary | null {
    return this.step(-1);
  }

  private step(direction: 1 | -1): TileSummary | null {
    const visible = this.visible;
    if (visible.length === 0) return null;
    const at = visible.findIndex((t) => t.id === this.selectedId);
    const target =
      at < 0
        ? direction > 0
          ? visible[0]
          : visible[visible.length - 1]
        : visible[(at + direction + visible.length) % visible.length];
    this.selectedId = target.id;
    return target;
  }

  /** Reflect a successful save without refetching the whole list. */
  applySaved(id: string, count: number, revision: number): void {
    const tile = this.tiles.find((t) => t.id === id);
    if (tile === undefined) return;
    tile.labeled = true;
    tile.count = count;
    tile.revision = revision;
    tile.label = count > 0 ? "cow" : "no cow";
  }
}

/** Bounded undo stack of mask snapshots; undo restores the exact bitmap. */

export class UndoStack {
  private readonly snapshots: Uint8Array[] = [];

  constructor(readonly capacity: number = 32) {
    if (capacity < 20) {
      throw new Error(`undo capacity must be at least 20, got ${capacity}`);
    }
  }

  get depth(): number {
    return this.snapshots.length;
  }

  get canUndo(): boolean {
    return this.snapshots.length > 0;
  }

  push(snapshot: Uint8Array): void {
    this.snapshots.push(snapshot.slice());
    if (this.snapshots.length > this.capacity) {
      this.snapshots.shift();
    }
  }

  pop(): Uint8Array | null {
    return this.snapshots.pop() ?? null;
  }

  clear(): void {
    this.snapshots.length = 0;
  }
}

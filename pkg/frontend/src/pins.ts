import type { WhatIfRequest, WhatIfResponse } from "./types";

/** A saved scenario: the request that produced a view plus its provenance.
 * Replaying the request with the stored seed reproduces the identical view. */
export interface PinnedScenario {
  id: number;
  pinned_at: string;
  request: WhatIfRequest;
  model_id: string;
  seed: number;
}

export interface PinResult {
  entry: PinnedScenario;
  evicted: PinnedScenario[];
}

interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const KEY = "ctvae.pinned.v1";

export class PinStore {
  constructor(
    private readonly storage: StorageLike,
    private readonly maxEntries: number = 20,
  ) {}

  list(): PinnedScenario[] {
    const raw = this.storage.getItem(KEY);
    if (!raw) return [];
    try {
      return JSON.parse(raw) as PinnedScenario[];
    } catch {
      return [];
    }
  }

  /** Save a scenario; the oldest entries are evicted when the list is full. */
  pin(request: WhatIfRequest, response: WhatIfResponse): PinResult {
    const entries = this.list();
    const entry: PinnedScenario = {
      id: entries.length ? Math.max(...entries.map((e) => e.id)) + 1 : 1,
      pinned_at: new Date().toISOString(),
      // replay must use the seed the server actually used
      request: { ...request, seed: response.provenance.seed },
      model_id: response.provenance.model_id,
      seed: response.provenance.seed,
    };
    entries.push(entry);
    const evicted: PinnedScenario[] = [];
    while (entries.length > this.maxEntries) {
      evicted.push(entries.shift() as PinnedScenario);
    }
    for (;;) {
      try {
        this.storage.setItem(KEY, JSON.stringify(entries));
        break;
      } catch (err) {
        // storage quota: drop the oldest entry and retry
        if (entries.length <= 1) throw err;
        evicted.push(entries.shift() as PinnedScenario);
      }
    }
    return { entry, evicted };
  }

  remove(id: number): void {
    this.storage.setItem(KEY, JSON.stringify(this.list().filter((e) => e.id !== id)));
  }

  /** A recalled scenario from an older model deserves a stale warning. */
  isStale(entry: PinnedScenario, currentModelId: string): boolean {
    return entry.model_id !== currentModelId;
  }
}

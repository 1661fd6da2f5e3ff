/**
 * Per-cell category assignment over the outpainting grid.
 *
 * State is an ordered list of class names per cell keyed "i,j"
 * (column,row, 1-based). The emitted payload is exactly what the
 * service's category field expects: cells with no assignment omit the
 * key, assignment order within a cell is preserved. Validation mirrors
 * the server's 422 rules so bad payloads never leave the client.
 */

import { GridInfo } from "./api.js";

export type CategoryPayload = Record<string, string[]>;

export function cellKey(i: number, j: number): string {
  return `${i},${j}`;
}

/** Throws with the server's wording if the payload would be rejected. */
export function validateCategoryPayload(
  payload: CategoryPayload,
  classNames: string[],
  gridN: number,
): void {
  const known = new Set(classNames);
  const intPart = /^\s*[+-]?\d+\s*$/;
  for (const [key, names] of Object.entries(payload)) {
    const parts = key.split(",");
    if (parts.length !== 2 || !intPart.test(parts[0]!) || !intPart.test(parts[1]!)) {
      throw new Error(`cell key '${key}' is not of the form 'i,j'`);
    }
    const i = parseInt(parts[0]!, 10);
    const j = parseInt(parts[1]!, 10);
    if (i < 1 || i > gridN || j < 1 || j > gridN) {
      throw new Error(`cell key '${key}' outside the 1..${gridN} grid`);
    }
    for (const name of names) {
      if (!known.has(name)) {
        throw new Error(`unknown class name '${name}'`);
      }
    }
  }
}

export class CategoryPainter {
  private assignments = new Map<string, string[]>();

  constructor(
    readonly grid: GridInfo,
    readonly classNames: string[],
  ) {}

  /** Toggle `name` on cell (i,j); first add wins the list position. */
  toggle(i: number, j: number, name: string): void {
    if (!this.classNames.includes(name)) {
      throw new Error(`unknown class name '${name}'`);
    }
    if (i < 1 || i > this.grid.n || j < 1 || j > this.grid.n) {
      throw new Error(`cell (${i},${j}) outside the 1..${this.grid.n} grid`);
    }
    const key = cellKey(i, j);
    const names = this.assignments.get(key) ?? [];
    const at = names.indexOf(name);
    if (at >= 0) {
      names.splice(at, 1);
    } else {
      names.push(name);
    }
    if (names.length === 0) {
      this.assignments.delete(key);
    } else {
      this.assignments.set(key, names);
    }
  }

  assigned(i: number, j: number): string[] {
    return [...(this.assignments.get(cellKey(i, j)) ?? [])];
  }

  clearAll(): void {
    this.assignments.clear();
  }

  /** Service payload: only assigned cells appear, order preserved. */
  payload(): CategoryPayload {
    const out: CategoryPayload = {};
    for (const [key, names] of this.assignments) {
      if (names.length > 0) out[key] = [...names];
    }
    validateCategoryPayload(out, this.classNames, this.grid.n);
    return out;
  }
}

/**
 * Mount the painter as a grid overlay. Each cell is a button listing
 * its assignments; clicking applies the class picked in the selector.
 */
export function mountCategoryPainter(
  container: HTMLElement,
  painter: CategoryPainter,
  onChange: (payload: CategoryPayload) => void,
): void {
  container.textContent = "";
  const doc = container.ownerDocument;

  const selector = doc.createElement("select");
  selector.className = "category-select";
  for (const name of painter.classNames) {
    const option = doc.createElement("option");
    option.value = name;
    option.textContent = name;
    selector.appendChild(option);
  }
  container.appendChild(selector);

  const table = doc.createElement("div");
  table.className = "category-grid";
  table.style.display = "grid";
  table.style.gridTemplateColumns = `repeat(${painter.grid.n}, 1fr)`;
  container.appendChild(table);

  const cells: HTMLButtonElement[] = [];
  const refresh = () => {
    for (const button of cells) {
      const i = Number(button.dataset.i);
      const j = Number(button.dataset.j);
      const names = painter.assigned(i, j);
      button.textContent = names.length > 0 ? names.join(", ") : "(background)";
    }
  };

  // row-major layout, j is the row and i the column, both 1-based
  for (let j = 1; j <= painter.grid.n; j++) {
    for (let i = 1; i <= painter.grid.n; i++) {
      const button = doc.createElement("button");
      button.className = "category-cell";
      button.dataset.i = String(i);
      button.dataset.j = String(j);
      button.addEventListener("click", () => {
        painter.toggle(i, j, selector.value);
        refresh();
        onChange(painter.payload());
      });
      table.appendChild(button);
      cells.push(button);
    }
  }

  const clear = doc.createElement("button");
  clear.className = "category-clear";
  clear.textContent = "clear all";
  clear.addEventListener("click", () => {
    painter.clearAll();
    refresh();
    onChange(painter.payload());
  });
  container.appendChild(clear);

  refresh();
}

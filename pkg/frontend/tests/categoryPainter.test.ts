// @vitest-environment happy-dom
/**
 * Category painter: payload serialization contract and the grid
 * overlay's click behavior.
 */

import { describe, expect, it } from "vitest";

import {
  CategoryPainter,
  mountCategoryPainter,
  validateCategoryPayload,
} from "../src/categoryPainter.js";

const GRID = { n: 2, patch_h: 32, patch_w: 32 };
const CLASSES = ["background", "sky", "tower", "tree"];

describe("CategoryPainter payload", () => {
  it("assigns tower to cell (2,1) as {\"2,1\": [\"tower\"]}", () => {
    const painter = new CategoryPainter(GRID, CLASSES);
    painter.toggle(2, 1, "tower");
    expect(painter.payload()).toEqual({ "2,1": ["tower"] });
  });

  it("clear all yields the empty payload", () => {
    const painter = new CategoryPainter(GRID, CLASSES);
    painter.toggle(1, 1, "sky");
    painter.toggle(2, 2, "tree");
    painter.clearAll();
    expect(painter.payload()).toEqual({});
  });

  it("keeps both names, order preserved, when one cell gets two classes", () => {
    const painter = new CategoryPainter(GRID, CLASSES);
    painter.toggle(1, 2, "tree");
    painter.toggle(1, 2, "sky");
    expect(painter.payload()).toEqual({ "1,2": ["tree", "sky"] });
  });

  it("toggling twice removes the assignment and drops the key", () => {
    const painter = new CategoryPainter(GRID, CLASSES);
    painter.toggle(1, 1, "sky");
    painter.toggle(1, 1, "sky");
    expect(painter.payload()).toEqual({});
  });

  it("rejects unknown classes and out-of-grid cells like the server", () => {
    const painter = new CategoryPainter(GRID, CLASSES);
    expect(() => painter.toggle(1, 1, "castle")).toThrow(/unknown class name 'castle'/);
    expect(() => painter.toggle(3, 1, "sky")).toThrow(/outside the 1\.\.2 grid/);
  });
});

describe("validateCategoryPayload", () => {
  it("mirrors the server's 422 wording", () => {
    expect(() => validateCategoryPayload({ "21": ["sky"] }, CLASSES, 2)).toThrow(
      /cell key '21' is not of the form 'i,j'/,
    );
    expect(() => validateCategoryPayload({ "2,": ["sky"] }, CLASSES, 2)).toThrow(
      /not of the form 'i,j'/,
    );
    expect(() => validateCategoryPayload({ "0,1": ["sky"] }, CLASSES, 2)).toThrow(
      /cell key '0,1' outside the 1\.\.2 grid/,
    );
    expect(() => validateCategoryPayload({ "1,1": ["moat"] }, CLASSES, 2)).toThrow(
      /unknown class name 'moat'/,
    );
    expect(() => validateCategoryPayload({ "1,1": ["sky"], "2,2": [] }, CLASSES, 2)).not.toThrow();
  });
});

describe("grid overlay", () => {
  it("renders n*n cells and applies the selected class on click", () => {
    const painter = new CategoryPainter(GRID, CLASSES);
    const container = document.createElement("div");
    document.body.appendChild(container);
    let latest: Record<string, string[]> | null = null;
    mountCategoryPainter(container, painter, (payload) => {
      latest = payload;
    });

    const cells = container.querySelectorAll<HTMLButtonElement>(".category-cell");
    expect(cells.length).toBe(4);

    const selector = container.querySelector<HTMLSelectElement>(".category-select")!;
    selector.value = "tower";
    // cells are laid out row-major; (2,1) is the second button
    const target = [...cells].find((c) => c.dataset.i === "2" && c.dataset.j === "1")!;
    target.click();
    expect(latest).toEqual({ "2,1": ["tower"] });
    expect(target.textContent).toBe("tower");

    container.querySelector<HTMLButtonElement>(".category-clear")!.click();
    expect(latest).toEqual({});
    expect(target.textContent).toBe("(background)");
  });
});

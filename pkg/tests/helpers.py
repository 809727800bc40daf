"""Independent oracles used by the test suite.

Everything here is deliberately naive (pixel counting, exhaustive
enumeration, flood fill) and shares no code path with the implementation it
checks.
"""

from __future__ import annotations

from itertools import combinations, permutations

import numpy as np

from vqaground.geometry import BBox


def pixel_grid_mask(box: BBox, size: int) -> np.ndarray:
    """Set pixel (row, col) iff its center lies in the box.

    Pixel sampling rather than closed-form area arithmetic, so it exercises a
    different computational path than the analytic IoU.
    """
    cx = np.arange(size) + 0.5
    cy = np.arange(size) + 0.5
    col = (cx >= box.x_min) & (cx < box.x_max)
    row = (cy >= box.y_min) & (cy < box.y_max)
    return row[:, None] & col[None, :]


def pixel_iou(a: BBox, b: BBox, size: int) -> float:
    ma, mb = pixel_grid_mask(a, size), pixel_grid_mask(b, size)
    union = int((ma | mb).sum())
    return int((ma & mb).sum()) / union if union else 0.0


def pixel_overlap(pred: BBox, gt: BBox, size: int) -> float:
    mp, mg = pixel_grid_mask(pred, size), pixel_grid_mask(gt, size)
    return int((mp & mg).sum()) / int(mg.sum())


def point_in_polygon(x: float, y: float, vertices, eps: float = 1e-9) -> bool:
    """Even-odd rule by edge-crossing count; points on an edge count inside."""
    inside = False
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if (
            abs(cross) <= eps
            and min(x1, x2) - eps <= x <= max(x1, x2) + eps
            and min(y1, y2) - eps <= y <= max(y1, y2) + eps
        ):
            return True
        if (y1 > y) != (y2 > y):
            x_int = (x2 - x1) * (y - y1) / (y2 - y1) + x1
            if x < x_int:
                inside = not inside
    return inside


def flood_fill_components(grid: np.ndarray, connectivity: int) -> list[set]:
    """Components as sets of (row, col), found by explicit flood fill."""
    if connectivity == 4:
        neighbors = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        neighbors = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    h, w = grid.shape
    seen = np.zeros_like(grid, dtype=bool)
    comps = []
    for r in range(h):
        for c in range(w):
            if not grid[r, c] or seen[r, c]:
                continue
            stack = [(r, c)]
            seen[r, c] = True
            comp = set()
            while stack:
                cr, cc = stack.pop()
                comp.add((cr, cc))
                for dr, dc in neighbors:
                    nr, nc = cr + dr, cc + dc
                    if 0 <= nr < h and 0 <= nc < w and grid[nr, nc] and not seen[nr, nc]:
                        seen[nr, nc] = True
                        stack.append((nr, nc))
            comps.append(comp)
    return comps


def brute_force_match(preds, gts, score_fn, threshold: float) -> tuple[int, float]:
    """Best one-to-one matching (max count, then max total score), enumerated.

    Only feasible for small instances (<= ~5 boxes per side).
    """
    n, m = len(preds), len(gts)
    best_count, best_score = 0, 0.0
    for k in range(min(n, m), 0, -1):
        found_k = False
        for pred_idx in combinations(range(n), k):
            for gt_perm in permutations(range(m), k):
                scores = [score_fn(preds[p], gts[g]) for p, g in zip(pred_idx, gt_perm)]
                if all(s >= threshold for s in scores):
                    found_k = True
                    total = sum(scores)
                    if k > best_count or (k == best_count and total > best_score):
                        best_count, best_score = k, total
        if found_k:
            break
    return best_count, best_score


def random_box(rng, lo: int = 0, hi: int = 256) -> BBox:
    """Random integer-coordinate box with positive area inside [lo, hi]^2."""
    x0 = rng.randint(lo, hi - 1)
    y0 = rng.randint(lo, hi - 1)
    x1 = rng.randint(x0 + 1, hi)
    y1 = rng.randint(y0 + 1, hi)
    return BBox(x0, y0, x1, y1)

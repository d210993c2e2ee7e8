"""Portable pixmap rendering and exact CSV export of grid fields."""

from __future__ import annotations

import numpy as np

from .grid import GridSpec, world_to_cell

# distinct gray levels / colors for mode overlays
GT_COLOR = (255, 0, 255)
MODE_COLORS = ((0, 200, 0), (0, 120, 255), (255, 160, 0),
               (0, 220, 220), (200, 0, 0), (160, 90, 230))


def write_pgm(path, image: np.ndarray) -> None:
    """Binary P5 PGM; image is (rows, cols) uint8, written row-major."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_ppm(path, image: np.ndarray) -> None:
    """Binary P6 PPM; image is (rows, cols, 3) uint8."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def field_to_pgm(path, field: np.ndarray) -> None:
    """Min-max scale a real-valued field into 8-bit grayscale."""
    f = np.asarray(field, dtype=np.float64)
    lo, hi = float(f.min()), float(f.max())
    if hi - lo < 1e-300:
        img = np.zeros(f.shape, dtype=np.uint8)
    else:
        img = np.round((f - lo) / (hi - lo) * 255.0).astype(np.uint8)
    write_pgm(path, img)


def field_to_csv(path, field: np.ndarray) -> None:
    """Exact (row, col, value) dump for inspection and diffing."""
    f = np.asarray(field)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row,col,value\n")
        for r in range(f.shape[0]):
            for c in range(f.shape[1]):
                fh.write(f"{r},{c},{float(f[r, c])!r}\n")


def read_field_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().strip().splitlines()[1:]
    rows = [line.split(",") for line in lines]
    n_r = max(int(r[0]) for r in rows) + 1
    n_c = max(int(r[1]) for r in rows) + 1
    out = np.zeros((n_r, n_c))
    for r, c, v in rows:
        out[int(r), int(c)] = float(v)
    return out


def occupancy_frames(out_dir, ogm: np.ndarray, prefix: str = "ogm") -> list:
    """One PGM per timestamp; probabilities scaled by 255."""
    from pathlib import Path

    out_dir = Path(out_dir)
    paths = []
    for t in range(ogm.shape[2]):
        frame = np.clip(np.asarray(ogm[:, :, t], dtype=np.float64) * 255.0, 0, 255)
        p = out_dir / f"{prefix}_{t:03d}.pgm"
        write_pgm(p, frame.astype(np.uint8))
        paths.append(p)
    return paths


def _draw_polyline(image: np.ndarray, points, spec: GridSpec, color) -> None:
    """Rasterize a polyline of world points onto the grid image (Bresenham-ish)."""
    cells = [world_to_cell(p, spec) for p in points]
    cells = [c for c in cells if c is not None]
    for a, b in zip(cells, cells[1:]):
        n = max(abs(b.row - a.row), abs(b.col - a.col), 1)
        for i in range(n + 1):
            r = a.row + round(i * (b.row - a.row) / n)
            c = a.col + round(i * (b.col - a.col) / n)
            image[r, c] = color
    if cells:
        image[cells[-1].row, cells[-1].col] = color


def trajectory_overlay(spec: GridSpec, gt_future, mode_trajectories,
                       background: np.ndarray | None = None) -> np.ndarray:
    """RGB overlay: background field in gray, modes in distinct colors, GT last."""
    img = np.zeros((spec.rows, spec.cols, 3), dtype=np.uint8)
    if background is not None:
        bg = np.asarray(background, dtype=np.float64)
        lo, hi = float(bg.min()), float(bg.max())
        if hi > lo:
            gray = np.round((bg - lo) / (hi - lo) * 180.0).astype(np.uint8)
            img[:] = gray[..., None]
    for k, traj in enumerate(mode_trajectories):
        _draw_polyline(img, traj, spec, MODE_COLORS[k % len(MODE_COLORS)])
    _draw_polyline(img, gt_future, spec, GT_COLOR)
    return img

"""Static renderings of grids, contamination heat, planned paths, and the
guarantee region map. Everything is plain SVG text or binary PGM so no
plotting dependency is needed; files open in any browser or image tool.

Grid drawings put row 0 at the bottom (rows grow northward), so the SVG y
axis is flipped. Heat values are clamped to [0, 1].
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .grid import Cell, GridMap
from .guarantees import RegionMap
from .scenario import Scenario

CELL_PX = 30
PATH_COLORS = ("#1b6ca8", "#b0413e", "#3e8e41", "#8e44ad", "#b8860b", "#107a70")
HEAT_LOW = (255, 255, 255)
HEAT_HIGH = (165, 15, 21)
OBSTACLE_FILL = "#3b3b3b"
PGM_MAXVAL = 65535


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else float(v)


def heat_color(v: float) -> str:
    """Two-stop white-to-red ramp as an SVG fill string."""
    v = _clamp01(v)
    rgb = tuple(
        int(round(lo + (hi - lo) * v)) for lo, hi in zip(HEAT_LOW, HEAT_HIGH)
    )
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


def _cell_origin(gm: GridMap, cell: Cell) -> Tuple[float, float]:
    return cell.col * CELL_PX, (gm.height - 1 - cell.row) * CELL_PX


def _cell_center(gm: GridMap, cell: Cell) -> Tuple[float, float]:
    x, y = _cell_origin(gm, cell)
    return x + CELL_PX / 2, y + CELL_PX / 2


def grid_svg(
    gm: GridMap,
    heat: Optional[np.ndarray] = None,
    starts: Sequence[Tuple[str, Cell]] = (),
    targets: Sequence[Tuple[str, Cell]] = (),
    hazards: Sequence[Cell] = (),
    paths: Sequence[Tuple[str, Sequence[Cell]]] = (),
    title: str = "",
) -> str:
    """One SVG drawing of the grid with optional heat fill and overlays."""
    if heat is not None:
        heat = np.asarray(heat, dtype=float)
        if heat.shape != (gm.n_free,):
            raise ValidationError(
                f"heat has {heat.shape} entries, grid has {gm.n_free} free cells"
            )
    w = gm.width * CELL_PX
    h = gm.height * CELL_PX
    pad = 6
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{w + 2 * pad}" height="{h + 2 * pad + (18 if title else 0)}" '
        f'viewBox="{-pad} {-pad - (18 if title else 0)} '
        f'{w + 2 * pad} {h + 2 * pad + (18 if title else 0)}">'
    )
    parts: List[str] = [head]
    if title:
        parts.append(
            f'<text x="0" y="-8" font-family="sans-serif" font-size="13">{title}</text>'
        )
    for row in range(gm.height):
        for col in range(gm.width):
            cell = Cell(col, row)
            x, y = _cell_origin(gm, cell)
            if gm.is_free(cell):
                fill = "#ffffff" if heat is None else heat_color(heat[gm.index(cell)])
            else:
                fill = OBSTACLE_FILL
            parts.append(
                f'<rect x="{x}" y="{y}" width="{CELL_PX}" height="{CELL_PX}" '
                f'fill="{fill}" stroke="#999999" stroke-width="0.7"/>'
            )
    for cell in hazards:
        x, y = _cell_origin(gm, Cell(*cell))
        parts.append(
            f'<rect x="{x + 3}" y="{y + 3}" width="{CELL_PX - 6}" height="{CELL_PX - 6}" '
            f'fill="none" stroke="#d95f02" stroke-width="2.2"/>'
        )
    gx, gy = _cell_origin(gm, gm.goal)
    parts.append(
        f'<rect x="{gx + 4}" y="{gy + 4}" width="{CELL_PX - 8}" height="{CELL_PX - 8}" '
        f'fill="none" stroke="#111111" stroke-width="2" stroke-dasharray="4 2"/>'
    )
    for i, (name, pts) in enumerate(paths):
        if len(pts) < 2:
            continue
        color = PATH_COLORS[i % len(PATH_COLORS)]
        coords = " ".join(
            f"{x:.1f},{y:.1f}" for x, y in (_cell_center(gm, Cell(*p)) for p in pts)
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="2.4" stroke-opacity="0.85"/>'
        )
    for name, cell in targets:
        cx, cy = _cell_center(gm, Cell(*cell))
        parts.append(
            f'<circle cx="{cx}" cy="{cy}" r="{CELL_PX * 0.28:.1f}" '
            f'fill="#ffffff" stroke="#111111" stroke-width="1.6"/>'
        )
        parts.append(
            f'<text x="{cx}" y="{cy + 4}" font-family="sans-serif" font-size="11" '
            f'text-anchor="middle">{name}</text>'
        )
    for i, (name, cell) in enumerate(starts):
        cx, cy = _cell_center(gm, Cell(*cell))
        color = PATH_COLORS[i % len(PATH_COLORS)]
        r = CELL_PX * 0.30
        pts = f"{cx:.1f},{cy - r:.1f} {cx - r:.1f},{cy + r * 0.8:.1f} {cx + r:.1f},{cy + r * 0.8:.1f}"
        parts.append(
            f'<polygon points="{pts}" fill="{color}" fill-opacity="0.9" '
            f'stroke="#111111" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{cx}" y="{cy + r + 11:.1f}" font-family="sans-serif" '
            f'font-size="10" text-anchor="middle">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def scenario_svg(
    scenario: Scenario,
    heat: Optional[np.ndarray] = None,
    paths: Sequence[Tuple[str, Sequence[Cell]]] = (),
    title: str = "",
) -> str:
    return grid_svg(
        scenario.gridmap,
        heat=heat,
        starts=tuple(zip(scenario.robot_names, scenario.starts)),
        targets=tuple(zip(scenario.target_names, scenario.targets)),
        hazards=sorted(scenario.hazard.initial_cells),
        paths=paths,
        title=title or scenario.name,
    )


def heat_pgm(gm: GridMap, heat: np.ndarray) -> bytes:
    """16-bit binary PGM of per-cell heat; obstacles render as 0.

    Rows run north to south (top row of the image is the highest row index)
    and values are big-endian as the format requires.
    """
    heat = np.asarray(heat, dtype=float)
    if heat.shape != (gm.n_free,):
        raise ValidationError(
            f"heat has {heat.shape} entries, grid has {gm.n_free} free cells"
        )
    img = np.zeros((gm.height, gm.width), dtype=np.uint16)
    for i, cell in enumerate(gm.cells):
        v = _clamp01(heat[i])
        img[gm.height - 1 - cell.row, cell.col] = int(round(v * PGM_MAXVAL))
    header = f"P5\n{gm.width} {gm.height}\n{PGM_MAXVAL}\n".encode("ascii")
    return header + img.astype(">u2").tobytes()


def region_svg(region: RegionMap, mark: Optional[Tuple[float, float]] = None) -> str:
    """Map over (alpha, gamma) of which greedy direction has the better floor.

    Blue cells: the forward floor strictly beats the reverse floor; orange
    cells: reverse wins or ties. An optional marker shows a measured pair.
    """
    na = len(region.alphas)
    ng = len(region.gammas)
    px = 4
    w, h = na * px, ng * px
    ml, mb = 46, 34
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w + ml + 14}" '
        f'height="{h + mb + 26}" viewBox="0 0 {w + ml + 14} {h + mb + 26}">'
    ]
    parts.append(
        f'<text x="{ml}" y="14" font-family="sans-serif" font-size="12">'
        f"forward floor &gt; reverse floor (blue) at F* = {region.f_star:.3f}</text>"
    )
    oy = 22
    for gi in range(ng):
        for ai in range(na):
            fill = "#4575b4" if region.forward_better[gi, ai] else "#fc8d59"
            x = ml + ai * px
            y = oy + (ng - 1 - gi) * px
            parts.append(
                f'<rect x="{x}" y="{y}" width="{px}" height="{px}" fill="{fill}"/>'
            )
    parts.append(
        f'<rect x="{ml}" y="{oy}" width="{w}" height="{h}" fill="none" '
        f'stroke="#333333" stroke-width="1"/>'
    )
    for frac in (0.0, 0.5, 1.0):
        a = region.alphas[0] + frac * (region.alphas[-1] - region.alphas[0])
        g = region.gammas[0] + frac * (region.gammas[-1] - region.gammas[0])
        x = ml + frac * (w - px) + px / 2
        y = oy + (1 - frac) * (h - px) + px / 2
        parts.append(
            f'<text x="{x:.0f}" y="{oy + h + 16}" font-family="sans-serif" '
            f'font-size="10" text-anchor="middle">{a:.2f}</text>'
        )
        parts.append(
            f'<text x="{ml - 6}" y="{y:.0f}" font-family="sans-serif" '
            f'font-size="10" text-anchor="end" dominant-baseline="middle">{g:.2f}</text>'
        )
    parts.append(
        f'<text x="{ml + w / 2:.0f}" y="{oy + h + 30}" font-family="sans-serif" '
        f'font-size="11" text-anchor="middle">curvature</text>'
    )
    parts.append(
        f'<text x="12" y="{oy + h / 2:.0f}" font-family="sans-serif" font-size="11" '
        f'text-anchor="middle" transform="rotate(-90 12 {oy + h / 2:.0f})">'
        f"submodularity ratio</text>"
    )
    if mark is not None:
        a, g = mark
        sa = (a - region.alphas[0]) / max(region.alphas[-1] - region.alphas[0], 1e-12)
        sg = (g - region.gammas[0]) / max(region.gammas[-1] - region.gammas[0], 1e-12)
        if 0.0 <= sa <= 1.0 and 0.0 <= sg <= 1.0:
            x = ml + sa * (w - px) + px / 2
            y = oy + (1 - sg) * (h - px) + px / 2
            parts.append(
                f'<circle cx="{x:.1f}" cy="{y:.1f}" r="5" fill="none" '
                f'stroke="#111111" stroke-width="2"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts)

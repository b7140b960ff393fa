"""Self-contained SVG density maps of hex-binned metric values.

Cells are drawn as filled hexagons coloured by trimmed-mean value, the
top raw pixels as scatter circles on a second ramp; both ramps get a
legend, plus a scale bar.  Pure string generation with fixed float
formatting, so identical inputs yield byte-identical documents.
"""

from __future__ import annotations

import dataclasses
import math

from .errors import RenderError
from .hexbin import HexBinMap, project_local

#: Low-to-high colour stops; low values render bright, dense cells dark.
DEFAULT_CELL_RAMP = ("#ffffd9", "#c7e9b4", "#41b6c4", "#225ea8", "#081d58")
DEFAULT_POINT_RAMP = ("#ffffb2", "#fd8d3c", "#bd0026")


@dataclasses.dataclass(frozen=True)
class RampStyle:
    cell_ramp: tuple[str, ...] = DEFAULT_CELL_RAMP
    point_ramp: tuple[str, ...] = DEFAULT_POINT_RAMP
    background: str = "#ffffff"
    canvas_width: int = 860
    point_radius: float = 3.0


def _rgb(color: str) -> tuple[int, int, int]:
    color = color.lstrip("#")
    return (int(color[0:2], 16), int(color[2:4], 16), int(color[4:6], 16))


def ramp_color(ramp: tuple[str, ...], t: float) -> str:
    """Piecewise-linear interpolation along the ramp at ``t`` in [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    if len(ramp) == 1:
        return ramp[0]
    pos = t * (len(ramp) - 1)
    i = min(int(math.floor(pos)), len(ramp) - 2)
    frac = pos - i
    a, b = _rgb(ramp[i]), _rgb(ramp[i + 1])
    mixed = tuple(round(ca + (cb - ca) * frac) for ca, cb in zip(a, b))
    return "#{:02x}{:02x}{:02x}".format(*mixed)


def _hex_vertices(cx: float, cy: float, size: float) -> list[tuple[float, float]]:
    # Pointy-top: corners at 30 + 60k degrees.
    verts = []
    for k in range(6):
        angle = math.radians(60.0 * k - 30.0)
        verts.append((cx + size * math.cos(angle), cy + size * math.sin(angle)))
    return verts


def _legend(x: float, y: float, height: float, ramp, vmax: float, title: str,
            element_id: str) -> list[str]:
    steps = 24
    bar_w = 16.0
    parts = [f'<g id="{element_id}">']
    parts.append(
        f'<text x="{x:.2f}" y="{y - 8:.2f}" font-size="11" font-family="sans-serif">{title}</text>'
    )
    step_h = height / steps
    for i in range(steps):
        # Highest value at the top of the bar.
        t = 1.0 - (i + 0.5) / steps
        color = ramp_color(ramp, t)
        parts.append(
            f'<rect x="{x:.2f}" y="{y + i * step_h:.2f}" width="{bar_w:.2f}" '
            f'height="{step_h + 0.5:.2f}" fill="{color}"/>'
        )
    parts.append(
        f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{height:.2f}" '
        f'fill="none" stroke="#333333" stroke-width="0.5"/>'
    )
    parts.append(
        f'<text x="{x + bar_w + 4:.2f}" y="{y + 8:.2f}" font-size="10" '
        f'font-family="sans-serif">{vmax:.2f}</text>'
    )
    parts.append(
        f'<text x="{x + bar_w + 4:.2f}" y="{y + height:.2f}" font-size="10" '
        f'font-family="sans-serif">0.00</text>'
    )
    parts.append("</g>")
    return parts


def render_map(hex_map: HexBinMap, style: RampStyle | None = None) -> str:
    """Render a hex-bin map to an SVG document string."""
    style = style or RampStyle()
    if not hex_map.cells:
        raise RenderError("cannot render an empty hex-bin map")

    size = hex_map.width_m / math.sqrt(3.0)
    xs = [c.centre_xy[0] for c in hex_map.cells]
    ys = [c.centre_xy[1] for c in hex_map.cells]
    points_xy = []
    if hex_map.top_pixels and hex_map.projection is not None:
        for lat, lon, value in hex_map.top_pixels:
            px, py = project_local(lat, lon, hex_map.projection)
            points_xy.append((px, py, value))
            xs.append(px)
            ys.append(py)
    xmin, xmax = min(xs) - size, max(xs) + size
    ymin, ymax = min(ys) - size, max(ys) + size

    legend_w = 90.0
    margin = 14.0
    map_w = style.canvas_width - legend_w - 2 * margin
    scale = map_w / (xmax - xmin)
    map_h = (ymax - ymin) * scale
    canvas_h = map_h + 2 * margin + 40.0

    def to_svg(x: float, y: float) -> tuple[float, float]:
        return (margin + (x - xmin) * scale, margin + (ymax - y) * scale)

    cell_max = max(c.trimmed_mean_mdm for c in hex_map.cells)
    point_max = max((v for _, _, v in points_xy), default=0.0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{style.canvas_width}" '
        f'height="{canvas_h:.0f}" viewBox="0 0 {style.canvas_width} {canvas_h:.0f}">',
        f'<rect width="100%" height="100%" fill="{style.background}"/>',
        '<g id="cells">',
    ]
    for cell in hex_map.cells:
        t = cell.trimmed_mean_mdm / cell_max if cell_max > 0 else 0.0
        color = ramp_color(style.cell_ramp, t)
        verts = [to_svg(vx, vy) for vx, vy in _hex_vertices(*cell.centre_xy, size)]
        d = "M " + " L ".join(f"{vx:.2f},{vy:.2f}" for vx, vy in verts) + " Z"
        parts.append(
            f'<path class="hex-cell" d="{d}" fill="{color}" stroke="#666666" '
            f'stroke-width="0.6"><title>q={cell.axial_q} r={cell.axial_r} '
            f'mdm={cell.trimmed_mean_mdm:.3f} n={cell.pixel_count}</title></path>'
        )
    parts.append("</g>")

    parts.append('<g id="top-pixels">')
    for px, py, value in points_xy:
        t = value / point_max if point_max > 0 else 0.0
        color = ramp_color(style.point_ramp, t)
        sx, sy = to_svg(px, py)
        parts.append(
            f'<circle class="top-pixel" cx="{sx:.2f}" cy="{sy:.2f}" '
            f'r="{style.point_radius:.1f}" fill="{color}" stroke="#222222" '
            f'stroke-width="0.5"/>'
        )
    parts.append("</g>")

    legend_x = style.canvas_width - legend_w - margin / 2
    legend_h = max(min(map_h * 0.6, 180.0), 60.0)
    parts.extend(
        _legend(legend_x, margin + 16.0, legend_h, style.cell_ramp, cell_max,
                "cell mdm", "legend-cells")
    )
    parts.extend(
        _legend(legend_x, margin + legend_h + 56.0, legend_h * 0.6, style.point_ramp,
                point_max, "top pixels", "legend-points")
    )

    # Scale bar: one hexagon width.
    bar_px = hex_map.width_m * scale
    bar_y = canvas_h - margin
    parts.append('<g id="scale-bar">')
    parts.append(
        f'<line x1="{margin:.2f}" y1="{bar_y:.2f}" x2="{margin + bar_px:.2f}" '
        f'y2="{bar_y:.2f}" stroke="#000000" stroke-width="2"/>'
    )
    parts.append(
        f'<text x="{margin:.2f}" y="{bar_y - 5:.2f}" font-size="10" '
        f'font-family="sans-serif">{hex_map.width_m / 1000.0:.1f} km</text>'
    )
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts)

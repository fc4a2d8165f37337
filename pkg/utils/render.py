"""
SVG rendering of maze trajectories
"""
from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Iterable

import numpy as np

from models.config_models import MazeSpec
from utils.rollout import RolloutRecord

logger = logging.getLogger(__name__)

CELL_PX = 80
MARGIN_PX = 20
PALETTE = ["#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    """Maze coordinates (y up) to SVG pixels (y down)."""

    def __init__(self, maze: MazeSpec):
        self.maze = maze
        self.width = maze.width * CELL_PX + 2 * MARGIN_PX
        self.height = maze.height * CELL_PX + 2 * MARGIN_PX

    def px(self, x: float, y: float) -> tuple[float, float]:
        return MARGIN_PX + x * CELL_PX, MARGIN_PX + (self.maze.height - y) * CELL_PX


def _star_points(cx: float, cy: float, outer: float = 9.0, inner: float = 4.0) -> str:
    points = []
    for i in range(10):
        r = outer if i % 2 == 0 else inner
        angle = -math.pi / 2 + i * math.pi / 5
        points.append(f"{_fmt(cx + r * math.cos(angle))},{_fmt(cy + r * math.sin(angle))}")
    return " ".join(points)


def _grid(root: ET.Element, canvas: _Canvas) -> None:
    maze = canvas.maze
    layer = ET.SubElement(root, "g", {"id": "maze"})
    x0, y0 = canvas.px(0, maze.height)
    ET.SubElement(layer, "rect", {
        "x": _fmt(x0), "y": _fmt(y0),
        "width": _fmt(maze.width * CELL_PX), "height": _fmt(maze.height * CELL_PX),
        "fill": "#ffffff", "stroke": "#000000", "stroke-width": "2",
    })
    for i, j in maze.blocked:
        x, y = canvas.px(i, j + 1)
        ET.SubElement(layer, "rect", {
            "class": "blocked", "x": _fmt(x), "y": _fmt(y),
            "width": str(CELL_PX), "height": str(CELL_PX), "fill": "#404040",
        })
    for i in range(1, maze.width):
        xa, ya = canvas.px(i, 0)
        xb, yb = canvas.px(i, maze.height)
        ET.SubElement(layer, "line", {"x1": _fmt(xa), "y1": _fmt(ya), "x2": _fmt(xb), "y2": _fmt(yb),
                                      "stroke": "#cccccc", "stroke-width": "1"})
    for j in range(1, maze.height):
        xa, ya = canvas.px(0, j)
        xb, yb = canvas.px(maze.width, j)
        ET.SubElement(layer, "line", {"x1": _fmt(xa), "y1": _fmt(ya), "x2": _fmt(xb), "y2": _fmt(yb),
                                      "stroke": "#cccccc", "stroke-width": "1"})


def build_svg(maze: MazeSpec, records: Iterable[RolloutRecord]) -> bytes:
    """
    Standalone SVG document for a set of rollouts.

    Each record becomes one polyline, a green star at its start and a red
    white-bordered circle at its endpoint.
    """
    canvas = _Canvas(maze)
    root = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(canvas.width), "height": str(canvas.height),
        "viewBox": f"0 0 {canvas.width} {canvas.height}",
    })
    _grid(root, canvas)

    trajectories = ET.SubElement(root, "g", {"id": "trajectories"})
    markers = ET.SubElement(root, "g", {"id": "markers"})
    for idx, record in enumerate(records):
        states = np.asarray(record.states, dtype=np.float64)
        pixels = [canvas.px(x, y) for x, y in states[:, :2]]
        ET.SubElement(trajectories, "polyline", {
            "points": " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pixels),
            "fill": "none", "stroke": PALETTE[idx % len(PALETTE)],
            "stroke-width": "1.5", "stroke-opacity": "0.7",
        })
        sx, sy = pixels[0]
        ET.SubElement(markers, "polygon", {"class": "start", "points": _star_points(sx, sy), "fill": "#2ca02c"})
        ex, ey = pixels[-1]
        ET.SubElement(markers, "circle", {
            "class": "endpoint", "cx": _fmt(ex), "cy": _fmt(ey), "r": "5",
            "fill": "#d62728", "stroke": "#ffffff", "stroke-width": "2",
        })

    ET.indent(root)
    return b'<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="utf-8", xml_declaration=False) + b"\n"


def render_svg(maze: MazeSpec, records: list[RolloutRecord], path: str | Path) -> Path:
    """
    Write the trajectory picture to path.

    Args:
        maze: Maze to draw
        records: Rollouts to overlay (may be empty)
        path: Output file

    Returns:
        The written path
    """
    path = Path(path)
    data = build_svg(maze, records)
    try:
        path.write_bytes(data)
    except OSError as e:
        raise OSError(f"cannot write SVG to {path}: {e.strerror or e}") from e
    logger.info("Rendered %d trajectories to %s", len(records), path)
    return path

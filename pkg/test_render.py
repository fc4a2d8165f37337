"""
Tests for SVG trajectory rendering
"""
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from models.config_models import MazeSpec
from utils.render import build_svg, render_svg
from utils.rollout import RolloutRecord

SVG = "{http://www.w3.org/2000/svg}"
WALLED = MazeSpec(blocked=[(1, 0), (2, 2), (3, 2)])


def _record(points) -> RolloutRecord:
    states = np.zeros((len(points), 4), dtype=np.float32)
    states[:, :2] = points
    n = len(points) - 1
    return RolloutRecord(
        states=states,
        actions=np.zeros((n, 2), dtype=np.float32),
        plan_ids=np.zeros(n, dtype=np.int64),
        waypoint_index=np.zeros(n, dtype=np.int64),
        plans=[],
        horizon=4,
        seed=0,
    )


def _parse(data: bytes) -> ET.Element:
    return ET.fromstring(data)


def test_empty_picture_is_just_the_maze():
    root = _parse(build_svg(WALLED, []))
    assert root.tag == f"{SVG}svg"
    assert root.findall(f".//{SVG}polyline") == []
    assert len(root.findall(f".//{SVG}rect[@class='blocked']")) == 3


def test_one_polyline_and_endpoint_per_record():
    records = [_record([[0.5, 0.5], [1.5, 1.5], [4.5, 4.5]]), _record([[0.5, 0.5], [0.5, 4.5]])]
    root = _parse(build_svg(WALLED, records))
    polylines = root.findall(f".//{SVG}polyline")
    assert len(polylines) == 2
    assert len(polylines[0].get("points").split()) == 3
    assert len(root.findall(f".//{SVG}circle[@class='endpoint']")) == 2
    assert len(root.findall(f".//{SVG}polygon[@class='start']")) == 2


def test_y_axis_points_up():
    root = _parse(build_svg(MazeSpec(), [_record([[0.0, 0.0], [0.0, 5.0]])]))
    (first, last) = [tuple(map(float, p.split(","))) for p in root.find(f".//{SVG}polyline").get("points").split()]
    assert first[1] > last[1]


def test_rendering_is_byte_reproducible(tmp_path):
    records = [_record([[0.5, 0.5], [2.25, 3.125]])]
    a = render_svg(WALLED, records, tmp_path / "a.svg").read_bytes()
    b = render_svg(WALLED, records, tmp_path / "b.svg").read_bytes()
    assert a == b
    assert a.startswith(b"<?xml")


def test_unwritable_path_is_reported(tmp_path):
    target = tmp_path / "missing" / "out.svg"
    with pytest.raises(OSError, match="missing"):
        render_svg(WALLED, [], target)

#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


import xml.etree.ElementTree as ET

from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.codec import Trajectory
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.plotting import (
    render_contact_sheet,
    render_letter_svg,
)

SVG = "{http://www.w3.org/2000/svg}"


def straight_line():
    return Trajectory([[0, 0, 0], [5, 0, 0.01], [10, 0, 0.02]])


class TestRenderLetterSvg:
    """Tests for render_letter_svg"""

    def test_one_polyline_one_marker(self):
        root = ET.fromstring(render_letter_svg(straight_line()))
        assert len(root.findall(f"{SVG}polyline")) == 1
        markers = [p for p in root.findall(f"{SVG}path") if p.get("class") == "start-marker"]
        assert len(markers) == 1

    def test_geometry(self):
        root = ET.fromstring(render_letter_svg(straight_line(), size=200))
        points = root.find(f"{SVG}polyline").get("points")
        assert points == "16.000,100.000 100.000,100.000 184.000,100.000"
        marker = root.find(f"{SVG}path").get("d")
        assert marker.startswith("M 10.000 94.000 L 22.000 106.000")

    def test_y_axis_points_down(self):
        root = ET.fromstring(render_letter_svg(Trajectory([[0, 0, 0], [0, 10, 0.01]])))
        coords = [tuple(map(float, p.split(","))) for p in root.find(f"{SVG}polyline").get("points").split()]
        assert coords[0][1] > coords[1][1]

    def test_identical_bytes(self):
        assert render_letter_svg(straight_line(), title="A") == render_letter_svg(straight_line(), title="A")

    def test_no_metadata_by_default(self):
        assert "<metadata>" not in render_letter_svg(straight_line())
        assert "<metadata>2025-01-01T00:00:00</metadata>" in render_letter_svg(
            straight_line(), timestamp="2025-01-01T00:00:00")

    def test_title_is_escaped(self):
        svg = render_letter_svg(straight_line(), title="A <w1> & co")
        assert "<title>A &lt;w1&gt; &amp; co</title>" in svg
        ET.fromstring(svg)

    def test_single_point(self):
        root = ET.fromstring(render_letter_svg(Trajectory([[2, 2, 0], [2, 2, 0.01]]), size=100))
        assert root.find(f"{SVG}polyline").get("points") == "50.000,50.000 50.000,50.000"


class TestRenderContactSheet:
    """Tests for render_contact_sheet"""

    def test_alphabet_layout(self):
        letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
        root = ET.fromstring(render_contact_sheet({letter: straight_line() for letter in reversed(letters)}))
        assert root.get("width") == "1040" and root.get("height") == "160"
        cells = root.findall(f"{SVG}g")
        assert [cell.find(f"{SVG}text").text for cell in cells] == list(letters)
        assert cells[13].get("transform") == "translate(0,80)"
        assert all(len(cell.findall(f"{SVG}polyline")) == 1 for cell in cells)

    def test_short_row(self):
        root = ET.fromstring(render_contact_sheet({"A": straight_line(), "B": straight_line()}, cell_size=50))
        assert root.get("width") == "100" and root.get("height") == "50"

# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)

"""
SVG rendering of decoded tracings.

A letter plot holds one polyline and one start marker (an x at the first
point). The contact sheet lays out one cell per letter in alphabet order.
Coordinates are printed with three decimals so identical input gives
identical bytes; a timestamp is only embedded when asked for.
"""

from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


import jinja2
import numpy as np


PEN_COLOR = "#1a1a1a"
MARKER_COLOR = "#1f5fbf"

_TEMPLATES = {
    "letter.svg.j2": """\
<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{{ size }}" height="{{ size }}" viewBox="0 0 {{ size }} {{ size }}">
{% if title %}
  <title>{{ title }}</title>
{% endif %}
{% if timestamp %}
  <metadata>{{ timestamp }}</metadata>
{% endif %}
  <rect width="{{ size }}" height="{{ size }}" fill="#ffffff"/>
  <polyline fill="none" stroke="{{ pen }}" stroke-width="{{ stroke }}" stroke-linejoin="round" points="{{ points }}"/>
  <path class="start-marker" fill="none" stroke="{{ marker_color }}" stroke-width="{{ stroke }}" d="{{ marker }}"/>
</svg>
""",
    "sheet.svg.j2": """\
<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{{ width }}" height="{{ height }}" viewBox="0 0 {{ width }} {{ height }}">
{% if timestamp %}
  <metadata>{{ timestamp }}</metadata>
{% endif %}
  <rect width="{{ width }}" height="{{ height }}" fill="#ffffff"/>
{% for cell in cells %}
  <g transform="translate({{ cell.x }},{{ cell.y }})">
    <rect width="{{ cell_size }}" height="{{ cell_size }}" fill="none" stroke="#cccccc"/>
    <text x="4" y="14" font-family="sans-serif" font-size="12" fill="#666666">{{ cell.letter }}</text>
    <polyline fill="none" stroke="{{ pen }}" stroke-width="{{ stroke }}" stroke-linejoin="round" points="{{ cell.points }}"/>
    <path class="start-marker" fill="none" stroke="{{ marker_color }}" stroke-width="{{ stroke }}" d="{{ cell.marker }}"/>
  </g>
{% endfor %}
</svg>
""",
}


def _environment():
    return jinja2.Environment(
        loader=jinja2.DictLoader(_TEMPLATES),
        autoescape=jinja2.select_autoescape(enabled_extensions=("svg.j2",), default_for_string=True),
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )


def _fit(points, size, pad):
    """Scale xy points uniformly into a size x size box, y pointing down."""
    xy = np.asarray(points, dtype=np.float64)[:, :2]
    low = xy.min(axis=0)
    extent = xy.max(axis=0) - low
    box = size - 2.0 * pad
    largest = extent.max()
    scale = box / largest if largest > 0.0 else 1.0
    x = pad + (xy[:, 0] - low[0]) * scale + (box - extent[0] * scale) / 2.0
    y = pad + (low[1] + extent[1] - xy[:, 1]) * scale + (box - extent[1] * scale) / 2.0
    return np.column_stack([x, y])


def _points_attr(canvas):
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in canvas)


def _marker_path(x, y, arm):
    return (
        f"M {x - arm:.3f} {y - arm:.3f} L {x + arm:.3f} {y + arm:.3f} "
        f"M {x - arm:.3f} {y + arm:.3f} L {x + arm:.3f} {y - arm:.3f}"
    )


def render_letter_svg(trajectory, size=200, title=None, timestamp=None):
    """
    Draw one decoded trajectory.

    Args:
        trajectory (Trajectory): Decoded pen path
        size (int): Width and height in pixels
        title (str, optional): SVG title
        timestamp (str, optional): Written into <metadata> when given

    Returns:
        str: SVG document
    """
    canvas = _fit(trajectory.points, size, pad=size * 0.08)
    stroke = max(size / 100.0, 1.0)
    return _environment().get_template("letter.svg.j2").render(
        size=size,
        title=title,
        timestamp=timestamp,
        pen=PEN_COLOR,
        marker_color=MARKER_COLOR,
        stroke=f"{stroke:.2f}",
        points=_points_attr(canvas),
        marker=_marker_path(canvas[0, 0], canvas[0, 1], arm=size * 0.03),
    )


def render_contact_sheet(trajectories, columns=13, cell_size=80, timestamp=None):
    """
    Draw one cell per letter, in alphabet order.

    Args:
        trajectories (dict): letter -> Trajectory
        columns (int): Cells per row

    Returns:
        str: SVG document
    """
    letters = sorted(trajectories)
    columns = max(1, min(columns, len(letters)))
    rows = (len(letters) + columns - 1) // columns
    cells = []
    for i, letter in enumerate(letters):
        canvas = _fit(trajectories[letter].points, cell_size, pad=cell_size * 0.15)
        cells.append({
            "letter": letter,
            "x": (i % columns) * cell_size,
            "y": (i // columns) * cell_size,
            "points": _points_attr(canvas),
            "marker": _marker_path(canvas[0, 0], canvas[0, 1], arm=cell_size * 0.04),
        })
    return _environment().get_template("sheet.svg.j2").render(
        width=columns * cell_size,
        height=rows * cell_size,
        cells=cells,
        cell_size=cell_size,
        timestamp=timestamp,
        pen=PEN_COLOR,
        marker_color=MARKER_COLOR,
        stroke="1.20",
    )

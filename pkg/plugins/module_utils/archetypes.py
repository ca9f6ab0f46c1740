# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)

"""
Polyline skeletons of the 26 uppercase letters.

Coordinates live in a unit-height box, y pointing up. Strokes are listed in
writing order and concatenated into a single path; the jump between two
strokes becomes an ordinary segment since pen state is not modeled.
"""

from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


import string

import numpy as np


ALPHABET = string.ascii_uppercase


def _arc(cx, cy, rx, ry, start, end, n=12):
    angles = np.radians(np.linspace(start, end, n))
    return [(cx + rx * np.cos(a), cy + ry * np.sin(a)) for a in angles]


_STROKES = {
    "A": [[(0.0, 0.0), (0.35, 1.0), (0.7, 0.0)], [(0.17, 0.45), (0.53, 0.45)]],
    "B": [[(0.0, 0.0), (0.0, 1.0)], _arc(0.0, 0.75, 0.45, 0.25, 90, -90), _arc(0.0, 0.25, 0.5, 0.25, 90, -90)],
    "C": [_arc(0.4, 0.5, 0.4, 0.5, 45, 315)],
    "D": [[(0.0, 0.0), (0.0, 1.0)], _arc(0.0, 0.5, 0.6, 0.5, 90, -90)],
    "E": [[(0.6, 1.0), (0.0, 1.0), (0.0, 0.0), (0.6, 0.0)], [(0.0, 0.5), (0.45, 0.5)]],
    "F": [[(0.6, 1.0), (0.0, 1.0), (0.0, 0.0)], [(0.0, 0.5), (0.45, 0.5)]],
    "G": [_arc(0.4, 0.5, 0.4, 0.5, 45, 340), [(0.8, 0.45), (0.5, 0.45)]],
    "H": [[(0.0, 1.0), (0.0, 0.0)], [(0.6, 1.0), (0.6, 0.0)], [(0.0, 0.5), (0.6, 0.5)]],
    "I": [[(0.3, 1.0), (0.3, 0.0)], [(0.1, 1.0), (0.5, 1.0)], [(0.1, 0.0), (0.5, 0.0)]],
    "J": [[(0.6, 1.0), (0.6, 0.25)], _arc(0.3, 0.25, 0.3, 0.25, 0, -180)],
    "K": [[(0.0, 1.0), (0.0, 0.0)], [(0.6, 1.0), (0.0, 0.45), (0.6, 0.0)]],
    "L": [[(0.0, 1.0), (0.0, 0.0), (0.55, 0.0)]],
    "M": [[(0.0, 0.0), (0.0, 1.0), (0.35, 0.4), (0.7, 1.0), (0.7, 0.0)]],
    "N": [[(0.0, 0.0), (0.0, 1.0), (0.6, 0.0), (0.6, 1.0)]],
    "O": [_arc(0.4, 0.5, 0.4, 0.5, 90, 450, n=16)],
    "P": [[(0.0, 0.0), (0.0, 1.0)], _arc(0.0, 0.75, 0.45, 0.25, 90, -90)],
    "Q": [_arc(0.4, 0.5, 0.4, 0.5, 90, 450, n=16), [(0.45, 0.25), (0.8, -0.05)]],
    "R": [[(0.0, 0.0), (0.0, 1.0)], _arc(0.0, 0.75, 0.45, 0.25, 90, -90), [(0.15, 0.5), (0.6, 0.0)]],
    "S": [_arc(0.35, 0.75, 0.35, 0.25, 30, 270), _arc(0.35, 0.25, 0.35, 0.25, 90, -150)],
    "T": [[(0.0, 1.0), (0.7, 1.0)], [(0.35, 1.0), (0.35, 0.0)]],
    "U": [[(0.0, 1.0), (0.0, 0.3)], _arc(0.3, 0.3, 0.3, 0.3, 180, 360), [(0.6, 0.3), (0.6, 1.0)]],
    "V": [[(0.0, 1.0), (0.35, 0.0), (0.7, 1.0)]],
    "W": [[(0.0, 1.0), (0.2, 0.0), (0.4, 0.7), (0.6, 0.0), (0.8, 1.0)]],
    "X": [[(0.0, 1.0), (0.7, 0.0)], [(0.7, 1.0), (0.0, 0.0)]],
    "Y": [[(0.0, 1.0), (0.35, 0.5), (0.7, 1.0)], [(0.35, 0.5), (0.35, 0.0)]],
    "Z": [[(0.0, 1.0), (0.65, 1.0), (0.0, 0.0), (0.65, 0.0)]],
}


def letter_path(letter):
    """
    Return the concatenated skeleton of a letter as an (n, 2) array.

    Consecutive duplicate vertices (a stroke starting where the previous
    one ended) are collapsed.

    Raises:
        KeyError: If the letter has no archetype
    """
    points = np.array([p for stroke in _STROKES[letter] for p in stroke], dtype=np.float64)
    keep = np.ones(points.shape[0], dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(points, axis=0)) > 1e-12, axis=1)
    return points[keep]

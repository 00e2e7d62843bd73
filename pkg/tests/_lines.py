"""Shared test helper: pixels of an ideal line on the downsampled frame."""

import math

import numpy as np

from neurotrack.hough import HoughGrid


def line_pixels(angle, offset=0.0, half_width=0.5, grid=None):
    """Downsampled pixels whose centres lie within ``half_width`` of a line.

    ``angle`` is counter-clockwise from the image horizontal; ``offset`` is the
    signed distance of the line from the frame centre, in downsampled pixels.
    """
    grid = grid or HoughGrid()
    ys, xs = np.divmod(np.arange(grid.n_pixels), grid.frame_width)
    u = xs - (grid.frame_width - 1) / 2
    v = (grid.frame_height - 1) / 2 - ys
    a = math.radians(angle)
    d = -u * math.sin(a) + v * math.cos(a) - offset
    keep = np.abs(d) <= half_width
    return xs[keep], ys[keep]

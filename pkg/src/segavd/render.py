"""SVG pictures of planar instances and structure levels."""

from __future__ import annotations

import math

import numpy as np

from .avd import AvdDag
from .config import UsageError
from .geometry import SegmentSet


def _f(v: float) -> str:
    return repr(round(float(v), 6))


def ellipse_params(E) -> tuple[float, float, float]:
    """``(major, minor, angle_degrees)`` of a planar ellipsoid, angle of the major axis."""
    axes = E.semi_axes
    dirs = E.directions
    k = int(np.argmax(axes))
    v = dirs[:, k]
    ang = math.degrees(math.atan2(v[1], v[0]))
    # fold into (-90, 90] so equal ellipses print identically
    if ang <= -90.0:
        ang += 180.0
    elif ang > 90.0:
        ang -= 180.0
    return float(axes[k]), float(axes[1 - k]), ang


def render_svg(
    S: SegmentSet,
    dag: AvdDag | None = None,
    level: int | None = None,
    exponent: int = 0,
    width: int = 800,
    stroke_scale: float = 1.0,
    pad: float = 0.15,
) -> str:
    """Segments as lines plus the outer ellipsoids of one (level, exponent) slice.

    With ``level=None`` every final leaf is drawn. The view box is the
    segments' bounding box grown by ``pad`` of its extent on each side.
    """
    if S.dim != 2:
        raise UsageError(f"rendering supports dimension 2 only, got {S.dim}")
    if width <= 0 or stroke_scale <= 0:
        raise UsageError("width and stroke scale must be positive")
    P = S.endpoints()
    lo, hi = P.min(axis=0), P.max(axis=0)
    ext = max(float((hi - lo).max()), 1e-9)
    lo = lo - pad * ext
    hi = hi + pad * ext
    w, h = hi - lo
    height = max(1, int(round(width * h / w)))
    unit = w / width
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="{_f(lo[0])} {_f(-hi[1])} {_f(w)} {_f(h)}">',
        f'<g transform="scale(1,-1)" fill="none">',
    ]
    if dag is not None:
        nodes = [nd for nd in dag.nodes if nd.kind == "final_leaf"] if level is None else dag.nodes_at(level, exponent)
        out.append(f'<g class="ellipses" stroke="#3465a4" stroke-width="{_f(stroke_scale * unit)}">')
        for nd in sorted(nodes, key=lambda nd: nd.id):
            a, b, ang = ellipse_params(nd.outer)
            cx, cy = nd.outer.center
            out.append(
                f'<ellipse data-node="{nd.id}" data-kind="{nd.kind}" cx="{_f(cx)}" cy="{_f(cy)}" rx="{_f(a)}" '
                f'ry="{_f(b)}" transform="rotate({_f(ang)} {_f(cx)} {_f(cy)})"/>'
            )
        out.append("</g>")
    out.append(f'<g class="segments" stroke="#000000" stroke-width="{_f(3 * stroke_scale * unit)}">')
    for k in range(S.n):
        (x1, y1), (x2, y2) = S.A[k], S.B[k]
        out.append(f'<line data-segment="{k}" x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}"/>')
    out += ["</g>", "</g>", "</svg>"]
    return "\n".join(out) + "\n"

"""Text formats: instance files, tabulated policies, CSV tables and SVG charts.

Instance file (decimal text, row-major, 17 significant digits)::

    lqteam-instance 1
    m 2
    obs_dims 1 1
    n 16
    matrix Q 2 2
    2 1
    1 2
    matrix W 4 4
    ...
    matrix R 16 4
    ...

``S`` and ``H_i`` are rebuilt from ``W`` and ``R`` on load.

Policy file::

    lqteam-policy 1
    players 2
    player 1 dims 1
    edges 65
    <65 numbers>
    values 64
    <64 numbers>
    player 2 dims 2
    edges 25
    ...
    edges 25
    ...
    values 24 24
    <576 numbers, row-major>
"""

import csv
import html
import math

import numpy as np

from .errors import InstanceFormatError
from .pbp import TabulatedPolicy
from .stiefel import OrthonormalMatrix
from .team import TeamSpec, build_instance

INSTANCE_MAGIC = "lqteam-instance 1"
POLICY_MAGIC = "lqteam-policy 1"


def fmt(x):
    return format(float(x), ".17g")


def _row(values):
    return " ".join(fmt(v) for v in np.ravel(values))


def _matrix_lines(name, a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return [f"matrix {name} {a.shape[0]} {a.shape[1]}"] + [_row(r) for r in a]


def dumps_instance(instance):
    spec = instance.spec
    lines = [
        INSTANCE_MAGIC,
        f"m {spec.m}",
        "obs_dims " + " ".join(str(d) for d in spec.obs_dims),
        f"n {instance.n}",
    ]
    lines += _matrix_lines("Q", spec.Q)
    lines += _matrix_lines("W", spec.W)
    lines += _matrix_lines("R", instance.R.entries)
    return "\n".join(lines) + "\n"


def save_instance(instance, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps_instance(instance))


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    @property
    def lineno(self):
        return self.pos

    def next(self, what):
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line and not line.startswith("#"):
                return line
        raise InstanceFormatError(f"unexpected end of file, expected {what}", self.pos)

    def fail(self, message):
        raise InstanceFormatError(message, self.pos)

    def keyword(self, key, count=None):
        parts = self.next(key).split()
        if parts[0] != key:
            self.fail(f"expected {key!r}, found {parts[0]!r}")
        args = parts[1:]
        if count is not None and len(args) != count:
            self.fail(f"{key!r} takes {count} value(s), found {len(args)}")
        return args

    def ints(self, args):
        try:
            out = [int(a) for a in args]
        except ValueError:
            self.fail(f"expected integers, found {' '.join(args)!r}")
        if any(v <= 0 for v in out):
            self.fail("dimensions must be positive")
        return out

    def floats(self, count, what):
        parts = self.next(what).split()
        if len(parts) != count:
            self.fail(f"{what}: expected {count} numbers, found {len(parts)}")
        try:
            return [float(p) for p in parts]
        except ValueError:
            self.fail(f"{what}: malformed number")

    def matrix(self, name, shape=None):
        args = self.keyword("matrix", 3)
        if args[0] != name:
            self.fail(f"expected matrix {name!r}, found {args[0]!r}")
        rows, cols = self.ints(args[1:])
        if shape is not None and (rows, cols) != tuple(shape):
            self.fail(f"matrix {name} header says {rows}x{cols}, expected {shape[0]}x{shape[1]}")
        return np.array([self.floats(cols, f"row {r + 1} of {name}") for r in range(rows)])


def loads_instance(text):
    src = _Lines(text)
    if src.next("header") != INSTANCE_MAGIC:
        src.fail(f"missing {INSTANCE_MAGIC!r} header")
    (m,) = src.ints(src.keyword("m", 1))
    dims = src.ints(src.keyword("obs_dims"))
    if len(dims) != m:
        src.fail(f"obs_dims lists {len(dims)} sizes for m={m}")
    (n,) = src.ints(src.keyword("n", 1))
    ell = m + sum(dims)
    Q = src.matrix("Q", (m, m))
    W = src.matrix("W", (ell, ell))
    R = src.matrix("R", (n, ell))
    spec = TeamSpec(m=m, obs_dims=tuple(dims), Q=Q, W=W)
    return build_instance(spec, n, OrthonormalMatrix(R))


def load_instance(path):
    with open(path, encoding="ascii") as fh:
        return loads_instance(fh.read())


def dumps_policy(policy):
    lines = [POLICY_MAGIC, f"players {policy.m}"]
    for i, (edges, values) in enumerate(zip(policy.edges, policy.values), start=1):
        lines.append(f"player {i} dims {len(edges)}")
        for e in edges:
            lines += [f"edges {e.size}", _row(e)]
        lines += ["values " + " ".join(str(s) for s in values.shape), _row(values)]
    return "\n".join(lines) + "\n"


def loads_policy(text):
    src = _Lines(text)
    if src.next("header") != POLICY_MAGIC:
        src.fail(f"missing {POLICY_MAGIC!r} header")
    (m,) = src.ints(src.keyword("players", 1))
    all_edges, all_values = [], []
    for i in range(1, m + 1):
        args = src.keyword("player", 3)
        if args[0] != str(i) or args[1] != "dims":
            src.fail(f"expected 'player {i} dims <d>'")
        (d,) = src.ints(args[2:])
        edges = []
        for _ in range(d):
            (k,) = src.ints(src.keyword("edges", 1))
            edges.append(np.array(src.floats(k, "edges")))
        shape = src.ints(src.keyword("values"))
        if shape != [e.size - 1 for e in edges]:
            src.fail("values shape does not match edges")
        all_edges.append(edges)
        all_values.append(np.array(src.floats(int(np.prod(shape)), "values")).reshape(shape))
    try:
        return TabulatedPolicy(all_edges, all_values)
    except ValueError as exc:
        raise InstanceFormatError(str(exc), src.lineno) from None


def write_csv(path, columns, rows):
    """Write ``rows`` (sequences aligned with ``columns``); floats at 17 digits."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def svg_line_chart(title, x, series, xlabel="n", ylabel="", logx=True, width=640, height=400):
    """Static SVG line chart; ``series`` maps a label to y values aligned with ``x``."""
    pad_l, pad_r, pad_t, pad_b = 70, 150, 40, 50
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b
    xs = np.log10(np.asarray(x, dtype=float)) if logx else np.asarray(x, dtype=float)
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.array([0.0])
    if finite.size == 0:
        finite = np.array([0.0])
    y0, y1 = float(finite.min()), float(finite.max())
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5

    def px(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def py(v):
        return pad_t + (1.0 - (v - y0) / (y1 - y0)) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{html.escape(title)}</text>',
        f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="black"/>',
    ]
    for xv, raw in zip(xs, x):
        out.append(f'<line x1="{px(xv):.2f}" y1="{pad_t + ph}" x2="{px(xv):.2f}" y2="{pad_t + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(xv):.2f}" y="{pad_t + ph + 18}" text-anchor="middle">{html.escape(str(raw))}</text>')
    for k in range(5):
        v = y0 + (y1 - y0) * k / 4
        out.append(f'<line x1="{pad_l - 5}" y1="{py(v):.2f}" x2="{pad_l}" y2="{py(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{pad_l - 8}" y="{py(v) + 4:.2f}" text-anchor="end">{v:.4g}</text>')
    axis_note = " (log scale)" if logx else ""
    out.append(f'<text x="{pad_l + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{html.escape(xlabel + axis_note)}</text>')
    if ylabel:
        out.append(
            f'<text x="16" y="{pad_t + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {pad_t + ph / 2:.1f})">{html.escape(ylabel)}</text>'
        )
    for k, (label, y) in enumerate(zip(series, ys)):
        color = colors[k % len(colors)]
        pts = [(px(a), py(b)) for a, b in zip(xs, y) if math.isfinite(b)]
        if pts:
            path = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
            out += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>' for a, b in pts]
        ly = pad_t + 16 * k + 8
        out.append(f'<line x1="{width - pad_r + 10}" y1="{ly}" x2="{width - pad_r + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - pad_r + 35}" y="{ly + 4}">{html.escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, *args, **kwargs):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg_line_chart(*args, **kwargs))

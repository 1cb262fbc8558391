"""Static figure emission: log-log scatter/line plots and 2-d boundary maps.

Figures are SVG files rendered with matplotlib (Agg backend, fixed hash
salt, no date metadata) so that identical inputs produce identical bytes.
Every figure writes the plotted table as a sibling CSV, and machine-readable
summary comments are embedded in the SVG prolog.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402
import numpy as np  # noqa: E402

from sgdlab.mlp import MlpState, centered_predictor, input_gradient  # noqa: E402
from sgdlab.perceptron import PerceptronState, predict  # noqa: E402

plt.rcParams["svg.hashsalt"] = "sgdlab"


@dataclass(frozen=True)
class PlotSpec:
    """What to plot from a record set and how to rescale it.

    Coordinates are rescaled by powers of the group value:
    x -> x * g^x_rescale_exponent, y -> y * g^y_rescale_exponent,
    realizing rescaled-axes figures such as T P^a collapses.
    """

    x_field: str
    y_field: str
    group_by: str
    output_path: str
    x_rescale_exponent: float = 0.0
    y_rescale_exponent: float = 0.0
    log_x: bool = True
    log_y: bool = True


def _get(rec, name):
    if isinstance(rec, dict):
        return rec.get(name)
    return getattr(rec, name, None)


def _inject_comments(path, comments) -> None:
    with open(path) as f:
        lines = f.readlines()
    block = "".join(f"<!-- {c} -->\n" for c in comments)
    with open(path, "w") as f:
        f.write(lines[0])
        f.write(block)
        f.writelines(lines[1:])


def _sidecar(path) -> str:
    base, _ = os.path.splitext(str(path))
    return base + ".csv"


def emit_loglog_svg(records, spec: PlotSpec) -> str:
    """Render one series per group value; returns the SVG path.

    Records with missing or non-finite coordinates are dropped; an empty
    selection is an error.  The plotted table goes to a sibling CSV with
    columns group, x, y, x_scaled, y_scaled.
    """
    rows = []
    for rec in records:
        g, x, y = (_get(rec, spec.group_by), _get(rec, spec.x_field),
                   _get(rec, spec.y_field))
        if g is None or x is None or y is None:
            continue
        g, x, y = float(g), float(x), float(y)
        if not all(map(math.isfinite, (g, x, y))):
            continue
        rows.append((g, x, y, x * g ** spec.x_rescale_exponent,
                     y * g ** spec.y_rescale_exponent))
    if not rows:
        raise ValueError("empty selection: no record carries both plot fields")
    rows.sort()
    groups = sorted({r[0] for r in rows})
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    comments = [f"sgdlab-plot x={spec.x_field} y={spec.y_field} group={spec.group_by} "
                f"xr={spec.x_rescale_exponent} yr={spec.y_rescale_exponent}"]
    for g in groups:
        pts = sorted((r[3], r[4]) for r in rows if r[0] == g)
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        ax.plot(xs, ys, marker="o", ms=4, lw=1.0, label=f"{spec.group_by}={g:g}")
        comments.append(f"sgdlab-series group={g:g} n={len(pts)}")
    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    xlab = spec.x_field
    if spec.x_rescale_exponent != 0.0:
        xlab += f" * {spec.group_by}^{spec.x_rescale_exponent:g}"
    ylab = spec.y_field
    if spec.y_rescale_exponent != 0.0:
        ylab += f" * {spec.group_by}^{spec.y_rescale_exponent:g}"
    ax.set_xlabel(xlab)
    ax.set_ylabel(ylab)
    ax.legend(fontsize=7)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.output_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    _inject_comments(spec.output_path, comments)
    with open(_sidecar(spec.output_path), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["group", "x", "y", "x_scaled", "y_scaled"])
        for r in rows:
            writer.writerow([repr(v) for v in r])
    return str(spec.output_path)


def as_predictor(model):
    """Coerce a perceptron weight vector / state, MlpState, or callable to F(X)."""
    if isinstance(model, MlpState):
        return lambda X: centered_predictor(model, X)
    if isinstance(model, PerceptronState):
        return lambda X: predict(model.w, X)
    if isinstance(model, np.ndarray):
        return lambda X: predict(model, X)
    if callable(model):
        return model
    raise TypeError(f"cannot interpret {type(model).__name__} as a predictor")


def _gradient_probe(model):
    if isinstance(model, MlpState):
        return lambda x: input_gradient(model, x)
    if isinstance(model, PerceptronState):
        return lambda x: model.w / math.sqrt(model.w.size)
    if isinstance(model, np.ndarray):
        return lambda x: model / math.sqrt(model.size)
    return None


def trace_zero_level(F: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Marching-squares trace of the F = 0 level; (n, 2, 2) segments.

    Each segment joins zero crossings found on the edges of one grid cell,
    so by construction F changes sign across every traced segment.  Nodes
    with F exactly zero count as the negative side, which keeps boundaries
    passing through grid nodes traceable.
    """

    def cross(x1, y1, f1, x2, y2, f2):
        t = f1 / (f1 - f2)
        return (x1 + t * (x2 - x1), y1 + t * (y2 - y1))

    segments = []
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            corners = [
                (xs[i], ys[j], F[i, j]),
                (xs[i + 1], ys[j], F[i + 1, j]),
                (xs[i + 1], ys[j + 1], F[i + 1, j + 1]),
                (xs[i], ys[j + 1], F[i, j + 1]),
            ]
            pts = []
            for a in range(4):
                x1, y1, f1 = corners[a]
                x2, y2, f2 = corners[(a + 1) % 4]
                if (f1 > 0.0) != (f2 > 0.0):
                    pts.append(cross(x1, y1, f1, x2, y2, f2))
            if len(pts) == 2:
                segments.append((pts[0], pts[1]))
            elif len(pts) == 4:  # saddle cell: pair edges in order
                segments.append((pts[0], pts[1]))
                segments.append((pts[2], pts[3]))
    return np.asarray(segments, dtype=np.float64).reshape(-1, 2, 2)


@dataclass(frozen=True)
class BoundaryTrace:
    """Rendered decision-boundary figure plus its traced segments."""

    path: str
    segments: np.ndarray


def render_boundary_2d(model, ds, grid_resolution: int = 101,
                       output_path: str = "boundary.svg",
                       show_gradient: bool = False) -> BoundaryTrace:
    """Decision boundary of a 2-d model vs the true boundary.

    Rasterizes sign(F) on a grid, traces the zero crossing, and overlays
    the training points (colored by label) and the true boundary when the
    dataset carries a normal.  Optionally draws the input-gradient arrow
    at a traced boundary point.  Only d = 2 datasets are accepted.
    """
    if ds.d != 2:
        raise ValueError(f"boundary rendering requires d = 2, got d = {ds.d}")
    if grid_resolution < 8:
        raise ValueError("grid_resolution must be >= 8")
    predictor = as_predictor(model)
    span = 1.1 * float(np.max(np.abs(ds.points)))
    xs = np.linspace(-span, span, grid_resolution)
    ys = np.linspace(-span, span, grid_resolution)
    XX, YY = np.meshgrid(xs, ys, indexing="ij")
    F = np.asarray(predictor(np.column_stack([XX.ravel(), YY.ravel()])))
    F = F.reshape(grid_resolution, grid_resolution)
    segments = trace_zero_level(F, xs, ys)

    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    pos = ds.labels > 0
    ax.scatter(ds.points[pos, 0], ds.points[pos, 1], s=12, c="tab:red", label="y=+1")
    ax.scatter(ds.points[~pos, 0], ds.points[~pos, 1], s=12, c="tab:blue", label="y=-1")
    if ds.true_normal is not None:
        tangent = np.array([-ds.true_normal[1], ds.true_normal[0]])
        ax.plot([-span * tangent[0], span * tangent[0]],
                [-span * tangent[1], span * tangent[1]],
                ls="--", c="purple", lw=1.2, label="true boundary")
    if len(segments):
        ax.add_collection(LineCollection(segments, colors="black", lw=1.5))
        ax.plot([], [], c="black", lw=1.5, label="model boundary")
    grad = _gradient_probe(model) if show_gradient else None
    if grad is not None and len(segments):
        mid = segments[np.argmin(np.linalg.norm(segments.mean(axis=1), axis=1))].mean(axis=0)
        g = np.asarray(grad(mid), dtype=np.float64)
        gn = np.linalg.norm(g)
        if gn > 0:
            g = g / gn * 0.35 * span
            ax.annotate("", xy=mid + g, xytext=mid,
                        arrowprops=dict(arrowstyle="->", color="green", lw=1.4))
    ax.set_xlim(-span, span)
    ax.set_ylim(-span, span)
    ax.set_aspect("equal")
    ax.legend(fontsize=7, loc="upper right")
    ax.set_xlabel("x_1")
    ax.set_ylabel("x_2")
    fig.tight_layout()
    fig.savefig(output_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    _inject_comments(output_path, [
        f"sgdlab-boundary resolution={grid_resolution} segments={len(segments)}",
    ])
    with open(_sidecar(output_path), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x1_start", "x2_start", "x1_end", "x2_end"])
        for seg in segments:
            writer.writerow([repr(float(v)) for v in seg.ravel()])
    return BoundaryTrace(path=str(output_path), segments=segments)

"""Read-only analyses of a trained model's latent space.

Maps are keyed by atomic number for element maps and by orbital label for the
variable (transposed) maps. Coordinates are always the encoder mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import kendalltau

from .bvae import TrainedBvae, cells_to_config, decode, encode, encode_table, rounded_cells
from .elements import ElectronConfiguration, ElementTable
from .features import FeatureMatrix

LABEL_KEYS = ("period", "group", "block", "category", "melting_point", "discovery_year")
CONTINUOUS_KEYS = ("melting_point", "discovery_year")


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class LatentMap:
    keys: tuple
    points: np.ndarray
    model_name: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(pts) != len(self.keys):
            raise AnalysisError("one point per key is required")
        if not np.isfinite(pts).all():
            raise AnalysisError("latent coordinates must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "keys", tuple(self.keys))

    def __len__(self):
        return len(self.keys)

    def point(self, key) -> np.ndarray:
        return self.points[self.keys.index(key)]

    def subset(self, keys) -> "LatentMap":
        idx = [self.keys.index(k) for k in keys]
        return LatentMap(tuple(self.keys[i] for i in idx), self.points[idx], self.model_name)


@dataclass(frozen=True)
class PolarMap:
    center: tuple[float, float]
    keys: tuple
    radius: np.ndarray
    angle: np.ndarray

    def __len__(self):
        return len(self.keys)


def encode_elements(model: TrainedBvae, table: ElementTable) -> LatentMap:
    """One mean latent point per element of ``table``, featurized with the model's recipe."""
    mu, _ = encode_table(model, table)
    return LatentMap(tuple(table.zs), mu, model.name)


def encode_rows(model: TrainedBvae, matrix: FeatureMatrix, keys) -> LatentMap:
    mu, _ = encode(model, matrix)
    return LatentMap(tuple(keys), mu, model.name)


# -- centre and polar coordinates ------------------------------------------------

SYMMETRY_PAIRS = ((2, 3), (4, 5), (6, 7))


def symmetry_center(latent: LatentMap, table: ElementTable, pairs=SYMMETRY_PAIRS) -> np.ndarray:
    """Centre from per-period centroids.

    Each pair of periods contributes the midpoint of its two period centroids. The
    two principal axes of those pair midpoints intersect at their mean, which is
    returned. Unlike the plain centroid, every listed period weighs equally.
    """
    period = {rec.z: rec.period for rec in table}
    mids = []
    for a, b in pairs:
        cents = []
        for p in (a, b):
            pts = [latent.points[i] for i, z in enumerate(latent.keys) if period.get(z) == p]
            if not pts:
                raise AnalysisError(f"no encoded elements in period {p}")
            cents.append(np.mean(pts, axis=0))
        mids.append((cents[0] + cents[1]) / 2)
    return np.mean(mids, axis=0)


def estimate_center(latent: LatentMap, mode: str = "centroid", table: ElementTable | None = None,
                    override=None) -> np.ndarray:
    """Centre of the map: ``centroid`` (default), ``symmetry`` or a manual ``override``."""
    if override is not None:
        return np.asarray(override, dtype=float)
    if len(latent) < 3:
        raise AnalysisError("at least 3 points are needed to estimate a centre")
    if mode == "centroid":
        return latent.points.mean(axis=0)
    if mode == "symmetry":
        if table is None:
            raise AnalysisError("symmetry mode needs the element table for periods")
        return symmetry_center(latent, table)
    raise AnalysisError(f"unknown centre mode {mode!r}")


def polar_transform(latent: LatentMap, center) -> PolarMap:
    """Radius and angle in [0, 2*pi) about ``center``; a point on the centre gets (0, 0)."""
    c = np.asarray(center, dtype=float)
    d = latent.points - c
    radius = np.hypot(d[:, 0], d[:, 1])
    angle = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)
    angle[radius == 0] = 0.0
    # mod can return 2*pi for tiny negative angles
    angle[angle >= 2 * np.pi] = 0.0
    return PolarMap((float(c[0]), float(c[1])), latent.keys, radius, angle)


def inverse_polar(polar: PolarMap) -> np.ndarray:
    c = np.asarray(polar.center)
    return np.column_stack([c[0] + polar.radius * np.cos(polar.angle),
                            c[1] + polar.radius * np.sin(polar.angle)])


# -- separation ------------------------------------------------------------------


def silhouette(points: np.ndarray, labels) -> float:
    """Mean silhouette coefficient with Euclidean distances.

    Points in singleton clusters score 0, and so does any point whose intra- and
    nearest-cluster distances are both zero.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise AnalysisError("silhouette needs at least two categories")
    dist = np.sqrt(np.maximum(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1), 0.0))
    member = labels[None, :] == classes[:, None]
    counts = member.sum(axis=1)
    sums = dist @ member.T.astype(float)
    own = np.searchsorted(classes, labels)
    n = len(points)
    a = sums[np.arange(n), own] / np.maximum(counts[own] - 1, 1)
    mean_other = sums / counts[None, :]
    mean_other[np.arange(n), own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[counts[own] == 1] = 0.0
    return float(s.mean())


def _labelled(latent: LatentMap, labels: dict):
    keep = [i for i, k in enumerate(latent.keys) if labels.get(k) is not None]
    return latent.points[keep], [labels[latent.keys[i]] for i in keep]


def category_separation(latent: LatentMap, labels: dict) -> float:
    """Mean silhouette of the points that carry a label; unlabelled points are ignored."""
    points, labs = _labelled(latent, labels)
    if len(set(labs)) < 2:
        raise AnalysisError("category_separation needs at least two categories")
    return silhouette(points, labs)


@dataclass(frozen=True)
class PermutationResult:
    score: float
    null: np.ndarray
    quantile99: float

    @property
    def significant(self) -> bool:
        return self.score > self.quantile99


def separation_permutation_test(latent: LatentMap, labels: dict, n: int = 100,
                                seed: int = 0) -> PermutationResult:
    """Observed separation against ``n`` random relabellings."""
    points, labs = _labelled(latent, labels)
    labs = np.asarray(labs)
    rng = np.random.default_rng(seed)
    null = np.array([silhouette(points, rng.permutation(labs)) for _ in range(n)])
    return PermutationResult(silhouette(points, labs), null, float(np.quantile(null, 0.99)))


# -- ordering --------------------------------------------------------------------


def unwrap_at_largest_gap(angles: np.ndarray) -> np.ndarray:
    """Angles re-expressed so the circle is cut inside the largest empty arc."""
    angles = np.asarray(angles, dtype=float)
    if len(angles) < 2:
        return angles.copy()
    order = np.sort(angles)
    gaps = np.diff(np.append(order, order[0] + 2 * np.pi))
    cut = order[(np.argmax(gaps) + 1) % len(order)]
    return np.mod(angles - cut, 2 * np.pi)


@dataclass(frozen=True)
class OrderScore:
    per_period: dict
    sizes: dict
    overall: float


def sequence_order_score(polar: PolarMap, table: ElementTable, axis: str = "angle",
                         min_size: int = 3) -> OrderScore:
    """Per-period |Kendall tau| between atomic number and angular position.

    Each period's angles are cut at its own largest empty arc, so a period whose
    sector straddles angle 0 is not split. ``axis='radius'`` ranks by radius
    instead. Periods smaller than ``min_size`` are skipped; ``overall`` is the
    mean weighted by period size.
    """
    period = {rec.z: rec.period for rec in table}
    taus, sizes = {}, {}
    for p in sorted({period[z] for z in polar.keys if z in period}):
        idx = [i for i, z in enumerate(polar.keys) if period.get(z) == p]
        if len(idx) < min_size:
            continue
        zs = np.array([polar.keys[i] for i in idx], dtype=float)
        if axis == "angle":
            pos = unwrap_at_largest_gap(polar.angle[idx])
        elif axis == "radius":
            pos = polar.radius[idx]
        else:
            raise AnalysisError(f"unknown axis {axis!r}")
        tau = kendalltau(zs, pos).statistic
        taus[p] = 0.0 if np.isnan(tau) else abs(float(tau))
        sizes[p] = len(idx)
    if not taus:
        raise AnalysisError("no period has enough elements for an ordering score")
    total = sum(sizes.values())
    overall = sum(taus[p] * sizes[p] for p in taus) / total
    return OrderScore(taus, sizes, float(overall))


# -- outliers --------------------------------------------------------------------


@dataclass(frozen=True)
class OutlierReport:
    ranked: list
    k: int
    periods: tuple

    def top(self, n: int) -> list:
        return [z for z, _ in self.ranked[:n]]


def outlier_scores(latent: LatentMap, table: ElementTable, k: int = 3, periods=None) -> OutlierReport:
    """Same-period kNN outlier scores.

    ``score = |x - mean(k nearest same-period neighbours)| / median of that distance
    over the period``. Periods with at most ``k`` encoded elements are skipped.
    """
    period = {rec.z: rec.period for rec in table}
    wanted = set(periods) if periods is not None else None
    scores = []
    used = []
    for p in sorted({period[z] for z in latent.keys if z in period}):
        if wanted is not None and p not in wanted:
            continue
        idx = [i for i, z in enumerate(latent.keys) if period.get(z) == p]
        if len(idx) <= k:
            continue
        pts = latent.points[idx]
        dist = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        d = np.linalg.norm(pts - pts[nearest].mean(axis=1), axis=1)
        scale = np.median(d)
        if scale == 0:
            scale = d.mean()
        s = d / scale if scale > 0 else np.zeros_like(d)
        scores += [(latent.keys[i], float(v)) for i, v in zip(idx, s)]
        used.append(p)
    scores.sort(key=lambda t: (-t[1], t[0]))
    return OutlierReport(scores, k, tuple(used))


# -- decoded grid ----------------------------------------------------------------


@dataclass
class GridDecode:
    bounds: tuple[float, float, float, float]
    n: int
    nodes: np.ndarray
    index: np.ndarray
    decoded: np.ndarray
    cells: np.ndarray | None
    z_estimate: np.ndarray | None
    recipe: object = None
    _configs: list | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.nodes)

    @property
    def configs(self) -> list[ElectronConfiguration]:
        if self._configs is None:
            if self.cells is None:
                raise AnalysisError("this feature variant cannot be turned into configurations")
            self._configs = [cells_to_config(self.recipe, row) for row in self.cells]
        return self._configs


def padded_bounds(latent: LatentMap, pad: float = 0.1) -> tuple[float, float, float, float]:
    lo, hi = latent.points.min(axis=0), latent.points.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    lo, hi = lo - pad * span, hi + pad * span
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def decode_grid(model: TrainedBvae, bounds=None, n: int = 50, latent: LatentMap | None = None,
                pad: float = 0.1) -> GridDecode:
    """Decode an ``n`` x ``n`` lattice; node order is row-major with ``i`` along x.

    The atomic-number estimate of a node is the sum of its rounded, denormalized,
    capacity-clamped cells. No clamp to 118 is applied.
    """
    if n < 2:
        raise AnalysisError("grid needs n >= 2")
    if bounds is None:
        if latent is None:
            raise AnalysisError("give explicit bounds or a latent map to derive them")
        bounds = padded_bounds(latent, pad)
    xmin, xmax, ymin, ymax = (float(b) for b in bounds)
    if not all(map(math.isfinite, (xmin, xmax, ymin, ymax))) or xmax <= xmin or ymax <= ymin:
        raise AnalysisError(f"invalid bounds {bounds}")
    xs, ys = np.linspace(xmin, xmax, n), np.linspace(ymin, ymax, n)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    index = np.column_stack([ii.ravel(), jj.ravel()])
    nodes = np.column_stack([xs[index[:, 0]], ys[index[:, 1]]])
    decoded = decode(model, nodes)
    try:
        cells = rounded_cells(model.recipe, decoded)
        z_est = cells.sum(axis=1)
    except ValueError:
        cells = z_est = None
    return GridDecode((xmin, xmax, ymin, ymax), n, nodes, index, decoded, cells, z_est,
                      model.recipe)


def central_estimate(grid: GridDecode, center, radius: float) -> float:
    """Mean atomic-number estimate over nodes within ``radius`` of ``center``."""
    if grid.z_estimate is None:
        raise AnalysisError("grid has no atomic-number estimates")
    near = np.linalg.norm(grid.nodes - np.asarray(center, dtype=float), axis=1) <= radius
    return float(grid.z_estimate[near].mean()) if near.any() else float("nan")


# -- labels and export -----------------------------------------------------------


def element_labels(table: ElementTable, key: str) -> dict:
    """Per-element label values for plotting; ``None`` marks a missing value."""
    if key not in LABEL_KEYS:
        raise KeyError(f"unknown label key {key!r}; choose from {', '.join(LABEL_KEYS)}")
    return {rec.z: getattr(rec, key) for rec in table}


PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#ad494a", "#637939", "#8c6d31",
    "#7b4173", "#3182bd", "#e6550d", "#31a354", "#756bb1", "#636363",
)
_RAMP = ((0.0, (68, 1, 84)), (0.25, (59, 82, 139)), (0.5, (33, 145, 140)),
         (0.75, (94, 201, 98)), (1.0, (253, 231, 37)))


def ramp_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(_RAMP, _RAMP[1:]):
        if t <= t1:
            f = (t - t0) / (t1 - t0)
            rgb = [round(a + f * (b - a)) for a, b in zip(c0, c1)]
            return "#%02x%02x%02x" % tuple(rgb)
    return "#%02x%02x%02x" % _RAMP[-1][1]


def _missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def _sort_key(v):
    return (0, v, "") if isinstance(v, (int, float)) else (1, 0, str(v))


def scatter_xy(obj) -> tuple[tuple, np.ndarray, str, str]:
    """(keys, xy, x-axis name, y-axis name) for a LatentMap, PolarMap or GridDecode."""
    if isinstance(obj, LatentMap):
        return obj.keys, obj.points, "mu1", "mu2"
    if isinstance(obj, PolarMap):
        return obj.keys, np.column_stack([obj.angle, obj.radius]), "angle", "radius"
    if isinstance(obj, GridDecode):
        return tuple(map(tuple, obj.index.tolist())), obj.nodes, "x", "y"
    raise TypeError(f"cannot plot {type(obj).__name__}")


def _fmt(v) -> str:
    if _missing(v):
        return ""
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def render_svg(keys, xy, labels: dict | None, continuous: bool, title: str = "",
               annotations: dict | None = None, axis_names=("x", "y")) -> str:
    """Static SVG 1.1 scatter. Missing label values are drawn as hollow circles."""
    width, height, margin, legend_w = 640, 480, 50, 150
    plot_w, plot_h = width - 2 * margin - legend_w, height - 2 * margin
    xy = np.asarray(xy, dtype=float)
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)

    def sx(v):
        return margin + (v - lo[0]) / span[0] * plot_w

    def sy(v):
        return height - margin - (v - lo[1]) / span[1] * plot_h

    values = [None if labels is None else labels.get(k) for k in keys]
    present = [v for v in values if not _missing(v)]
    if continuous and present:
        vmin, vmax = min(present), max(present)
        vspan = vmax - vmin if vmax > vmin else 1.0

        def color(v):
            return ramp_color((v - vmin) / vspan)
    else:
        cats = sorted(set(present), key=_sort_key)
        lookup = {c: PALETTE[i % len(PALETTE)] for i, c in enumerate(cats)}

        def color(v):
            return lookup[v]

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{_escape(title)}</text>',
        f'<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" fill="none" '
        'stroke="#444444"/>',
        f'<text x="{margin + plot_w / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{axis_names[0]}</text>',
        f'<text x="14" y="{margin + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11" transform="rotate(-90 14 '
        f'{margin + plot_h / 2:.1f})">{axis_names[1]}</text>',
    ]
    for (x, y), v, k in zip(xy, values, keys):
        cx, cy = sx(x), sy(y)
        if _missing(v) and labels is not None:
            out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3.5" fill="none" '
                       'stroke="#555555" class="missing"/>')
        else:
            fill = "#1f77b4" if labels is None else color(v)
            out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3.5" fill="{fill}" '
                       'fill-opacity="0.85"/>')
        if annotations and k in annotations:
            out.append(f'<text x="{cx + 4:.2f}" y="{cy - 4:.2f}" font-family="sans-serif" '
                       f'font-size="8">{_escape(str(annotations[k]))}</text>')
    lx = width - margin - legend_w + 20
    if labels is not None and continuous and present:
        out.append('<defs><linearGradient id="ramp" x1="0" y1="1" x2="0" y2="0">' + "".join(
            f'<stop offset="{t}" stop-color="{ramp_color(t)}"/>' for t, _ in _RAMP)
            + "</linearGradient></defs>")
        out.append(f'<rect x="{lx}" y="{margin}" width="16" height="{plot_h}" fill="url(#ramp)"/>')
        out.append(f'<text x="{lx + 22}" y="{margin + 8}" font-family="sans-serif" '
                   f'font-size="10">{_fmt(vmax)}</text>')
        out.append(f'<text x="{lx + 22}" y="{margin + plot_h}" font-family="sans-serif" '
                   f'font-size="10">{_fmt(vmin)}</text>')
    elif labels is not None:
        for i, c in enumerate(cats):
            y = margin + 10 + 16 * i
            out.append(f'<g class="legend-entry"><circle cx="{lx}" cy="{y}" r="4" '
                       f'fill="{lookup[c]}"/><text x="{lx + 10}" y="{y + 4}" '
                       f'font-family="sans-serif" font-size="10">{_escape(str(c))}</text></g>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def svg_with_header(svg: str, header: dict | None) -> str:
    """Embed ``header`` as an XML comment after the declaration."""
    if not header:
        return svg
    first, rest = svg.split("\n", 1)
    body = "; ".join(f"{k}: {header[k]}" for k in sorted(header)).replace("--", "- -")
    return f"{first}\n<!-- {body} -->\n{rest}"


def header_lines(header: dict | None) -> list[str]:
    return [f"# {k}: {header[k]}" for k in sorted(header or {})]


def export_scatter(obj, stem, labels: dict | None = None, label_name: str = "label",
                   continuous: bool | None = None, title: str = "", header: dict | None = None,
                   annotations: dict | None = None, svg: bool = True) -> list[Path]:
    """Write ``<stem>.csv`` (always) and ``<stem>.svg``; returns the written paths.

    ``label_name`` in CONTINUOUS_KEYS selects the colour ramp unless ``continuous``
    is given explicitly.
    """
    keys, xy, xname, yname = scatter_xy(obj)
    if len(keys) == 0:
        raise AnalysisError("nothing to export")
    if continuous is None:
        continuous = label_name in CONTINUOUS_KEYS
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    lines = header_lines(header)
    key_cols = "i,j" if isinstance(obj, GridDecode) else "key"
    lines.append(f"{key_cols},{xname},{yname}" + (f",{label_name}" if labels is not None else ""))
    for k, (x, y) in zip(keys, xy):
        key_text = f"{k[0]},{k[1]}" if isinstance(k, tuple) else str(k)
        row = f"{key_text},{x!r},{y!r}"
        if labels is not None:
            row += "," + _fmt(labels.get(k))
        lines.append(row)
    csv_path = stem.with_suffix(".csv")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths = [csv_path]
    if svg:
        svg_path = stem.with_suffix(".svg")
        text = render_svg(keys, xy, labels, continuous, title, annotations, (xname, yname))
        svg_path.write_text(svg_with_header(text, header), encoding="utf-8")
        paths.append(svg_path)
    return paths


def render_images_svg(panels, title: str = "", vmax: float = 14.0) -> str:
    """Small-multiple 7x4 heat maps; ``panels`` is a list of (caption, 7x4 array)."""
    cell, gap, top = 18, 24, 40
    pw = 4 * cell
    width = gap + len(panels) * (pw + gap)
    height = top + 7 * cell + 40
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{gap}" y="20" font-family="sans-serif" font-size="13">{_escape(title)}</text>',
    ]
    for k, (caption, image) in enumerate(panels):
        x0 = gap + k * (pw + gap)
        image = np.asarray(image, dtype=float).reshape(7, 4)
        for r in range(7):
            for c in range(4):
                v = image[r, c]
                out.append(f'<rect x="{x0 + c * cell}" y="{top + r * cell}" width="{cell}" '
                           f'height="{cell}" fill="{ramp_color(v / vmax)}" stroke="#dddddd"/>')
        out.append(f'<text x="{x0}" y="{top + 7 * cell + 14}" font-family="sans-serif" '
                   f'font-size="9">{_escape(caption)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

"""Feature engineering from electron configurations.

Every representation used by the models is built here: raw and realigned shell
totals, the 19 orbital occupancies, the realigned 7x4 shell/subshell image, vacancy
counts against the closing noble gas, and period encodings. :func:`build_feature_matrix`
assembles a full training matrix (normalize, duplicate, add noise) and records the
recipe so that later encodes can featurize new elements the same way.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .elements import (
    CAPACITY,
    ORBITALS,
    SUBSHELLS,
    ElectronConfiguration,
    ElementTable,
    Orbital,
    noble_gas_config,
    shell_totals,
)

GRID_ROWS = 7
GRID_COLS = 4
GRID_CAPACITY = np.array([[CAPACITY[s] for s in SUBSHELLS]] * GRID_ROWS, dtype=float)

# (row, col) with row 0 == realigned shell _1; these stay empty for every element
EMPTY_CELLS = tuple(
    (r - 1, SUBSHELLS.index(s))
    for r, s in [(7, "p"), (7, "d"), (7, "f"), (6, "d"), (6, "f"), (5, "f"),
                 (3, "f"), (2, "d"), (2, "f")]
)

OUTER11 = ((4, "d"), (4, "f"), (3, "s"), (3, "p"), (3, "d"), (2, "s"), (2, "p"),
           (1, "s"), (1, "p"), (1, "d"), (1, "f"))

VARIANTS = ("shell7", "shell7r", "orig19", "image28", "outer11", "valence4", "vac19", "vac4")
PERIOD_ENCODINGS = ("none", "normalized", "one_hot")


def grid_labels() -> list[str]:
    return [f"_{r + 1}{s}" for r in range(GRID_ROWS) for s in SUBSHELLS]


def realign_shells(config: ElectronConfiguration) -> tuple[int, ...]:
    """Shell totals reversed so the outermost occupied shell comes first."""
    totals = shell_totals(config)
    n_shells = max((k + 1 for k, t in enumerate(totals) if t), default=0)
    out = list(reversed(totals[:n_shells]))
    return tuple(out + [0] * (7 - n_shells))


def realign_subshells(config: ElectronConfiguration) -> np.ndarray:
    """Realigned 7x4 grid; row 0 is shell _1, columns are s, p, d, f.

    The valence group {Ns, Np, (N-1)d, (N-2)f} of period N goes to _1, every other
    orbital (n, l) to shell _(N-n+1) in its own subshell column.
    """
    period = config.period()
    grid = np.zeros((GRID_ROWS, GRID_COLS))
    for orb, count in config.occupied():
        valence_n = period - max(orb.l - 1, 0)
        row = 0 if orb.n == valence_n else period - orb.n
        grid[row, orb.l] += count
    return grid


def grid_period(grid: np.ndarray) -> int:
    """Period encoded by a realigned grid: the depth of its last non-empty row."""
    rows = np.flatnonzero(np.asarray(grid).reshape(GRID_ROWS, GRID_COLS).sum(axis=1) > 0)
    return int(rows[-1]) + 1 if rows.size else 0


def grid_to_config(grid: np.ndarray, period: int | None = None) -> ElectronConfiguration:
    """Invert :func:`realign_subshells`; the period defaults to :func:`grid_period`.

    Cells are mapped back to orbitals; cells with no orbital (structurally empty or
    outside 1s..7p) are dropped, and counts are clamped to orbital capacity.
    """
    grid = np.asarray(grid).reshape(GRID_ROWS, GRID_COLS)
    period = grid_period(grid) if period is None else period
    occ: dict[Orbital, int] = {}
    for row in range(GRID_ROWS):
        for col, sub in enumerate(SUBSHELLS):
            count = int(grid[row, col])
            if count <= 0:
                continue
            n = period - max(col - 1, 0) if row == 0 else period - row
            try:
                orb = Orbital(n, sub)
            except ValueError:
                continue
            if orb in ORBITALS:
                occ[orb] = min(count, orb.capacity)
    return ElectronConfiguration.from_mapping(occ)


def vacancies_original(config: ElectronConfiguration, period: int | None = None) -> np.ndarray:
    """Electrons missing per orbital relative to the noble gas closing the period."""
    period = config.period() if period is None else period
    noble = noble_gas_config(period)
    vac = np.array(noble.occupancy, dtype=float) - np.array(config.occupancy, dtype=float)
    # orbitals the noble gas leaves empty carry no vacancy
    vac[np.array(noble.occupancy) == 0] = 0.0
    return vac


def vacancies_realigned(config: ElectronConfiguration) -> np.ndarray:
    """Vacancies of the _1 row against the closing noble gas's _1 row."""
    noble = noble_gas_config(config.period())
    return realign_subshells(noble)[0] - realign_subshells(config)[0]


def encode_period(period: int, mode: str = "normalized") -> np.ndarray:
    if not 1 <= period <= 7:
        raise ValueError(f"period must be in 1..7, got {period}")
    if mode == "normalized":
        return np.array([period / 7.0])
    if mode == "one_hot":
        out = np.zeros(7)
        out[period - 1] = 1.0
        return out
    raise ValueError(f"unknown period encoding {mode!r}")


def select_features(grid: np.ndarray, variant: str = "full28") -> np.ndarray:
    if variant == "full28":
        return grid.reshape(-1).copy()
    if variant == "outer11":
        return np.array([grid[r - 1, SUBSHELLS.index(s)] for r, s in OUTER11])
    if variant == "valence4":
        return grid[0].copy()
    raise ValueError(f"unknown grid selection {variant!r}")


def raw_features(config: ElectronConfiguration, variant: str) -> np.ndarray:
    """Un-normalized feature vector for one configuration."""
    if variant == "shell7":
        return np.array(shell_totals(config), dtype=float)
    if variant == "shell7r":
        return np.array(realign_shells(config), dtype=float)
    if variant == "orig19":
        return np.array(config.occupancy, dtype=float)
    if variant == "vac19":
        return vacancies_original(config)
    if variant == "vac4":
        return vacancies_realigned(config)
    grid = realign_subshells(config)
    if variant == "image28":
        return select_features(grid, "full28")
    if variant in ("outer11", "valence4"):
        return select_features(grid, variant)
    raise ValueError(f"unknown feature variant {variant!r}")


def feature_labels(variant: str, period_encoding: str = "none") -> list[str]:
    if variant in ("shell7", "shell7r"):
        labels = [f"shell{k}" for k in range(1, 8)] if variant == "shell7" else [
            f"_{k}" for k in range(1, 8)]
    elif variant == "orig19":
        labels = [o.label for o in ORBITALS]
    elif variant == "vac19":
        labels = [f"vac_{o.label}" for o in ORBITALS]
    elif variant == "vac4":
        labels = [f"vac_1{s}" for s in SUBSHELLS]
    elif variant == "image28":
        labels = grid_labels()
    elif variant == "outer11":
        labels = [f"_{r}{s}" for r, s in OUTER11]
    elif variant == "valence4":
        labels = [f"_1{s}" for s in SUBSHELLS]
    else:
        raise ValueError(f"unknown feature variant {variant!r}")
    if period_encoding == "normalized":
        labels.append("period")
    elif period_encoding == "one_hot":
        labels += [f"period{k}" for k in range(1, 8)]
    return labels


@dataclass(frozen=True)
class NoiseSpec:
    alpha: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"noise alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class Recipe:
    """How a FeatureMatrix was built; stored with trained models."""

    variant: str = "image28"
    normalization: str = "total"
    sqrt: bool = False
    duplication: int = 1
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    period_encoding: str = "none"
    transposed: bool = False
    # filled in by build_feature_matrix so new rows can be scaled identically
    divisor: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown feature variant {self.variant!r}")
        if self.normalization not in ("total", "per_column"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.duplication < 1:
            raise ValueError(f"duplication must be >= 1, got {self.duplication}")
        if self.period_encoding not in PERIOD_ENCODINGS:
            raise ValueError(f"unknown period encoding {self.period_encoding!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["divisor"] = None if self.divisor is None else list(self.divisor)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Recipe":
        data = dict(data)
        data["noise"] = NoiseSpec(**data.get("noise", {}))
        if data.get("divisor") is not None:
            data["divisor"] = tuple(float(v) for v in data["divisor"])
        return cls(**data)


@dataclass
class FeatureMatrix:
    rows: np.ndarray
    row_labels: list
    column_labels: list[str]
    recipe: Recipe
    targets: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=int)
        return FeatureMatrix(
            self.rows[idx], [self.row_labels[i] for i in idx], list(self.column_labels),
            self.recipe, None if self.targets is None else self.targets[idx])

    def to_csv(self, header_comments: dict | None = None) -> str:
        buf = io.StringIO()
        for key, value in (header_comments or {}).items():
            buf.write(f"# {key}: {value}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label"] + list(self.column_labels))
        for label, row in zip(self.row_labels, self.rows):
            w.writerow([label] + [repr(float(v)) for v in row])
        return buf.getvalue()


def featurize_configs(configs, recipe: Recipe) -> np.ndarray:
    """Featurize configurations with a fitted recipe (no duplication or noise)."""
    if recipe.divisor is None:
        raise ValueError("recipe has no fitted divisor; build a FeatureMatrix first")
    base = np.array([raw_features(c, recipe.variant) for c in configs], dtype=float)
    if recipe.sqrt:
        base = np.sqrt(base)
    divisor = np.array(recipe.divisor)
    safe = np.where(divisor > 0, divisor, 1.0)
    base = np.clip(base / safe, 0.0, 1.0)
    return _append_period(base, configs, recipe.period_encoding)


def _append_period(base: np.ndarray, configs, mode: str) -> np.ndarray:
    if mode == "none":
        return base
    extra = np.array([encode_period(c.period(), mode) for c in configs])
    return np.hstack([base, extra])


def build_feature_matrix(table: ElementTable, recipe: Recipe | None = None, **kw) -> FeatureMatrix:
    """Assemble a normalized, duplicated, optionally noisy feature matrix.

    Pipeline: select features, optional element-wise sqrt, normalize (global maximum
    or per-column maximum of the un-duplicated matrix, all-zero columns stay zero),
    duplicate each row ``k`` times, add ``alpha * N(0, 1)`` noise and clamp to [0, 1].
    Period encodings, when requested, are appended after normalization.
    """
    recipe = replace(recipe or Recipe(), **kw)
    if recipe.transposed:
        return transpose_for_variables(table, recipe.duplication)
    configs = [rec.config for rec in table]
    base = np.array([raw_features(c, recipe.variant) for c in configs], dtype=float)
    if recipe.sqrt:
        base = np.sqrt(base)
    if recipe.normalization == "total":
        divisor = np.full(base.shape[1], base.max())
    else:
        divisor = base.max(axis=0)
    safe = np.where(divisor > 0, divisor, 1.0)
    base = base / safe
    base = _append_period(base, configs, recipe.period_encoding)
    recipe = replace(recipe, divisor=tuple(float(v) for v in divisor))

    k = recipe.duplication
    rows = np.repeat(base, k, axis=0)
    labels = [z for z in table.zs for _ in range(k)]
    if recipe.noise.alpha > 0:
        rng = np.random.default_rng(recipe.noise.seed)
        rows = np.clip(rows + recipe.noise.alpha * rng.standard_normal(rows.shape), 0.0, 1.0)
    return FeatureMatrix(rows, labels, feature_labels(recipe.variant, recipe.period_encoding), recipe)


def transpose_for_variables(table: ElementTable, duplication: int = 1) -> FeatureMatrix:
    """Orbitals as rows, elements as columns, occupancy / global max, duplicated."""
    if duplication < 1:
        raise ValueError(f"duplication must be >= 1, got {duplication}")
    base = np.array([rec.config.occupancy for rec in table], dtype=float).T
    divisor = base.max()
    base = base / divisor
    rows = np.tile(base, (duplication, 1))
    labels = [o.label for o in ORBITALS] * duplication
    recipe = Recipe(variant="orig19", normalization="total", duplication=duplication,
                    transposed=True, divisor=(float(divisor),))
    return FeatureMatrix(rows, labels, [rec.symbol for rec in table], recipe)


def empty_cell_report(table: ElementTable) -> list[tuple[int, str]]:
    """(z, cell label) for any occupancy landing in a declared-empty cell."""
    labels = grid_labels()
    bad = []
    for rec in table:
        grid = realign_subshells(rec.config)
        for r, c in EMPTY_CELLS:
            if grid[r, c]:
                bad.append((rec.z, labels[r * GRID_COLS + c]))
    return bad

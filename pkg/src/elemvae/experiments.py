"""The three studies: real-vs-generated classification, dual representation of
variables and the 1869 time-travel test."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import kendalltau

from .bvae import DEFAULT_RECIPES, TrainedBvae, model_spec, train_bvae
from .elements import (
    ORBITALS,
    ElectronConfiguration,
    ElementTable,
    is_madelung_consistent,
    madelung_sequence,
)
from .features import FeatureMatrix, Recipe, build_feature_matrix, featurize_configs
from .latent import GridDecode, LatentMap, decode_grid, encode_elements, encode_rows
from .nn import (
    NetworkSpec,
    OptimizerSpec,
    TrainConfig,
    conv2d,
    dense,
    dropout,
    flatten,
    init_parameters,
    loss_cce,
    max_pool,
    predict,
    split_indices,
    train,
)

log = logging.getLogger(__name__)

REAL, ARTIFICIAL = 0, 1
CLASS_NAMES = ("real", "artificial")
MENDELEEV_HOLDOUT = ("Ge", "Tc", "Eu", "Yb", "Re")
# epochs for the reference runs of each model (one epoch = one pass over the duplicated rows)
REFERENCE_EPOCHS = {"conv": 35, "dense7": 100, "dense118": 30, "dense5": 100, "dense11": 100}


class StudyError(RuntimeError):
    pass


# -- candidate generation --------------------------------------------------------


@dataclass(frozen=True)
class FilterBand:
    lo: float = 0.2
    hi: float = 0.7
    sigma_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.hi:
            raise ValueError(f"filter band needs 0 <= lo <= hi, got ({self.lo}, {self.hi})")
        if self.sigma_scale <= 0:
            raise ValueError("sigma_scale must be positive")

    @property
    def limits(self) -> tuple[float, float]:
        return self.lo * self.sigma_scale, self.hi * self.sigma_scale

    @classmethod
    def parse(cls, text: str, sigma_scale: float = 1.0) -> "FilterBand":
        lo, hi = (float(v) for v in text.split(":"))
        return cls(lo, hi, sigma_scale)


@dataclass(frozen=True)
class Candidate:
    node: tuple[float, float]
    index: tuple[int, int]
    distance: float
    config: ElectronConfiguration
    exact_match: bool


@dataclass
class GeneratedSet:
    members: list[Candidate]
    band: FilterBand
    grid_n: int
    grid_bounds: tuple
    kept_before_dedup: int

    def __len__(self):
        return len(self.members)

    @property
    def configs(self) -> list[ElectronConfiguration]:
        return [m.config for m in self.members]

    @property
    def exact_matches(self) -> int:
        return sum(m.exact_match for m in self.members)


def nearest_distances(nodes: np.ndarray, real: LatentMap) -> np.ndarray:
    return cdist(nodes, real.points).min(axis=1)


def generate_candidates(grid: GridDecode, real_map: LatentMap, band: FilterBand,
                        table: ElementTable) -> GeneratedSet:
    """Filter grid nodes by distance to the nearest real point, then dedupe.

    Nodes are visited in the grid's row-major order and the first node with a
    given rounded configuration is kept.
    """
    lo, hi = band.limits
    dist = nearest_distances(grid.nodes, real_map)
    keep = np.flatnonzero((dist >= lo) & (dist <= hi))
    real_configs = {rec.config for rec in table}
    seen, members = set(), []
    for i in keep:
        cfg = grid.configs[i]
        if cfg in seen:
            continue
        seen.add(cfg)
        members.append(Candidate((float(grid.nodes[i, 0]), float(grid.nodes[i, 1])),
                                 (int(grid.index[i, 0]), int(grid.index[i, 1])),
                                 float(dist[i]), cfg, cfg in real_configs))
    if not members:
        log.warning("no grid node falls in the band [%g, %g]", lo, hi)
    return GeneratedSet(members, band, grid.n, grid.bounds, int(len(keep)))


# -- classification --------------------------------------------------------------


def build_classification_dataset(table: ElementTable, generated: GeneratedSet, recipe: Recipe,
                                 fraction: float = 0.6, seed: int = 0):
    """Real rows use the original features; generated rows are re-featurized from
    their rounded configurations. Returns (matrix, train_idx, test_idx)."""
    if not len(generated):
        raise StudyError("the generated set is empty")
    real = featurize_configs([rec.config for rec in table], recipe)
    fake = featurize_configs(generated.configs, recipe)
    rows = np.vstack([real, fake])
    classes = np.array([REAL] * len(real) + [ARTIFICIAL] * len(fake))
    labels = list(table.zs) + [f"g{i}" for i in range(len(fake))]
    matrix = FeatureMatrix(rows, labels, [f"c{i}" for i in range(rows.shape[1])], recipe,
                           np.eye(2)[classes])
    train_idx, test_idx = split_indices(labels, fraction, seed, "row", stratify=classes)
    return matrix, train_idx, test_idx


def classifier_spec() -> NetworkSpec:
    """Two strided convolutions, a (2, 4) pool and a 2-unit sigmoid head."""
    return NetworkSpec((7, 4, 1), (
        conv2d(16, (3, 3), strides=(2, 1), activation="relu"),
        conv2d(8, (3, 3), strides=(2, 1), activation="relu"),
        max_pool((2, 4)),
        dropout(0.25),
        flatten(),
        dense(2, "sigmoid"),
    ))


@dataclass(frozen=True)
class OracleResult:
    labels: list[int]
    accuracy: float | None


def madelung_oracle_classify(configs, table: ElementTable, truth=None,
                             pure: bool = False) -> OracleResult:
    """Real-like iff Madelung-consistent or equal to an actual element configuration.

    ``pure=True`` drops the second clause. ``truth`` (0 real, 1 artificial) enables
    the accuracy figure.
    """
    actual = {rec.config for rec in table}
    labels = [REAL if is_madelung_consistent(c) or (not pure and c in actual) else ARTIFICIAL
              for c in configs]
    acc = None
    if truth is not None:
        truth = list(truth)
        acc = float(np.mean([a == b for a, b in zip(labels, truth)])) if truth else None
    return OracleResult(labels, acc)


@dataclass
class StudyReport:
    n_real: int
    n_generated: int
    n_exact_matches: int
    n_train: int
    n_test: int
    test_accuracy: float
    false_positives: list
    false_negatives: list
    artificial_accuracy: float
    artificial_accuracy_matches_as_real: float
    oracle_accuracy: float
    oracle_accuracy_matches_as_real: float
    oracle_real_like_fraction: float
    oracle_pure_accuracy: float
    config: dict
    history: list = field(default_factory=list)
    generated: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ClassifierConfig:
    epochs: int = 200
    batch_size: int = 16
    fraction: float = 0.6
    seed: int = 0


def run_classification_study(table: ElementTable, model: TrainedBvae, band: FilterBand = FilterBand(),
                             config: ClassifierConfig = ClassifierConfig(), grid_n: int = 50,
                             real_map: LatentMap | None = None) -> StudyReport:
    """Grid, filter, dedupe, build the dataset, train the classifier and score it.

    Accuracy over the whole generated set is reported twice: plainly, and counting a
    generated configuration that equals a real element as correctly called real.
    """
    real_map = real_map or encode_elements(model, table)
    grid = decode_grid(model, n=grid_n, latent=real_map)
    generated = generate_candidates(grid, real_map, band, table)
    matrix, train_idx, test_idx = build_classification_dataset(
        table, generated, model.recipe, config.fraction, config.seed)
    classes = matrix.targets.argmax(axis=1)
    if len(set(classes[train_idx])) < 2:
        raise StudyError("the classification training set has a single class")
    spec = classifier_spec()
    x = matrix.rows.reshape((-1,) + spec.input_shape)
    params = init_parameters(spec, config.seed)
    tcfg = TrainConfig(epochs=config.epochs, batch_size=config.batch_size, seed=config.seed)
    params, history = train(spec, params, (x[train_idx], matrix.targets[train_idx]), loss_cce,
                            OptimizerSpec("adadelta"), tcfg,
                            test_data=(x[test_idx], matrix.targets[test_idx]))
    pred = predict(spec, params, x).argmax(axis=1)
    test_acc = float(np.mean(pred[test_idx] == classes[test_idx]))
    labels = matrix.row_labels
    fp = [labels[i] for i in test_idx if classes[i] == ARTIFICIAL and pred[i] == REAL]
    fn = [labels[i] for i in test_idx if classes[i] == REAL and pred[i] == ARTIFICIAL]

    n_real = len(table)
    gen_pred = pred[n_real:]
    matches = np.array([m.exact_match for m in generated.members])
    adjusted_truth = np.where(matches, REAL, ARTIFICIAL)
    oracle = madelung_oracle_classify(generated.configs, table, [ARTIFICIAL] * len(generated))
    oracle_adj = madelung_oracle_classify(generated.configs, table, adjusted_truth)
    oracle_pure = madelung_oracle_classify(generated.configs, table, [ARTIFICIAL] * len(generated),
                                           pure=True)
    oracle_real = madelung_oracle_classify([rec.config for rec in table], table)
    return StudyReport(
        n_real=n_real, n_generated=len(generated), n_exact_matches=generated.exact_matches,
        n_train=len(train_idx), n_test=len(test_idx), test_accuracy=test_acc,
        false_positives=fp, false_negatives=fn,
        artificial_accuracy=float(np.mean(gen_pred == ARTIFICIAL)),
        artificial_accuracy_matches_as_real=float(np.mean(gen_pred == adjusted_truth)),
        oracle_accuracy=oracle.accuracy, oracle_accuracy_matches_as_real=oracle_adj.accuracy,
        oracle_real_like_fraction=float(np.mean(np.array(oracle_real.labels) == REAL)),
        oracle_pure_accuracy=oracle_pure.accuracy,
        config={"band": asdict(band), "classifier": asdict(config), "grid_n": grid_n,
                "grid_bounds": list(grid.bounds), "kept_before_dedup": generated.kept_before_dedup},
        history=history.records,
        generated=[{"i": m.index[0], "j": m.index[1], "x": m.node[0], "y": m.node[1],
                    "distance": m.distance, "config": str(m.config),
                    "exact_match": m.exact_match, "predicted": CLASS_NAMES[int(p)]}
                   for m, p in zip(generated.members, gen_pred)],
    )


# -- dual representation ---------------------------------------------------------


def best_cyclic_alignment(angles: np.ndarray, reference_rank: np.ndarray):
    """Best of all rotations x orientations of the angular order against a ranking.

    ``angles[i]`` and ``reference_rank[i]`` belong to variable ``i``. Returns
    (tau, order, candidates) where ``order`` lists variable indices in the chosen
    cyclic arrangement and ``candidates`` is the number of alignments searched.
    """
    base = np.argsort(angles, kind="stable")
    n = len(base)
    best_tau, best_order, tried = -np.inf, None, 0
    for orient in (base, base[::-1]):
        for shift in range(n):
            order = np.roll(orient, -shift)
            tau = kendalltau(np.arange(n), reference_rank[order]).statistic
            tried += 1
            if tau > best_tau:
                best_tau, best_order = float(tau), order
    return best_tau, best_order, tried


def circular_gap(a: float, b: float) -> float:
    d = abs(a - b) % (2 * np.pi)
    return float(min(d, 2 * np.pi - d))


@dataclass
class DualRepReport:
    labels: list[str]
    points: list
    center: list
    angles: list
    order: list[str]
    tau: float
    exact_match: bool
    alignments_searched: int
    gaps: list
    gap_rank_5s_4d: int | None
    degenerate: bool
    config: dict
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def analyze_variable_map(latent: LatentMap) -> dict:
    """Alignment and gap statistics for the 19 encoded orbital variables."""
    labels = list(latent.keys)
    madelung = [o.label for o in madelung_sequence()]
    rank = np.array([madelung.index(lab) for lab in labels])
    center = latent.points.mean(axis=0)
    spread = np.abs(latent.points - center).max()
    d = latent.points - center
    angles = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi)
    if spread < 1e-6:
        return {"center": center.tolist(), "angles": angles.tolist(), "order": [], "tau": float("nan"),
                "exact_match": False, "alignments_searched": 0, "gaps": [],
                "gap_rank_5s_4d": None, "degenerate": True}
    tau, order, tried = best_cyclic_alignment(angles, rank)
    exact = bool(np.array_equal(rank[order], np.arange(len(labels))))
    by_label = dict(zip(labels, angles))
    gaps = sorted(((a, b, circular_gap(by_label[a], by_label[b]))
                   for a, b in zip(madelung, madelung[1:])), key=lambda g: (-g[2], madelung.index(g[0])))
    rank_5s_4d = next(i + 1 for i, g in enumerate(gaps) if (g[0], g[1]) == ("5s", "4d"))
    return {"center": center.tolist(), "angles": angles.tolist(),
            "order": [labels[i] for i in order], "tau": tau, "exact_match": exact,
            "alignments_searched": tried,
            "gaps": [{"from": a, "to": b, "gap": g} for a, b, g in gaps],
            "gap_rank_5s_4d": rank_5s_4d, "degenerate": False}


def run_dual_representation(table: ElementTable, duplication: int = 500, seed: int = 0,
                            epochs: int = 30, batch_size: int = 32, beta: float = 0.03,
                            progress=None) -> tuple[DualRepReport, TrainedBvae]:
    """Train the 118-input dense model on the transposed matrix and read the order
    of the 19 orbital variables around their centroid."""
    matrix = build_feature_matrix(table, Recipe(transposed=True, duplication=duplication))
    spec, opt = model_spec("dense118", matrix.shape[1])
    cfg = TrainConfig(beta=beta, epochs=epochs, batch_size=batch_size, seed=seed)
    model = train_bvae(matrix, spec, opt, cfg, name="dense118", progress=progress)
    base = build_feature_matrix(table, Recipe(transposed=True, duplication=1))
    latent = encode_rows(model, base, [o.label for o in ORBITALS])
    stats = analyze_variable_map(latent)
    report = DualRepReport(labels=list(latent.keys), points=latent.points.tolist(),
                           config={"duplication": duplication, "seed": seed, "epochs": epochs,
                                   "batch_size": batch_size, "beta": beta},
                           history=model.history.records, **stats)
    return report, model


# -- Mendeleev time travel -------------------------------------------------------


def neighbour_midpoint_distance(latent: LatentMap, z: int, known) -> float | None:
    """Distance from ``z``'s point to the midpoint of the nearest symmetric known pair
    (z - d, z + d); ``None`` when no such pair exists."""
    known = set(known) - {z}
    lo, hi = min(known, default=z), max(known, default=z)
    for d in range(1, max(z - lo, hi - z) + 1):
        if z - d in known and z + d in known:
            mid = (latent.point(z - d) + latent.point(z + d)) / 2
            return float(np.linalg.norm(latent.point(z) - mid))
    return None


@dataclass
class MendeleevReport:
    cutoff_year: int
    subset_size: int
    holdout: list
    training_statistics: list
    config: dict
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def within(self, percentile: float = 95.0) -> dict[str, bool]:
        return {h["symbol"]: h["percentile"] <= percentile for h in self.holdout}


def mendeleev_subset(table: ElementTable, cutoff_year: int = 1869) -> ElementTable:
    return table.subset(rec.z for rec in table
                        if rec.discovery_year is not None and rec.discovery_year <= cutoff_year)


def run_mendeleev_study(table: ElementTable, cutoff_year: int = 1869, holdout=MENDELEEV_HOLDOUT,
                        seed: int = 0, model_name: str = "conv", duplication: int = 100,
                        epochs: int = 15, batch_size: int = 32, beta: float = 0.03,
                        progress=None) -> tuple[MendeleevReport, TrainedBvae]:
    """Train on elements discovered by ``cutoff_year`` and place later ones.

    Each held-out element's distance to the midpoint of its nearest symmetric known
    neighbours is ranked against the same statistic over the training elements.
    """
    subset = mendeleev_subset(table, cutoff_year)
    hold = [table[s] for s in holdout]
    clash = [r.symbol for r in hold if r.z in set(subset.zs)]
    if clash:
        raise StudyError(f"holdout elements inside the training subset: {', '.join(clash)}")
    recipe = replace(DEFAULT_RECIPES[model_name], duplication=duplication)
    if recipe.transposed:
        raise StudyError("the time-travel study needs a per-element model")
    matrix = build_feature_matrix(subset, recipe)
    spec, opt = model_spec(model_name, matrix.shape[1])
    cfg = TrainConfig(beta=beta, epochs=epochs, batch_size=batch_size, seed=seed)
    model = train_bvae(matrix, spec, opt, cfg, name=model_name, progress=progress)
    everything = table.subset(sorted(set(subset.zs) | {r.z for r in hold}))
    latent = encode_elements(model, everything)
    known = subset.zs
    train_stats = [s for s in (neighbour_midpoint_distance(latent, z, known) for z in known)
                   if s is not None]
    ref = np.array(train_stats)
    rows = []
    for rec in hold:
        stat = neighbour_midpoint_distance(latent, rec.z, known)
        pct = float(100.0 * np.mean(ref <= stat)) if stat is not None else float("nan")
        rows.append({"symbol": rec.symbol, "z": rec.z, "year": rec.discovery_year,
                     "point": latent.point(rec.z).tolist(), "distance": stat, "percentile": pct})
    report = MendeleevReport(cutoff_year, len(subset), rows, train_stats,
                             {"seed": seed, "model": model_name, "duplication": duplication,
                              "epochs": epochs, "batch_size": batch_size, "beta": beta},
                             model.history.records)
    return report, model

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elemvae.elements import NOBLE_GAS_Z, ORBITALS, load_element_table
from elemvae.features import (
    EMPTY_CELLS,
    NoiseSpec,
    Recipe,
    build_feature_matrix,
    empty_cell_report,
    encode_period,
    featurize_configs,
    grid_to_config,
    realign_shells,
    realign_subshells,
    select_features,
    transpose_for_variables,
    vacancies_original,
    vacancies_realigned,
)


@pytest.fixture(scope="module")
def table():
    return load_element_table()


def grid_from(rows: dict[int, dict[str, int]]) -> np.ndarray:
    g = np.zeros((7, 4))
    for r, cells in rows.items():
        for sub, v in cells.items():
            g[r - 1, "spdf".index(sub)] = v
    return g


# realigned-shell rows as printed, innermost first, right-aligned to shell _1
REALIGNED_SHELLS = {
    "H": "1", "He": "2", "Li": "2 1", "Na": "2 8 1", "Al": "2 8 3",
    "Ir": "2 8 18 32 15 2", "Lv": "2 8 18 32 32 18 6", "Og": "2 8 18 32 32 18 8",
}


@pytest.mark.parametrize("symbol,printed", REALIGNED_SHELLS.items())
def test_realign_shells_rows(table, symbol, printed):
    values = [int(v) for v in printed.split()][::-1]
    assert realign_shells(table[symbol].config) == tuple(values + [0] * (7 - len(values)))


def test_realign_shells_og_reversed(table):
    assert realign_shells(table["Og"].config) == (8, 18, 32, 32, 18, 8, 2)


def test_realign_subshells_iridium(table):
    expected = grid_from({
        1: {"s": 2, "d": 7, "f": 14}, 2: {"s": 2, "p": 6}, 3: {"s": 2, "p": 6, "d": 10},
        4: {"s": 2, "p": 6, "d": 10}, 5: {"s": 2, "p": 6}, 6: {"s": 2},
    })
    np.testing.assert_array_equal(realign_subshells(table["Ir"].config), expected)


def test_realign_subshells_og_matches_printed_row(table):
    header = ("_7s _6s _6p _5s _5p _5d _4s _4p _4d _4f _3s _3p _3d _2s _2p "
              "_1s _1p _1d _1f").split()
    row = [int(v) for v in "2 2 6 2 6 10 2 6 10 14 2 6 10 2 6 2 6 10 14".split()]
    expected = np.zeros((7, 4))
    for label, v in zip(header, row):
        expected[int(label[1]) - 1, "spdf".index(label[2])] = v
    np.testing.assert_array_equal(realign_subshells(table["Og"].config), expected)


def test_realign_subshells_magnesium(table):
    expected = grid_from({1: {"s": 2}, 2: {"s": 2, "p": 6}, 3: {"s": 2}})
    np.testing.assert_array_equal(realign_subshells(table["Mg"].config), expected)


def test_grids_conserve_total_and_are_unique(table):
    seen = set()
    for rec in table:
        grid = realign_subshells(rec.config)
        assert grid.sum() == rec.z
        assert (grid <= np.array([2, 6, 10, 14])).all()
        seen.add(grid.tobytes())
        assert grid_to_config(grid) == rec.config
    assert len(seen) == len(table)


def test_structural_cells_empty(table):
    assert len(EMPTY_CELLS) == 9
    assert empty_cell_report(table) == []
    for rec in table:
        grid = realign_subshells(rec.config)
        assert all(grid[r, c] == 0 for r, c in EMPTY_CELLS)
    # _3d is occupied for period-7 elements, so it cannot be one of the empty cells
    assert realign_subshells(table["Og"].config)[2, 2] == 10


# vacancy rows (original 19-orbital layout), only the printed prefix is given
VAC_ORIGINAL = {
    "H": [1], "He": [0], "Li": [0, 1, 6], "Be": [0, 0, 6], "B": [0, 0, 5], "F": [0, 0, 1],
    "Ne": [0, 0, 0], "Na": [0, 0, 0, 1, 6], "Mg": [0, 0, 0, 0, 6], "Al": [0, 0, 0, 0, 5],
    "Ir": [0] * 12 + [3, 0, 0, 6, 0, 0, 0], "Lv": [0] * 18 + [2], "Ts": [0] * 18 + [1],
    "Og": [0] * 19,
}


@pytest.mark.parametrize("symbol,prefix", VAC_ORIGINAL.items())
def test_vacancies_original_rows(table, symbol, prefix):
    vac = vacancies_original(table[symbol].config)
    np.testing.assert_array_equal(vac[:len(prefix)], prefix)
    assert vac[len(prefix):].sum() == 0


VAC_REALIGNED = {
    "H": (1, 0, 0, 0), "He": (0, 0, 0, 0), "Li": (1, 6, 0, 0), "Be": (0, 6, 0, 0),
    "B": (0, 5, 0, 0), "C": (0, 4, 0, 0), "Ne": (0, 0, 0, 0), "Na": (1, 6, 0, 0),
    "Mg": (0, 6, 0, 0), "Al": (0, 5, 0, 0), "Ir": (0, 6, 3, 0), "Lv": (0, 2, 0, 0),
    "Ts": (0, 1, 0, 0), "Og": (0, 0, 0, 0),
}


@pytest.mark.parametrize("symbol,row", VAC_REALIGNED.items())
def test_vacancies_realigned_rows(table, symbol, row):
    np.testing.assert_array_equal(vacancies_realigned(table[symbol].config), row)


def test_vacancy_invariants(table):
    for rec in table:
        noble = table[NOBLE_GAS_Z[rec.period - 1]].config
        vac = vacancies_original(rec.config)
        assert (vac >= 0).all()
        diff = np.array(noble.occupancy) - np.array(rec.config.occupancy)
        mask = np.array(noble.occupancy) > 0
        np.testing.assert_array_equal(vac[mask], diff[mask])
        assert (vacancies_realigned(rec.config) >= 0).all()
    for z in NOBLE_GAS_Z:
        assert not vacancies_original(table[z].config).any()
        assert not vacancies_realigned(table[z].config).any()


def test_encode_period():
    np.testing.assert_array_equal(encode_period(6, "one_hot"), [0, 0, 0, 0, 0, 1, 0])
    assert encode_period(7, "normalized")[0] == 1.0
    assert encode_period(1, "normalized")[0] == pytest.approx(1 / 7)
    with pytest.raises(ValueError):
        encode_period(8)


def test_select_features(table):
    ir = realign_subshells(table["Ir"].config)
    np.testing.assert_array_equal(select_features(ir, "valence4"), [2, 0, 7, 14])
    h = select_features(realign_subshells(table["H"].config), "outer11")
    np.testing.assert_array_equal(h, [0] * 7 + [1, 0, 0, 0])
    for rec in table:
        assert select_features(realign_subshells(rec.config), "full28").sum() == rec.z


def test_outer11_is_unique(table):
    rows = {select_features(realign_subshells(r.config), "outer11").tobytes() for r in table}
    assert len(rows) == 118


def test_total_normalization_divisors(table):
    assert build_feature_matrix(table, variant="shell7").recipe.divisor[0] == 32
    brute = max(c for rec in table for c in realign_subshells(rec.config).ravel())
    assert brute == 14
    assert build_feature_matrix(table, variant="image28").recipe.divisor[0] == brute


def test_duplication(table):
    m = build_feature_matrix(table, variant="image28", duplication=100)
    assert m.shape == (11800, 28)
    assert m.rows.min() >= 0 and m.rows.max() <= 1
    block = m.rows.reshape(118, 100, 28)
    assert (block == block[:, :1, :]).all()
    assert m.row_labels[:100] == [1] * 100


def test_per_column_normalization(table):
    m = build_feature_matrix(table, variant="image28", normalization="per_column")
    maxes = m.rows.max(axis=0)
    nonzero = np.array(m.recipe.divisor) > 0
    np.testing.assert_array_equal(maxes[nonzero], 1.0)
    assert not maxes[~nonzero].any()
    assert (~nonzero).sum() == 9


def test_sqrt_applied_before_normalization(table):
    m = build_feature_matrix(table, variant="shell7", sqrt=True)
    assert m.recipe.divisor[0] == pytest.approx(np.sqrt(32))
    assert m.rows.max() == 1.0


def test_noise_is_seeded_and_clamped(table):
    r = Recipe(variant="image28", duplication=3, noise=NoiseSpec(alpha=0.1, seed=5))
    a = build_feature_matrix(table, r)
    b = build_feature_matrix(table, r)
    assert a.rows.tobytes() == b.rows.tobytes()
    assert a.rows.min() >= 0 and a.rows.max() <= 1
    c = build_feature_matrix(table, Recipe(variant="image28", duplication=3))
    assert not np.array_equal(a.rows, c.rows)
    assert build_feature_matrix(table, Recipe(variant="image28")).rows.tobytes() == \
        build_feature_matrix(table, Recipe(variant="image28")).rows.tobytes()


def test_recipe_errors():
    with pytest.raises(ValueError):
        Recipe(duplication=0)
    with pytest.raises(ValueError):
        NoiseSpec(alpha=-0.1)


def test_period_encodings_appended(table):
    m = build_feature_matrix(table, variant="vac4", period_encoding="one_hot")
    assert m.shape == (118, 11)
    m5 = build_feature_matrix(table, variant="valence4", period_encoding="normalized")
    assert m5.shape == (118, 5)
    assert m5.rows[-1, -1] == 1.0


def test_featurize_configs_matches_matrix(table):
    m = build_feature_matrix(table, variant="image28", duplication=2)
    rows = featurize_configs([r.config for r in table], m.recipe)
    np.testing.assert_array_equal(rows, m.rows[::2])


def test_transpose_for_variables(table):
    m = transpose_for_variables(table, 500)
    assert m.shape == (9500, 118)
    assert m.row_labels[:19] == [o.label for o in ORBITALS]
    one_s = m.rows[0]
    assert one_s[0] == pytest.approx(1 / 14)
    np.testing.assert_allclose(one_s[1:], 2 / 14)
    seven_p = m.rows[18]
    assert np.flatnonzero(seven_p).tolist() == [z - 1 for z in (103,) + tuple(range(113, 119))]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 118))
def test_grid_total_property(z):
    rec = load_element_table()[z]
    assert realign_subshells(rec.config).sum() == z

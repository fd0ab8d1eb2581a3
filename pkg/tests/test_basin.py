"""Basin-of-attraction grid and agreement tests."""

import numpy as np
import pytest

import flowcast as fc
from flowcast.basin import (
    LABEL_COLORS,
    AgreementReport,
    BasinGrid,
    BasinRegion,
    NvarBootstrapEngine,
    NvarOracleWarmupEngine,
    OracleEngine,
    _horizon_steps,
    metadata_path,
)
from flowcast.metrics import AttractorLabel

from conftest import CHAOS_NEG_IC, CHAOS_POS_IC, TORUS_IC

SWAP = {
    AttractorLabel.TORUS: AttractorLabel.TORUS,
    AttractorLabel.CHAOS_NEG: AttractorLabel.CHAOS_POS,
    AttractorLabel.CHAOS_POS: AttractorLabel.CHAOS_NEG,
}


def _region(lo=(2.0, -3.0), hi=(6.0, 3.0), res=(9, 5)):
    # step-exact axis values so mirrored grids are bitwise sign flips
    return BasinRegion(axes=("y0", "u0"), lo=lo, hi=hi, resolution=res,
                       fixed=(("x0", 0.0), ("z0", 0.0)))


@pytest.fixture(scope="module")
def oracle(params):
    return OracleEngine(params=params)


# ---------------------------------------------------------------------------
# classification rule
# ---------------------------------------------------------------------------


def test_classify_thresholds():
    assert fc.classify(-5.0) is AttractorLabel.CHAOS_NEG
    assert fc.classify(0.0) is AttractorLabel.TORUS
    assert fc.classify(3.7) is AttractorLabel.CHAOS_POS
    # strict inequalities: the boundary itself is torus
    assert fc.classify(-2.0) is AttractorLabel.TORUS
    assert fc.classify(2.0) is AttractorLabel.TORUS
    assert fc.classify(-2.0000001) is AttractorLabel.CHAOS_NEG


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


def test_region_validation():
    with pytest.raises(ValueError):
        _region(lo=(6.0, -3.0), hi=(2.0, 3.0))
    with pytest.raises(ValueError):
        _region(res=(1, 5))
    with pytest.raises(ValueError):
        BasinRegion(axes=("y0", "u0"), lo=(0, 0), hi=(1, 1), resolution=(3, 3),
                    fixed=(("x0", 0.0), ("y0", 0.0)))


def test_region_axis_values_inclusive():
    region = _region()
    v = region.axis_values(0)
    assert v[0] == 2.0 and v[-1] == 6.0 and len(v) == 9
    np.testing.assert_array_equal(v, 2.0 + 0.5 * np.arange(9))


def test_region_grid_layout():
    region = _region(res=(3, 2))
    ics = region.grid_ics()
    assert ics.shape == (6, 4)
    # row-major: pixel (i, j) at row i*n2 + j; x0 and z0 pinned to 0
    np.testing.assert_array_equal(ics[:, 0], 0.0)
    np.testing.assert_array_equal(ics[:, 2], 0.0)
    np.testing.assert_array_equal(ics[0], [0.0, 2.0, 0.0, -3.0])
    np.testing.assert_array_equal(ics[1], [0.0, 2.0, 0.0, 3.0])
    np.testing.assert_array_equal(ics[4], [0.0, 6.0, 0.0, -3.0])


def test_region_dict_round_trip():
    region = _region()
    assert BasinRegion.from_dict(region.to_dict()) == region


# ---------------------------------------------------------------------------
# single-point labels
# ---------------------------------------------------------------------------


def test_basin_point_named_ics(oracle):
    assert fc.basin_point(CHAOS_NEG_IC, oracle) is AttractorLabel.CHAOS_NEG
    assert fc.basin_point(CHAOS_POS_IC, oracle) is AttractorLabel.CHAOS_POS
    assert fc.basin_point(TORUS_IC, oracle) is AttractorLabel.TORUS


def test_basin_point_nvar_engines(model_k1, model_k2, oracle):
    ngrc = NvarOracleWarmupEngine(model=model_k2)
    boot = NvarBootstrapEngine(ladder=(model_k1, model_k2))
    for engine in (ngrc, boot):
        assert fc.basin_point(CHAOS_NEG_IC, engine) is AttractorLabel.CHAOS_NEG
        assert fc.basin_point(TORUS_IC, engine) is AttractorLabel.TORUS


def test_basin_point_symmetry_consistency(oracle, params):
    # mirrored initial conditions land on the mirrored attractor, exactly
    rng = np.random.default_rng(67)
    for _ in range(100):
        ic = rng.uniform([-1, -6, -1, -4], [1, 6, 1, 4])
        a = fc.basin_point(ic, oracle)
        b = fc.basin_point(fc.symmetry_map(ic), oracle)
        assert b is SWAP[a]


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


def test_compute_basin_smoke_2x2(oracle):
    grid = fc.compute_basin(_region(res=(2, 2)), oracle)
    assert grid.labels.shape == (2, 2)
    assert set(np.unique(grid.labels)) <= {0, 1, 2}
    again = fc.compute_basin(_region(res=(2, 2)), oracle)
    np.testing.assert_array_equal(grid.labels, again.labels)


def test_compute_basin_label_totals(oracle):
    grid = fc.compute_basin(_region(res=(6, 4)), oracle)
    assert sum(grid.label_counts().values()) == 24


def test_compute_basin_order_independence(oracle, model_k1, model_k2):
    region = _region(res=(8, 5))
    for engine in (
        oracle,
        NvarOracleWarmupEngine(model=model_k2),
        NvarBootstrapEngine(ladder=(model_k1, model_k2)),
    ):
        serial = fc.compute_basin(region, engine, workers=1)
        parallel = fc.compute_basin(region, engine, workers=4)
        np.testing.assert_array_equal(serial.labels, parallel.labels)
        assert serial.divergence_count == parallel.divergence_count


def test_compute_basin_mirror_swap(oracle):
    # the companion window is the exact symmetry image of the primary, so
    # its label grid is the swapped, axis-reversed primary grid
    primary = fc.compute_basin(_region(), oracle)
    companion = fc.compute_basin(
        _region(lo=(-6.0, -3.0), hi=(-2.0, 3.0)), oracle)
    swapped = np.vectorize(lambda v: int(SWAP[AttractorLabel(int(v))]))(
        primary.labels)
    np.testing.assert_array_equal(companion.labels, swapped[::-1, ::-1])


def test_compute_basin_interleaved_labels(oracle):
    # the default window straddles the fractal boundary band: all three
    # basins appear at moderate resolution
    grid = fc.compute_basin(_region(res=(12, 9)), oracle)
    counts = grid.label_counts()
    assert all(counts[lab.tag] > 0 for lab in AttractorLabel)


def test_engine_ladder_validation(model_k2):
    with pytest.raises(fc.LadderGap):
        NvarBootstrapEngine(ladder=(model_k2,))
    with pytest.raises(fc.LadderGap):
        NvarBootstrapEngine(ladder=())


def test_horizon_steps():
    assert _horizon_steps(200.0, 0.05, 2) == 3999
    assert _horizon_steps(200.0, 0.05, 1) == 4000
    with pytest.raises(ValueError):
        _horizon_steps(200.03, 0.05, 2)
    with pytest.raises(ValueError):
        _horizon_steps(0.05, 0.05, 3)


# ---------------------------------------------------------------------------
# agreement
# ---------------------------------------------------------------------------


def _grid_from_labels(labels, engine="oracle"):
    labels = np.asarray(labels)
    region = _region(res=labels.shape)
    return BasinGrid(region=region, labels=labels, engine=engine)


def test_agreement_identity(oracle):
    grid = fc.compute_basin(_region(res=(6, 4)), oracle)
    report = fc.agreement(grid, grid)
    assert report.overall == 1.0
    for value in report.per_label.values():
        assert value is None or value == 1.0


def test_agreement_known_fractions():
    truth = _grid_from_labels([[1, 1, 1, 1], [0, 0, 2, 2]])
    model = _grid_from_labels([[1, 1, 1, 0], [0, 1, 2, 0]])
    report = fc.agreement(truth, model)
    assert report.per_label["chaos_neg"] == pytest.approx(0.75)
    assert report.per_label["chaos_pos"] == pytest.approx(0.5)
    assert report.overall == pytest.approx(5 / 8)
    assert report.chaotic_minimum() == pytest.approx(0.5)


def test_agreement_absent_label_is_none():
    truth = _grid_from_labels([[0, 0], [1, 1]])
    model = _grid_from_labels([[0, 0], [1, 1]])
    report = fc.agreement(truth, model)
    assert report.per_label["chaos_pos"] is None
    assert report.per_label["chaos_neg"] == 1.0


def test_agreement_grid_mismatch():
    a = _grid_from_labels(np.zeros((3, 2), dtype=int))
    b = _grid_from_labels(np.zeros((2, 3), dtype=int))
    with pytest.raises(fc.GridMismatch):
        fc.agreement(a, b)
    c = BasinGrid(region=_region(lo=(2.0, -2.0), hi=(6.0, 4.0), res=(3, 2)),
                  labels=np.zeros((3, 2), dtype=int), engine="oracle")
    with pytest.raises(fc.GridMismatch):
        fc.agreement(a, c)


# ---------------------------------------------------------------------------
# file round trip
# ---------------------------------------------------------------------------


def test_basin_csv_round_trip(oracle, tmp_path):
    grid = fc.compute_basin(_region(res=(5, 4)), oracle)
    path = tmp_path / "basin.csv"
    fc.write_basin_csv(grid, path, model_sha256="ab" * 32)
    loaded = fc.read_basin_csv(path)
    np.testing.assert_array_equal(loaded.labels, grid.labels)
    assert loaded.region == grid.region
    assert loaded.engine == grid.engine
    assert loaded.horizon == grid.horizon
    assert loaded.divergence_count == grid.divergence_count


def test_basin_csv_deterministic_body(oracle, tmp_path):
    grid = fc.compute_basin(_region(res=(4, 3)), oracle)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    fc.write_basin_csv(grid, p1)
    fc.write_basin_csv(grid, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_basin_csv_requires_sidecar(oracle, tmp_path):
    grid = fc.compute_basin(_region(res=(3, 3)), oracle)
    path = tmp_path / "basin.csv"
    fc.write_basin_csv(grid, path)
    import os

    os.remove(metadata_path(path))
    with pytest.raises(FileNotFoundError):
        fc.read_basin_csv(path)


def test_basin_csv_row_count_check(oracle, tmp_path):
    grid = fc.compute_basin(_region(res=(3, 3)), oracle)
    path = tmp_path / "basin.csv"
    fc.write_basin_csv(grid, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-2]) + "\n")
    with pytest.raises(ValueError):
        fc.read_basin_csv(path)


def test_label_color_convention():
    assert LABEL_COLORS == {
        "torus": "#cfe8ff",
        "chaos_neg": "#2ca02c",
        "chaos_pos": "#d62728",
    }

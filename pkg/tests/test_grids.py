"""Grid container tests: construction, interpolation, persistence."""

import numpy as np
import pytest

from greenwalk.grids import (
    FieldGrid,
    GridSpec,
    field_from_function,
    field_to_csv,
    load_field,
    require_same_grid,
    save_field,
)
from greenwalk.errors import GridMismatchError


def test_gridspec_geometry():
    g = GridSpec(2, 8, 4.0)
    assert g.shape == (8, 8)
    assert g.spacing == pytest.approx(1.0)
    assert g.cell_volume == pytest.approx(1.0)
    assert g.axis.size == 8
    # FFT-friendly axis: symmetric about 0 with the left endpoint included
    assert g.axis[0] == pytest.approx(-4.0)
    assert 0.0 in g.axis


def test_gridspec_rejects_bad_args():
    with pytest.raises(ValueError):
        GridSpec(0, 8, 4.0)
    with pytest.raises(ValueError):
        GridSpec(1, 8, -1.0)


def test_field_integral_of_ones():
    g = GridSpec(3, 8, 2.0)
    f = FieldGrid(g, np.ones(g.shape))
    assert f.integral() == pytest.approx((2 * 2.0) ** 3)


def test_value_at_reproduces_nodes_and_interpolates():
    g = GridSpec(1, 64, 8.0)
    f = field_from_function(g, lambda x: np.atleast_2d(x)[:, 0] * 2.0)
    i = g.nearest_index(np.array([1.0]))
    node = g.axis[i[0]]
    assert f.value_at([node]) == pytest.approx(2.0 * node, abs=1e-12)
    # linear functions are reproduced exactly between nodes as well
    assert f.value_at([node + 0.3 * g.spacing]) == pytest.approx(
        2.0 * (node + 0.3 * g.spacing), abs=1e-12
    )


def test_save_load_roundtrip(tmp_path):
    g = GridSpec(2, 16, 4.0)
    f = field_from_function(g, lambda x: np.exp(-np.sum(np.atleast_2d(x) ** 2, axis=-1)))
    p = tmp_path / "field.npz"
    save_field(p, f)
    back = load_field(p)
    assert back.grid == f.grid
    np.testing.assert_array_equal(back.values, f.values)


def test_csv_export_is_deterministic(tmp_path):
    g = GridSpec(1, 32, 4.0)
    f = field_from_function(g, lambda x: np.cos(np.atleast_2d(x)[:, 0]))
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    field_to_csv(p1, f)
    field_to_csv(p2, f)
    assert p1.read_bytes() == p2.read_bytes()


def test_require_same_grid_raises():
    a = FieldGrid(GridSpec(1, 16, 4.0), np.zeros(16))
    b = FieldGrid(GridSpec(1, 16, 8.0), np.zeros(16))
    with pytest.raises(GridMismatchError):
        require_same_grid(a, b)

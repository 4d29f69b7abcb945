import numpy as np
import pytest

from bwpipe.tabular import ColumnMeta, Table


@pytest.fixture
def simple_table():
    """Five rows, two continuous features (one with a missing cell), a
    discrete feature, and a continuous target."""
    values = np.array(
        [
            [1.0, 10.0, 0, 100.0],
            [2.0, np.nan, 1, 110.0],
            [3.0, 30.0, 0, 120.0],
            [4.0, 40.0, 1, 130.0],
            [5.0, 50.0, 0, 140.0],
        ]
    )
    mask = ~np.isnan(values)
    meta = [
        ColumnMeta(name="a", kind="continuous"),
        ColumnMeta(name="b", kind="continuous"),
        ColumnMeta(name="c", kind="ordinal"),
        ColumnMeta(name="y", kind="continuous", role="target"),
    ]
    return Table(values, mask, meta)


def table_from_arrays(X, y, feature_kinds=None, feature_names=None):
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    names = feature_names or [f"x{j}" for j in range(p)]
    kinds = feature_kinds or ["continuous"] * p
    meta = [ColumnMeta(name=names[j], kind=kinds[j]) for j in range(p)]
    meta.append(ColumnMeta(name="y", kind="continuous", role="target"))
    values = np.column_stack([X, np.asarray(y, dtype=float)])
    return Table(values, ~np.isnan(values), meta)

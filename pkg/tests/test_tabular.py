import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bwpipe.tabular import (
    ColumnMeta,
    DropLineage,
    DropStage,
    FilterError,
    FilterPlan,
    KeepKinds,
    MinObserved,
    SchemaError,
    Table,
    apply_filter_plan,
    load_csv,
    read_schema,
    recompute_missingness,
    split,
    write_csv,
    write_schema,
)


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


SCHEMA_AB = [ColumnMeta(name="a"), ColumnMeta(name="b", role="target")]


class TestLoadCsv:
    def test_empty_cell_becomes_missing(self, tmp_path):
        path = _write(tmp_path, "a,b\n1,2\n,3\n4,5\n")
        table = load_csv(path, SCHEMA_AB)
        assert not table.mask[1, 0]
        assert table.mask.sum() == 5
        assert table.meta[0].missing_fraction == pytest.approx(1 / 3)

    def test_missing_schema_column_is_error(self, tmp_path):
        path = _write(tmp_path, "a\n1\n2\n")
        with pytest.raises(SchemaError):
            load_csv(path, SCHEMA_AB)

    def test_na_token_in_continuous_is_missing_not_error(self, tmp_path):
        path = _write(tmp_path, "a,b\nNA,2\n1,3\n")
        table = load_csv(path, SCHEMA_AB)
        assert not table.mask[0, 0]
        assert table.values[1, 0] == 1.0

    def test_unparseable_continuous_is_missing(self, tmp_path):
        path = _write(tmp_path, "a,b\nwhat,2\n1,3\n")
        table = load_csv(path, SCHEMA_AB)
        assert not table.mask[0, 0]

    def test_duplicate_header_is_error(self, tmp_path):
        path = _write(tmp_path, "a,a\n1,2\n")
        with pytest.raises(SchemaError):
            load_csv(path, SCHEMA_AB)

    def test_nominal_cardinality_cap(self, tmp_path):
        rows = "\n".join(f"s{i},1" for i in range(10))
        path = _write(tmp_path, "a,b\n" + rows + "\n")
        schema = [ColumnMeta(name="a", kind="nominal"), ColumnMeta(name="b", role="target")]
        with pytest.raises(SchemaError):
            load_csv(path, schema, max_categories=5)
        table = load_csv(path, schema, max_categories=10)
        assert table.categories["a"] == tuple(f"s{i}" for i in range(10))

    def test_nominal_codes_first_appearance_order(self, tmp_path):
        path = _write(tmp_path, "a,b\nz,1\nq,2\nz,3\n", "n.csv")
        schema = [ColumnMeta(name="a", kind="nominal"), ColumnMeta(name="b", role="target")]
        table = load_csv(path, schema)
        assert table.values[:, 0].tolist() == [0.0, 1.0, 0.0]
        assert table.categories["a"] == ("z", "q")

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        labels = ["p", "q", "r", "s"]
        lines = ["a,b,y"]
        for i in range(20):
            a = repr(rng.normal(0, 1e7)) if rng.random() > 0.2 else ""
            b = labels[rng.integers(0, 4)] if rng.random() > 0.2 else "NA"
            lines.append(f"{a},{b},{repr(rng.normal())}")
        path = _write(tmp_path, "\n".join(lines) + "\n")
        schema = [
            ColumnMeta(name="a"),
            ColumnMeta(name="b", kind="nominal"),
            ColumnMeta(name="y", role="target"),
        ]
        table = load_csv(path, schema)
        write_csv(table, tmp_path / "t.csv")
        write_schema(table, tmp_path / "t.json")
        again = load_csv(tmp_path / "t.csv", read_schema(tmp_path / "t.json"))
        assert table.equals(again)
        write_csv(again, tmp_path / "t2.csv")
        assert (tmp_path / "t.csv").read_bytes() == (tmp_path / "t2.csv").read_bytes()


class TestRecomputeMissingness:
    def test_one_of_four_cells(self):
        values = np.array([[1.0, np.nan], [2.0, 3.0]])
        table = Table(values, ~np.isnan(values), [ColumnMeta(name="a"), ColumnMeta(name="b", role="target")])
        _, overall = recompute_missingness(table)
        assert overall == 0.25

    def test_fully_observed(self, simple_table):
        t, overall = recompute_missingness(simple_table)
        assert overall == pytest.approx(1 / 20)
        full = Table(np.ones((3, 1)), np.ones((3, 1), bool), [ColumnMeta(name="a", role="target")])
        _, overall = recompute_missingness(full)
        assert overall == 0.0


def _tagged_table():
    rng = np.random.default_rng(0)
    metas = []
    cols = []
    for i in range(6):
        metas.append(ColumnMeta(name=f"pre{i}", stage="prenatal"))
        cols.append(rng.normal(size=12))
    for i in range(3):
        metas.append(ColumnMeta(name=f"post{i}", stage="postnatal"))
        cols.append(rng.normal(size=12))
    metas.append(ColumnMeta(name="nom", kind="nominal"))
    cols.append(rng.integers(0, 3, 12).astype(float))
    metas.append(ColumnMeta(name="y", role="target", stage="delivery"))
    cols.append(rng.normal(size=12))
    values = np.column_stack(cols)
    mask = np.ones_like(values, dtype=bool)
    mask[:5, 0] = False  # pre0: 5/12 missing ~ 41.7%
    mask[:3, 1] = False  # pre1: 25% missing, survives 0.6 threshold
    return Table(values, mask, metas)


class TestApplyFilterPlan:
    def test_steps_in_order_and_counts(self):
        table = _tagged_table()
        plan = FilterPlan(
            (
                DropStage(frozenset({"postnatal"})),
                MinObserved(0.6),
                KeepKinds(frozenset({"continuous", "ordinal"})),
            )
        )
        out, trace = apply_filter_plan(table, plan)
        assert trace.counts == (11, 8, 7, 6)
        assert "pre0" not in out.column_names
        assert "nom" not in out.column_names
        assert "y" in out.column_names

    def test_min_observed_boundary(self):
        meta = [ColumnMeta(name="a"), ColumnMeta(name="keep"), ColumnMeta(name="y", role="target")]
        values = np.ones((10, 3))
        mask = np.ones((10, 3), dtype=bool)
        mask[:4, 0] = False  # exactly 40% missing: kept under "at least 60%"
        out, _ = apply_filter_plan(Table(values, mask, meta), FilterPlan((MinObserved(0.6),)))
        assert "a" in out.column_names

        mask2 = mask.copy()
        mask2[4, 0] = False  # 50% missing: dropped
        out2, _ = apply_filter_plan(Table(values, mask2, meta), FilterPlan((MinObserved(0.6),)))
        assert "a" not in out2.column_names

    def test_fiftynine_percent_observed_dropped(self):
        meta = [ColumnMeta(name="a"), ColumnMeta(name="keep"), ColumnMeta(name="y", role="target")]
        values = np.ones((100, 3))
        mask = np.ones((100, 3), dtype=bool)
        mask[:41, 0] = False  # 59% observed
        out, _ = apply_filter_plan(Table(values, mask, meta), FilterPlan((MinObserved(0.6),)))
        assert "a" not in out.column_names

    def test_empty_plan_identity(self, simple_table):
        out, trace = apply_filter_plan(simple_table, FilterPlan(()))
        assert trace.counts == (4,)
        assert out.column_names == simple_table.column_names

    def test_idempotent(self):
        table = _tagged_table()
        plan = FilterPlan((DropStage(frozenset({"postnatal"})), MinObserved(0.6)))
        once, _ = apply_filter_plan(table, plan)
        twice, _ = apply_filter_plan(once, plan)
        assert once.equals(twice)

    def test_trace_monotone(self):
        table = _tagged_table()
        plan = FilterPlan(
            (
                DropLineage(frozenset({"paternal"})),
                DropStage(frozenset({"postnatal"})),
                MinObserved(0.5),
                KeepKinds(frozenset({"continuous"})),
            )
        )
        _, trace = apply_filter_plan(table, plan)
        assert all(a >= b for a, b in zip(trace.counts, trace.counts[1:]))

    def test_removing_target_is_error(self):
        table = _tagged_table()
        with pytest.raises(FilterError):
            apply_filter_plan(table, FilterPlan((DropStage(frozenset({"delivery"})),)))

    def test_empty_feature_result_is_error(self):
        values = np.ones((10, 2))
        mask = np.ones((10, 2), dtype=bool)
        mask[0, 0] = False
        table = Table(values, mask, [ColumnMeta(name="a"), ColumnMeta(name="y", role="target")])
        with pytest.raises(FilterError):
            apply_filter_plan(table, FilterPlan((MinObserved(1.0),)))


class TestSplit:
    def test_deterministic_80_20(self, simple_table):
        values = np.tile(simple_table.values, (2, 1))
        mask = np.tile(simple_table.mask, (2, 1))
        table = Table(values, mask, simple_table.meta)
        train1, test1 = split(table, 0.2, seed=7)
        train2, test2 = split(table, 0.2, seed=7)
        assert train1.n_rows == 8 and test1.n_rows == 2
        assert train1.equals(train2) and test1.equals(test2)

    def test_seed_sensitivity(self):
        values = np.arange(20, dtype=float).reshape(10, 2)
        table = Table(values, np.ones_like(values, bool), [ColumnMeta(name="a"), ColumnMeta(name="y", role="target")])
        _, t7 = split(table, 0.2, seed=7)
        _, t8 = split(table, 0.2, seed=8)
        assert t7.values[:, 0].tolist() != t8.values[:, 0].tolist()

    def test_rounding_rule_800(self):
        values = np.zeros((800, 1))
        values[:, 0] = np.arange(800)
        table = Table(values, np.ones_like(values, bool), [ColumnMeta(name="y", role="target")])
        train, test = split(table, 0.2, seed=0)
        assert (train.n_rows, test.n_rows) == (640, 160)

    def test_empty_partition_is_error(self):
        values = np.zeros((3, 1))
        table = Table(values, np.ones_like(values, bool), [ColumnMeta(name="y", role="target")])
        with pytest.raises(ValueError):
            split(table, 0.01, seed=0)

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(min_value=2, max_value=200),
        frac=st.floats(min_value=0.05, max_value=0.95),
        seed=st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_partition_disjoint_exhaustive(self, n, frac, seed):
        n_test = int(np.floor(n * frac + 0.5))
        if n_test == 0 or n_test == n:
            return
        values = np.arange(n, dtype=float).reshape(-1, 1)
        table = Table(values, np.ones_like(values, bool), [ColumnMeta(name="y", role="target")])
        train, test = split(table, frac, seed)
        got = sorted(train.values[:, 0].tolist() + test.values[:, 0].tolist())
        assert got == list(range(n))

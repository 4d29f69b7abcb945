"""Birth-weight tabular regression pipeline."""

__version__ = "0.1.0"

from .tabular import (  # noqa: F401
    ColumnMeta,
    FilterPlan,
    FilterTrace,
    Table,
    apply_filter_plan,
    load_csv,
    recompute_missingness,
    split,
)

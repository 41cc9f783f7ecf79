"""CSV, JSON Lines and plain-text table output backed by pandas."""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from src.core.reward.reward import format_decimal


def _format_cell(value: Any) -> Any:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return format_decimal(float(value))
    return value


class TableWriter:
    """Writes result rows; floats are plain decimals with 10 significant digits."""

    def frame(
        self, rows: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None
    ) -> pd.DataFrame:
        """Rows as a DataFrame with formatted cells, in ``columns`` order when given."""
        formatted = [{key: _format_cell(value) for key, value in row.items()} for row in rows]
        return pd.DataFrame(formatted, columns=list(columns) if columns else None)

    def write_csv(
        self,
        rows: Sequence[Dict[str, Any]],
        path: str,
        columns: Optional[Sequence[str]] = None,
    ) -> str:
        """Write rows as CSV with a header line.

        Args:
            rows: One dictionary per row.
            path: Destination file path; parent directories are created.
            columns: Column order; defaults to the keys of the first row.

        Returns:
            The written path.
        """
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        self.frame(rows, columns).to_csv(target, index=False, lineterminator="\n")
        return str(target)

    def write_jsonl(self, rows: Sequence[Dict[str, Any]], path: str) -> str:
        """Write one compact JSON object per row."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="\n") as f:
            for row in rows:
                f.write(json.dumps(row, separators=(",", ":")))
                f.write("\n")
        return str(target)

    def write_text(
        self,
        rows: Sequence[Dict[str, Any]],
        path: str,
        columns: Optional[Sequence[str]] = None,
    ) -> str:
        """Write a human-readable aligned table."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(self.render(rows, columns) + "\n", encoding="utf-8")
        return str(target)

    def render(
        self, rows: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None
    ) -> str:
        if not rows:
            return "(no rows)"
        return self.frame(rows, columns).to_string(index=False)


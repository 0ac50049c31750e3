"""
Experiment reports: flat rows for CSV, versioned JSON with residual histories
"""

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

SCHEMA_VERSION = 1

# columns that differ between identical runs
TIMING_PREFIX = "time_"
TIMING_COLUMNS = ("speedup",)


def _plain(value: Any) -> Any:
    """numpy scalars and arrays -> JSON-friendly values"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class ExperimentReport:
    kind: str  # "partition", "solver", "spmv"
    rows: List[Dict[str, Any]] = field(default_factory=list)
    histories: Dict[str, List[float]] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def add_row(self, row: Dict[str, Any]):
        self.rows.append(_plain(row))

    def add_history(self, key: str, history: List[float]):
        self.histories[key] = [float(v) for v in history]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def timing_columns(self) -> List[str]:
        return [c for c in self.to_frame().columns if c.startswith(TIMING_PREFIX) or c in TIMING_COLUMNS]

    def to_csv(self, path: str) -> pd.DataFrame:
        df = self.to_frame()
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False)
        return df

    def history_frame(self, key: str) -> pd.DataFrame:
        history = self.histories[key]
        return pd.DataFrame({"iteration": np.arange(len(history)), "residual": history})

    def write_histories(self, directory: str) -> List[str]:
        """One (iteration, residual) CSV per history"""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for key in self.histories:
            path = out / f"history_{key}.csv"
            self.history_frame(key).to_csv(path, index=False)
            paths.append(str(path))
        return paths

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "created": self.meta.get("created", datetime.now().isoformat(timespec="seconds")),
            "meta": _plain(self.meta),
            "rows": self.rows,
            "histories": self.histories,
        }

    def to_json(self, path: Optional[str] = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source: str) -> "ExperimentReport":
        """Load from a JSON string or a file path"""
        text = source
        if not source.lstrip().startswith("{"):
            text = Path(source).read_text()
        data = json.loads(text)
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"Unsupported report schema version: {version}")
        meta = dict(data.get("meta", {}))
        meta.setdefault("created", data.get("created"))
        return cls(
            kind=data["kind"],
            rows=list(data.get("rows", [])),
            histories={k: list(v) for k, v in data.get("histories", {}).items()},
            meta=meta,
            schema_version=version,
        )

# src/data/femnist.py - Writer-keyed JSON loader (FEMNIST-style federated splits)
#
# Accepted layouts:
#   {"users": [id, ...], "user_data": {id: {"x": [[...], ...], "y": [...]}}}
#   {id: {"x": [[...], ...], "y": [...]}}
# Features are taken as stored; labels are integer class indices.

import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Union

import numpy as np

from errors import DataFormatError, UsageError
from .datasets import RawDataset

logger = logging.getLogger(__name__)


def _writer_table(payload: Any, source: str) -> Mapping[str, Any]:
    if not isinstance(payload, dict):
        raise DataFormatError("top level must be a JSON object", source=source)
    if "user_data" in payload:
        table = payload["user_data"]
        if not isinstance(table, dict):
            raise DataFormatError("'user_data' must map writer ids to records", source=source)
        order = payload.get("users") or list(table)
        missing = [u for u in order if u not in table]
        if missing:
            raise DataFormatError(f"writers listed in 'users' without data: {missing[:5]}", source=source)
        return {str(u): table[u] for u in order}
    return {str(k): v for k, v in payload.items()}


def _writer_dataset(writer: str, record: Any, source: str) -> RawDataset:
    if not isinstance(record, dict) or "x" not in record or "y" not in record:
        raise DataFormatError(f"writer '{writer}' needs 'x' and 'y' arrays", source=source)
    rows, labels = record["x"], record["y"]
    if len(rows) != len(labels):
        raise DataFormatError(f"writer '{writer}' has {len(rows)} feature rows but {len(labels)} labels",
                              source=source)
    lengths = {len(r) for r in rows}
    if len(lengths) > 1:
        raise DataFormatError(f"writer '{writer}' has inconsistent feature lengths {sorted(lengths)}",
                              source=source)
    try:
        features = np.asarray(rows, dtype=np.float64)
        y = np.asarray(labels, dtype=np.float64)
        return RawDataset(features, y)
    except (TypeError, ValueError) as e:
        raise DataFormatError(f"writer '{writer}': {e}", source=source) from e


def load_femnist_json(path: Union[str, Path]) -> Dict[str, RawDataset]:
    """One RawDataset per writer, keyed and ordered by writer id as stored."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"writer JSON not found: {path}")
    source = str(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataFormatError(f"invalid JSON: {e.msg} (line {e.lineno})", offset=e.pos, source=source) from e

    out: Dict[str, RawDataset] = {}
    feature_len = None
    for writer, record in _writer_table(payload, source).items():
        if isinstance(record, dict) and "y" in record and len(record["y"]) == 0:
            logger.warning("skipping writer '%s' with no samples", writer)
            continue
        data = _writer_dataset(writer, record, source)
        if feature_len is None:
            feature_len = data.num_features
        elif data.num_features != feature_len:
            raise DataFormatError(
                f"writer '{writer}' has {data.num_features} features, expected {feature_len}", source=source)
        out[writer] = data

    if out:
        k = max(d.num_classes for d in out.values())
        out = {w: d.with_num_classes(k) for w, d in out.items()}
    logger.info("loaded %d writers from %s", len(out), path)
    return out

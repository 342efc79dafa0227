"""Python front end for the apprisk engine."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Iterable, Mapping

from . import _core
from ._core import AppRiskError, confidence_interval, t_critical

__version__ = _core.__version__

__all__ = [
    "AppRiskError",
    "Engine",
    "build_tree",
    "confidence_interval",
    "t_critical",
    "validate_record",
]


def _dump(record: Mapping[str, Any] | str) -> str:
    return record if isinstance(record, str) else json.dumps(record)


def validate_record(record: Mapping[str, Any] | str) -> list[tuple[str, str]]:
    """(field, message) pairs; empty when the record is valid."""
    return _core.validate_record(_dump(record))


def build_tree(tree_config: str | os.PathLike, history: str | os.PathLike, embedding_dim: int = 256) -> dict:
    return json.loads(_core.build_tree(str(tree_config), str(history), embedding_dim))


class Engine:
    """Analysis engine over a checkout's config/ and data/ directories.

    `root` defaults to $APPRISK_ROOT, then the current directory.
    """

    def __init__(
        self,
        root: str | os.PathLike | None = None,
        gate: str = "",
        policy: str = "",
        config: Mapping[str, Any] | None = None,
    ) -> None:
        root = Path(root or os.environ.get("APPRISK_ROOT", ".")).resolve()
        self._engine = _core.Engine(str(root), gate, policy, json.dumps(config) if config else "")

    def analyze(self, record: Mapping[str, Any] | str) -> dict:
        return json.loads(self._engine.analyze(_dump(record)))

    def analyze_batch(self, records: Iterable[Mapping[str, Any] | str], parallelism: int = 4) -> dict:
        return json.loads(self._engine.analyze_batch([_dump(r) for r in records], parallelism))

    def index_stats(self) -> dict:
        return json.loads(self._engine.index_stats())

    def tree(self) -> dict:
        return json.loads(self._engine.tree())

    @property
    def tree_version(self) -> str:
        return self._engine.tree_version

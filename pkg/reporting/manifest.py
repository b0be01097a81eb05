"""
Run manifests

Each CLI run writes one manifest: the full config echo (seed included),
the artifact version, wall time, verdicts and the rng stream ledger. A
manifest's config replays the run bit-exactly for the same block size.
"""
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union
import json
import logging
import platform

import numpy as np
import scipy

from config import settings
from errors import UsageError
from montecarlo.streams import ledger
from reporting.output import dumps

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = 1


@dataclass
class RunManifest:
    """Reproducibility record of one run"""
    config: Dict[str, Any]
    version: str = settings.ARTIFACT_VERSION
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    wall_time: float = 0.0
    exit_code: Optional[int] = None
    verdicts: List[Dict[str, Any]] = field(default_factory=list)
    streams: Dict[str, Any] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    result_digest: Optional[str] = None
    error: Optional[str] = None

    def finish(self, exit_code: int, wall_time: float, error: Optional[str] = None) -> "RunManifest":
        self.exit_code = exit_code
        self.wall_time = wall_time
        self.error = error
        self.streams = ledger.to_dict()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": MANIFEST_SCHEMA,
            "version": self.version,
            "started": self.started,
            "wall_time_s": self.wall_time,
            "exit_code": self.exit_code,
            "error": self.error,
            "config": self.config,
            "verdicts": self.verdicts,
            "streams": self.streams,
            "outputs": self.outputs,
            "result_digest": self.result_digest,
            "platform": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(self.to_dict()) + "\n")
        logger.info(f"Manifest written to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunManifest":
        """
        Raises:
            UsageError: missing file or not a manifest
        """
        path = Path(path)
        if not path.is_file():
            raise UsageError(f"manifest not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise UsageError(f"manifest {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict) or "config" not in data:
            raise UsageError(f"{path} is not a run manifest")
        if data.get("version") != settings.ARTIFACT_VERSION:
            logger.warning(f"Manifest written by version {data.get('version')}, replaying with {settings.ARTIFACT_VERSION}")
        return cls(
            config=data["config"],
            version=data.get("version", settings.ARTIFACT_VERSION),
            started=data.get("started", ""),
            wall_time=data.get("wall_time_s", 0.0),
            exit_code=data.get("exit_code"),
            verdicts=data.get("verdicts", []),
            streams=data.get("streams", {}),
            outputs=data.get("outputs", []),
            result_digest=data.get("result_digest"),
            error=data.get("error"),
        )

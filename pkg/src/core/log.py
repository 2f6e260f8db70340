"""Logging setup and line-delimited run records"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from .config import Config

_configured = False


def get_logger(name: str) -> logging.Logger:
    """Get a module logger, configuring the root handler once from Config.LOG_LEVEL"""
    global _configured

    if not _configured:
        logging.basicConfig(
            level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        _configured = True
    return logging.getLogger(name)


class RunLog:
    """
    Append-only JSON-lines log; one record per call to `write`

    With `append=True` an existing file is kept and its records are loaded,
    so a resumed run extends the log of the run it continues.
    """

    def __init__(self, path: Optional[Path] = None, logger: Optional[logging.Logger] = None,
                 append: bool = False):
        self.path = Path(path) if path is not None else None
        self.logger = logger or get_logger("cdkit.run")
        self.records: List[Dict[str, Any]] = []

        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if append and self.path.exists():
                self.records = [json.loads(line) for line in self.path.read_text().splitlines() if line.strip()]
            else:
                self.path.write_text("")

    def write(self, record: Dict[str, Any]) -> None:
        line = json.dumps(record, sort_keys=True)
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a") as f:
                f.write(line + "\n")
        self.logger.info(line)

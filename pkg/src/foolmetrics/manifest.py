"""Run manifest: where the files of one pipeline run live.

Paths are stored relative to the manifest's directory so a run directory
can be moved or compared byte-for-byte across machines.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from os import PathLike
from typing import Optional

from . import __version__
from .errors import ParseError
from .io import dumps

MANIFEST_NAME = "manifest.json"
FILE_KEYS = ("task", "taxonomy", "model", "templates")


@dataclass
class RunManifest:
    root: str
    seed: Optional[int] = None
    files: dict = field(default_factory=dict)  # task/taxonomy/model/templates -> relative path
    records: dict = field(default_factory=dict)  # run name -> relative path
    attacks: dict = field(default_factory=dict)  # run name -> AttackConfig.to_dict()
    reports: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)  # generator and training settings
    metric_config: dict = field(default_factory=dict)

    def path(self, rel: str) -> str:
        return os.path.join(self.root, rel)

    def file(self, key: str) -> str:
        if key not in self.files:
            raise ParseError(f"manifest has no {key!r} entry", self.path(MANIFEST_NAME))
        return self.path(self.files[key])

    def check_files(self):
        """Every referenced file must exist."""
        rels = list(self.files.values()) + list(self.records.values()) + list(self.reports.values())
        for rel in rels:
            if not os.path.exists(self.path(rel)):
                raise FileNotFoundError(f"manifest references missing file {self.path(rel)}")

    def to_dict(self) -> dict:
        return {
            "tool": "foolmetrics",
            "version": __version__,
            "seed": self.seed,
            "files": dict(sorted(self.files.items())),
            "records": dict(self.records),
            "attacks": dict(self.attacks),
            "reports": dict(sorted(self.reports.items())),
            "simulate": self.simulate,
            "metric_config": self.metric_config,
        }


def write_manifest(m: RunManifest) -> str:
    path = m.path(MANIFEST_NAME)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(m.to_dict()))
    return path


def read_manifest(path: str | PathLike, check: bool = True) -> RunManifest:
    path = str(path)
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(d, dict) or d.get("tool") != "foolmetrics":
        raise ParseError("not a foolmetrics manifest", path)
    m = RunManifest(
        root=os.path.dirname(path) or ".",
        seed=d.get("seed"),
        files=d.get("files", {}),
        records=d.get("records", {}),
        attacks=d.get("attacks", {}),
        reports=d.get("reports", {}),
        simulate=d.get("simulate", {}),
        metric_config=d.get("metric_config", {}),
    )
    if check:
        m.check_files()
    return m

"""Run-directory layout and status handling.

Every experiment run owns one directory holding a config snapshot, a
provenance manifest, checkpoints, the poison-pair log, reports, traces, and
plots. Anything a report claims is recomputable from this directory alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class RunDir:
    root: Path

    @classmethod
    def create(cls, root) -> "RunDir":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        (root / "plots").mkdir(exist_ok=True)
        return cls(root)

    @classmethod
    def open(cls, root) -> "RunDir":
        root = Path(root)
        if not root.is_dir():
            raise FileNotFoundError(f"no run directory at {root}")
        return cls(root)

    @property
    def config_snapshot(self) -> Path:
        return self.root / "config.yaml"

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.txt"

    @property
    def camouflager_ckpt(self) -> Path:
        return self.root / "camouflager.pt"

    @property
    def target_ckpt(self) -> Path:
        return self.root / "target.pt"

    @property
    def clean_ckpt(self) -> Path:
        return self.root / "clean_target.pt"

    @property
    def pairs_csv(self) -> Path:
        return self.root / "poison_pairs.csv"

    @property
    def report_json(self) -> Path:
        return self.root / "report.json"

    @property
    def mapping_json(self) -> Path:
        return self.root / "mapping.json"

    @property
    def scheme_json(self) -> Path:
        return self.root / "scheme.json"

    @property
    def camouflager_trace(self) -> Path:
        return self.root / "camouflager_trace.csv"

    @property
    def target_trace(self) -> Path:
        return self.root / "target_trace.csv"

    @property
    def status_json(self) -> Path:
        return self.root / "status.json"

    @property
    def evaluate_json(self) -> Path:
        return self.root / "evaluate_report.json"

    @property
    def defense_json(self) -> Path:
        return self.root / "defense.json"

    @property
    def sweep_csv(self) -> Path:
        return self.root / "sweep.csv"

    @property
    def entropy_sweep_csv(self) -> Path:
        return self.root / "entropy_sweep.csv"

    @property
    def plots_dir(self) -> Path:
        return self.root / "plots"

    def require(self, path: Path, what: str) -> Path:
        if not path.exists():
            raise FileNotFoundError(f"run directory {self.root} lacks {what} ({path.name})")
        return path

    def write_status(self, status: str, stage: str | None = None,
                     error: str | None = None) -> None:
        payload = {"status": status}
        if stage is not None:
            payload["failing_stage"] = stage
        if error is not None:
            payload["error"] = error
        self.status_json.write_text(json.dumps(payload, indent=2) + "\n")

    def read_status(self) -> dict:
        return json.loads(self.require(self.status_json, "a status file").read_text())

"""Method-by-metric evaluation tables."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

from .metrics import RankingReport

COLUMNS = [
    "method",
    "global_pw_acc",
    "intra_pw_acc",
    "exact_ordering_acc",
    "kendall_tau",
    "pearson_r",
    "intra_kendall_tau",
    "coverage",
    "global_pairs",
    "intra_pairs",
    "entries",
    "realizations",
]


@dataclass
class EvaluationTable:
    rows: list[dict] = field(default_factory=list)
    header: dict = field(default_factory=dict)

    def add(self, method: str, report: RankingReport, coverage: float = 1.0) -> None:
        self.rows.append({"method": method, **report.to_dict(), "coverage": coverage})

    def to_csv(self, path_or_handle) -> None:
        def write(fh):
            for k, v in self.header.items():
                fh.write(f"# {k}: {v}\n")
            w = csv.DictWriter(fh, fieldnames=COLUMNS, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in r.items()})

        if hasattr(path_or_handle, "write"):
            write(path_or_handle)
        else:
            with open(path_or_handle, "w", newline="", encoding="utf-8") as fh:
                write(fh)

    def to_json(self) -> str:
        return json.dumps({"header": self.header, "rows": self.rows}, indent=1, sort_keys=True)

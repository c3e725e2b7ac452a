"""Machine-readable reports, delimited summaries and figures.

The JSON report is the canonical interface: exact rationals as strings,
every boolean verdict next to its certificate, deterministic for a fixed
seed.  Alongside it the CLI can emit a flat CSV summary and matplotlib
figures rendered to files; figures are a human convenience and the only
place where rationals are converted to floats.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


def input_digest(paths: list[str]) -> str:
    h = hashlib.sha256()
    for p in sorted(paths):
        h.update(Path(p).name.encode())
        h.update(Path(p).read_bytes())
    return h.hexdigest()


@dataclass
class Report:
    command: str
    payload: dict
    inputs: list[str] = field(default_factory=list)
    options: dict = field(default_factory=dict)
    seed: int | None = None
    with_timings: bool = False
    _t0: float = field(default_factory=time.perf_counter)

    def to_json_dict(self) -> dict:
        out = {
            "tool": "conerisk",
            "version": __version__,
            "command": self.command,
            "inputDigest": input_digest(self.inputs) if self.inputs else None,
            "options": self.options,
        }
        if self.seed is not None:
            out["seed"] = self.seed
        out.update(self.payload)
        if self.with_timings:
            out["timings"] = {"totalSeconds": round(time.perf_counter() - self._t0, 6)}
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    # -- delimited + figure output -----------------------------------------

    def summary_rows(self) -> list[dict]:
        rows = []
        payload = self.payload
        if "properties" in payload:
            for prop in payload["properties"]:
                rows.append(
                    {
                        "item": prop["name"],
                        "instances": prop["instances"],
                        "verdict": "pass" if prop["passed"] else "fail",
                        "detail": len(prop["failures"]),
                    }
                )
        elif "verdict" in payload:
            rows.append(
                {
                    "item": self.command,
                    "instances": 1,
                    "verdict": "pass" if payload["verdict"] else "fail",
                    "detail": "" if payload.get("certificate") is None else "certificate",
                }
            )
        elif "price" in payload:
            rows.append(
                {
                    "item": self.command,
                    "instances": 1,
                    "verdict": payload["price"],
                    "detail": payload.get("dual", {}).get("value", ""),
                }
            )
        else:
            for key, val in payload.items():
                if isinstance(val, (str, int, bool)):
                    rows.append({"item": key, "instances": 1, "verdict": val, "detail": ""})
        return rows

    def write_outputs(self, out_dir: str | Path) -> list[Path]:
        """Write report.json, summary.csv and figures into a directory."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        report_path = out / "report.json"
        report_path.write_text(self.dumps() + "\n")
        written.append(report_path)
        rows = self.summary_rows()
        csv_path = out / "summary.csv"
        with csv_path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["item", "instances", "verdict", "detail"])
            writer.writeheader()
            writer.writerows(rows)
        written.append(csv_path)
        written.extend(render_figures(self, out))
        return written


def render_figures(report: Report, out_dir: Path) -> list[Path]:
    """Render the report as figures; best effort, floats allowed here."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written: list[Path] = []
    payload = report.payload
    if "properties" in payload:
        names = [p["name"] for p in payload["properties"]]
        counts = [p["instances"] for p in payload["properties"]]
        ok = [p["passed"] for p in payload["properties"]]
        fig, ax = plt.subplots(figsize=(7, 0.5 + 0.4 * len(names)))
        colors = ["#2a7e43" if p else "#b7352d" for p in ok]
        ax.barh(range(len(names)), counts, color=colors)
        ax.set_yticks(range(len(names)), names)
        ax.invert_yaxis()
        ax.set_xlabel("instances")
        ax.set_title("property sweep")
        fig.tight_layout()
        path = out_dir / "sweep.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    if "price" in payload and "strategy" in payload:
        nodes = [s["node"] for s in payload["strategy"]]
        mags = [
            sum(abs(_to_float(x)) for x in s["xi"]) for s in payload["strategy"]
        ]
        fig, ax = plt.subplots(figsize=(7, 0.5 + 0.35 * max(1, len(nodes))))
        ax.barh(range(len(nodes)), mags, color="#215caf")
        ax.set_yticks(range(len(nodes)), nodes)
        ax.invert_yaxis()
        ax.set_xlabel("total adjustment size per node")
        ax.set_title(f"superhedge, price = {payload['price']}")
        fig.tight_layout()
        path = out_dir / "strategy.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    if "verdict" in payload:
        fig, ax = plt.subplots(figsize=(4, 1.6))
        verdict = payload["verdict"]
        ax.text(
            0.5,
            0.5,
            "PASS" if verdict else "FAIL",
            color="#2a7e43" if verdict else "#b7352d",
            fontsize=28,
            ha="center",
            va="center",
        )
        ax.set_axis_off()
        ax.set_title(report.command)
        fig.tight_layout()
        path = out_dir / "verdict.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def _to_float(s) -> float:
    if isinstance(s, str) and "/" in s:
        num, den = s.split("/")
        return int(num) / int(den)
    return float(s)

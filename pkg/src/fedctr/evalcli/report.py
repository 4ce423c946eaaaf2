"""EvalReport: a plain-text record of one run.

Layout::

    format_version = 1
    experiment = platforms-k2
    wall_clock_s = 12.3

    [config]
    users = 2000
    ...

    [metrics]
    auc = 0.8123
    ...

Files are never overwritten: if ``name.txt`` exists the report goes to
``name.run2.txt``, then ``name.run3.txt`` and so on.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .config import RunConfig, config_from_echo

REPORT_VERSION = 1


class ReportError(ValueError):
    pass


@dataclass
class EvalReport:
    experiment: str
    config: RunConfig
    metrics: dict[str, float]
    info: dict[str, str] = field(default_factory=dict)
    wall_clock_s: float = 0.0
    format_version: int = REPORT_VERSION

    def __post_init__(self):
        for k, v in self.metrics.items():
            if _bounded(k) and not (0.0 <= v <= 1.0):
                raise ReportError(f"metric {k} = {v} outside [0, 1]")

    def to_text(self) -> str:
        lines = [
            f"format_version = {self.format_version}",
            f"experiment = {self.experiment}",
            f"wall_clock_s = {self.wall_clock_s:.3f}",
        ]
        lines += [f"{k} = {v}" for k, v in self.info.items()]
        lines += ["", "[config]"]
        lines += [f"{k} = {v}" for k, v in self.config.echo().items()]
        lines += ["", "[metrics]"]
        lines += [f"{k} = {float(v)!r}" for k, v in self.metrics.items()]
        return "\n".join(lines) + "\n"

    def write(self, directory, name: str | None = None) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = name or self.experiment
        path = directory / f"{stem}.txt"
        n = 2
        while path.exists():
            path = directory / f"{stem}.run{n}.txt"
            n += 1
        with open(path, "x") as fh:
            fh.write(self.to_text())
        return path

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        head: dict[str, str] = {}
        sections: dict[str, dict[str, str]] = {"config": {}, "metrics": {}}
        current = head
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1]
                if name not in sections:
                    raise ReportError(f"unknown report section {name!r}")
                current = sections[name]
                continue
            if "=" not in line:
                raise ReportError(f"malformed report line {line!r}")
            k, v = line.split("=", 1)
            current[k.strip()] = v.strip()
        try:
            version = int(head.pop("format_version"))
            experiment = head.pop("experiment")
            wall = float(head.pop("wall_clock_s"))
        except KeyError as e:
            raise ReportError(f"report missing {e}") from e
        if version != REPORT_VERSION:
            raise ReportError(f"unsupported report format version {version}")
        return cls(
            experiment=experiment,
            config=config_from_echo(sections["config"]),
            metrics={k: float(v) for k, v in sections["metrics"].items()},
            info=head,
            wall_clock_s=wall,
            format_version=version,
        )

    @classmethod
    def read(cls, path) -> "EvalReport":
        return cls.from_text(Path(path).read_text())


def _bounded(key: str) -> bool:
    # rank metrics live in [0, 1]; losses and counts do not
    leaf = key.rsplit(".", 1)[-1]
    return key.startswith("attack.") or leaf in ("auc", "ap") or leaf.endswith("_auc") or leaf.endswith("_ap")


def summarize(values) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    values = [float(v) for v in values]
    if not values:
        return math.nan, math.nan
    return statistics.fmean(values), (statistics.stdev(values) if len(values) > 1 else 0.0)

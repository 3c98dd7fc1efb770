"""CSV emission for rate records, with a provenance comment block."""

from __future__ import annotations

import csv
import io
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from .schemas import ExperimentConfig, RateRecord, SchemeKind

CSV_COLUMNS = ["scheme", "topology", "distance", "attempts", "successes", "rate", "seed"]

_SIX_PLACES = Decimal("0.000001")


def format_rate(successes: int, attempts: int) -> str:
    """Exact ratio rounded half-even to six decimals."""
    return str((Decimal(successes) / Decimal(attempts)).quantize(_SIX_PLACES, rounding=ROUND_HALF_EVEN))


def provenance_lines(config: ExperimentConfig, roots: Dict[SchemeKind, List[int]]) -> List[str]:
    """Every config value that affects results; process settings are left out."""
    lines = [
        f"topology={config.topology}",
        "schemes=" + ",".join(kind.value for kind in config.schemes),
        f"p={config.p!r}",
        f"q={config.q!r}",
        f"tco={config.t_co}",
        "distances=" + ",".join(str(d) for d in config.distances),
        f"attempts={config.attempts_per_point}",
        f"warmup={config.warmup_steps}",
        f"seed={config.seed}",
        f"slow-control={str(config.slow_control).lower()}",
        f"via-root-strict={str(config.via_root_strict).lower()}",
    ]
    for kind in config.schemes:
        if kind in config.roots:
            nodes = ",".join(str(n) for n in roots.get(kind, []))
            lines.append(f"roots.{kind.value}={config.roots[kind]} -> {nodes}")
    return lines


def render_csv(records: Sequence[RateRecord], provenance: Iterable[str] = ()) -> str:
    buffer = io.StringIO()
    for line in provenance:
        buffer.write(f"# {line}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for record in records:
        writer.writerow([
            record.scheme.value,
            record.topology,
            record.distance,
            record.attempts,
            record.successes,
            format_rate(record.successes, record.attempts),
            record.seed,
        ])
    return buffer.getvalue()


def write_csv(path: Path, records: Sequence[RateRecord], provenance: Iterable[str] = ()) -> None:
    path.write_text(render_csv(records, provenance), encoding="utf-8")


def read_csv(path: Path) -> List[Dict[str, str]]:
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def summary_line(kind: SchemeKind, records: Sequence[RateRecord]) -> str:
    mine = [r for r in records if r.scheme is kind]
    if not mine:
        return f"{kind.value}: no sampled distances"
    attempts = sum(r.attempts for r in mine)
    successes = sum(r.successes for r in mine)
    per_distance = " ".join(f"d{r.distance}={format_rate(r.successes, r.attempts)}" for r in mine)
    return (
        f"{kind.value}: {successes}/{attempts} overall rate {format_rate(successes, attempts)} "
        f"over {len(mine)} distance(s) [{per_distance}]"
    )

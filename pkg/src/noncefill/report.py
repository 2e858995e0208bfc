"""Report documents.

The ``machine`` format is a single JSON object::

    {
      "format": "noncefill-report", "version": 1,
      "scenarios":  [{"site", "design", "category",
                      "wire_contains_secret", "wire_contains_nonce"}, ...],
      "functional": [{"design", "counts": {category: n}}, ...],
      "matrix": null | {
          "dynamic": [{"design", "attacker", "rating", "expected",
                       "evidence": [[variant, verdict], ...]}, ...],
          "static":  [{"row", "source", "ratings": {column: rating}}, ...],
          "matches_expected": bool},
      "overhead": [OverheadStats records, ...]
    }

Scenario records are sorted by (site, design) and keys are sorted, so equal
results give byte-identical documents. The ``table`` format is for people.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .harness import (
    COLUMNS,
    DESIGN_ROWS,
    EXPECTED_DYNAMIC,
    COMPARISON_ROWS,
    FunctionalReport,
    ScenarioResult,
    SecurityMatrix,
)

FORMATS = ("machine", "table")
STATIC_SOURCE = "static (not simulated)"
DYNAMIC_COLUMNS = ("honest-but-curious", "dom", "extension")


@dataclass
class Report:
    scenarios: list[ScenarioResult] = field(default_factory=list)
    functional: list[dict] = field(default_factory=list)
    matrix: SecurityMatrix | None = None
    overhead: list[dict] = field(default_factory=list)

    def add_functional(self, fr: FunctionalReport) -> None:
        self.scenarios.extend(fr.results)
        self.functional.append({"design": fr.design, "counts": dict(fr.counts)})


def _matrix_record(matrix: SecurityMatrix) -> dict:
    dynamic = [
        {
            "design": d,
            "attacker": a,
            "rating": rating,
            "expected": EXPECTED_DYNAMIC.get((d, a)),
            "evidence": [list(e) for e in matrix.evidence.get((d, a), [])],
        }
        for (d, a), rating in sorted(matrix.dynamic.items())
    ]
    static = [
        {"row": row, "source": STATIC_SOURCE, "ratings": dict(zip(COLUMNS, ratings))}
        for row, ratings in COMPARISON_ROWS.items()
    ]
    return {"dynamic": dynamic, "static": static, "matches_expected": matrix.matches_expected()}


def _to_document(report: Report) -> dict:
    scenarios = sorted(report.scenarios, key=lambda r: (r.site, r.design))
    return {
        "format": "noncefill-report",
        "version": 1,
        "scenarios": [r.to_record() for r in scenarios],
        "functional": report.functional,
        "matrix": None if report.matrix is None else _matrix_record(report.matrix),
        "overhead": report.overhead,
    }


def _cell(rating: str | None) -> str:
    return rating if rating is not None else "-"


def _table(report: Report) -> str:
    lines = []
    header = f"{'Design':36} {'HbC':5} {'DOM':5} {'Ext':5} {'MitM':5} {'Phish':5} {'NoWeb':5} {'NoBrw':5}  Source"
    if report.matrix is not None or not (report.scenarios or report.overhead):
        lines += ["Security matrix (protection achieved)", header, "-" * len(header)]
        dynamic = report.matrix.dynamic if report.matrix is not None else {}
        for row, ratings in COMPARISON_ROWS.items():
            design = next((d for d, r in DESIGN_ROWS.items() if r == row), None)
            cells = list(ratings)
            simulated = design is not None and any((design, a) in dynamic for a in DYNAMIC_COLUMNS)
            if simulated:
                for i, a in enumerate(DYNAMIC_COLUMNS):
                    cells[i] = _cell(dynamic.get((design, a)))
                source = "simulated (MitM, phisher, deploy: static)"
            else:
                source = STATIC_SOURCE
            lines.append(f"{row:36} " + " ".join(f"{c:5}" for c in cells) + f"  {source}")
        if report.matrix is not None:
            bad = report.matrix.mismatches()
            lines.append("matrix matches expected: " + ("yes" if not bad else f"NO {bad}"))
        lines.append("")
    for fr in report.functional:
        counts = ", ".join(f"{k}={v}" for k, v in fr["counts"].items())
        lines.append(f"Functional evaluation, design {fr['design']}: {counts}")
    if report.scenarios:
        lines.append(f"{'site':24} {'design':6} {'category':15} secret-on-wire  nonce-on-wire")
        for r in sorted(report.scenarios, key=lambda r: (r.site, r.design)):
            lines.append(f"{r.site:24} {r.design:<6} {r.category:15} "
                         f"{str(r.wire_contains_secret):15} {r.wire_contains_nonce}")
        lines.append("")
    for o in report.overhead:
        rep, tot = o["replacement_ns"], o["total_ns"]
        lines += [
            f"Overhead: {o['runs']} runs, body {o['body_size']} B, replacement "
            f"{'on' if o['with_replacement'] else 'off'}, timer resolution {o['timer_resolution_ns']:g} ns",
            f"  replacement stage ns: mean {rep['mean']:.0f}  median {rep['median']:.0f}  p95 {rep['p95']:.0f}",
            f"  pipeline total ns:    mean {tot['mean']:.0f}  median {tot['median']:.0f}  p95 {tot['p95']:.0f}",
            f"  replacement fraction: {o['replacement_fraction']:.1%}",
        ]
    return "\n".join(lines).rstrip("\n") + "\n"


def emit_report(report: Report, format: str = "machine") -> bytes:
    if format == "machine":
        return (json.dumps(_to_document(report), indent=2, sort_keys=True) + "\n").encode()
    if format == "table":
        return _table(report).encode()
    raise ValueError(f"unknown report format {format!r}; expected one of {FORMATS}")


def parse_report(data: bytes) -> Report:
    """Read back a ``machine`` document."""
    doc = json.loads(data)
    if doc.get("format") != "noncefill-report":
        raise ValueError("not a noncefill report")
    matrix = None
    if doc.get("matrix") is not None:
        matrix = SecurityMatrix()
        for cell in doc["matrix"]["dynamic"]:
            key = (int(cell["design"]), cell["attacker"])
            matrix.dynamic[key] = cell["rating"]
            matrix.evidence[key] = [tuple(e) for e in cell["evidence"]]
    return Report(
        scenarios=[ScenarioResult.from_record(r) for r in doc.get("scenarios", [])],
        functional=doc.get("functional", []),
        matrix=matrix,
        overhead=doc.get("overhead", []),
    )

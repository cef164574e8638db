"""Portfolio CSV reading and writing.

The file is UTF-8, comma separated, with the exact header::

    compound_id,study_id,phase,estimate,std_error

Numbers must use a decimal point (no locale-dependent forms, no thousands
separators, no nan/inf). Every bad row is reported with its line number
before anything is returned.
"""

from __future__ import annotations

import csv
import io
import math
import re
from contextlib import contextmanager
from pathlib import Path

from ..conjugate import StudyEstimate
from ..errors import ValidationError
from ..fit.portfolio import CompoundRecord, Portfolio

HEADER = ("compound_id", "study_id", "phase", "estimate", "std_error")
_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")


class PortfolioParseError(ValidationError):
    def __init__(self, problems):
        self.problems = list(problems)
        head = f"{len(self.problems)} invalid row(s)"
        super().__init__(head + ":\n" + "\n".join("  " + p for p in self.problems))


@contextmanager
def _open_text(source):
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            yield fh
    else:
        yield source


def _number(text):
    text = text.strip()
    if not _NUMBER.fullmatch(text):
        return None
    value = float(text)
    return value if math.isfinite(value) else None


def parse_portfolio(source) -> Portfolio:
    """Read a portfolio CSV from a path or text stream."""
    with _open_text(source) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PortfolioParseError(["line 1: empty file, expected header"]) from None
        if tuple(h.strip() for h in header) != HEADER:
            raise PortfolioParseError([f"line 1: header must be {','.join(HEADER)}, got {','.join(header)}"])

        problems = []
        groups: dict[str, list[StudyEstimate]] = {}
        seen: dict[tuple[str, str], int] = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(HEADER):
                problems.append(f"line {line}: expected {len(HEADER)} fields, got {len(row)}")
                continue
            cid, sid, phase, est_txt, se_txt = (c.strip() for c in row)
            bad = False
            for name, text in (("compound_id", cid), ("study_id", sid)):
                if not text:
                    problems.append(f"line {line}: missing {name}")
                    bad = True
            est, se = _number(est_txt), _number(se_txt)
            if not est_txt:
                problems.append(f"line {line}: missing estimate")
                bad = True
            elif est is None:
                problems.append(f"line {line}: estimate {est_txt!r} is not a finite decimal number")
                bad = True
            if not se_txt:
                problems.append(f"line {line}: missing std_error")
                bad = True
            elif se is None:
                problems.append(f"line {line}: std_error {se_txt!r} is not a finite decimal number")
                bad = True
            elif se <= 0:
                problems.append(f"line {line}: std_error must be > 0, got {se_txt}")
                bad = True
            key = (cid, sid)
            if cid and sid:
                if key in seen:
                    problems.append(
                        f"line {line}: duplicate (compound_id, study_id) {key!r}, first seen on line {seen[key]}"
                    )
                    bad = True
                else:
                    seen[key] = line
            if not bad:
                groups.setdefault(cid, []).append(StudyEstimate(est, se, label=sid, phase=phase))

    if problems:
        raise PortfolioParseError(problems)
    if not groups:
        raise PortfolioParseError(["no data rows"])
    return Portfolio(tuple(CompoundRecord(cid, tuple(st)) for cid, st in groups.items()))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_portfolio(portfolio: Portfolio, dest) -> None:
    """Write in the same schema; floats use shortest round-trip form."""
    def rows():
        for rec in portfolio.compounds:
            for j, st in enumerate(rec.studies):
                sid = st.label if st.label is not None else f"s{j}"
                yield [rec.compound_id, sid, st.phase or "", _fmt(st.estimate), _fmt(st.std_error)]

    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            _write_rows(fh, rows())
    else:
        _write_rows(dest, rows())


def _write_rows(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEADER)
    w.writerows(rows)


def parse_estimates(source) -> list[StudyEstimate]:
    """Read a flat list of estimates for pooling.

    Needs ``estimate`` and ``std_error`` columns; a ``study_id`` or ``label``
    column, if present, becomes the label. Other columns are ignored.
    """
    with _open_text(source) as fh:
        text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    fields = [f.strip() for f in (reader.fieldnames or [])]
    reader.fieldnames = fields
    missing = [c for c in ("estimate", "std_error") if c not in fields]
    if missing:
        raise PortfolioParseError([f"line 1: header lacks column(s) {', '.join(missing)}"])
    label_col = "study_id" if "study_id" in fields else ("label" if "label" in fields else None)
    problems, out = [], []
    for row in reader:
        line = reader.line_num
        est, se = _number(row.get("estimate") or ""), _number(row.get("std_error") or "")
        if est is None:
            problems.append(f"line {line}: bad or missing estimate {row.get('estimate')!r}")
        if se is None or se <= 0:
            problems.append(f"line {line}: std_error must be a decimal number > 0, got {row.get('std_error')!r}")
        if est is not None and se is not None and se > 0:
            out.append(StudyEstimate(est, se, label=row.get(label_col) if label_col else None))
    if problems:
        raise PortfolioParseError(problems)
    if not out:
        raise PortfolioParseError(["no data rows"])
    return out

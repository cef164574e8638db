"""Numeric tables behind the standard figures, written as TSV.

File layout::

    # {"eta": -1.0, ...}          generating parameters, JSON, sorted keys
    # labels ["c1", "c2"]         optional row labels (adjust_compare only)
    s<TAB>bias@sigma_s=0.1 ...    column names
    -3.0<TAB>0.4 ...              rows, floats in shortest round-trip form

Tables carry no timestamps, so identical parameters give identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..conjugate import (
    NormalPrior,
    adjust_estimate,
    bias,
    pos_large,
    prob_meet_threshold,
)
from ..errors import ValidationError
from ..normal import norm_pdf
from .csvio import parse_portfolio
from .pooling import pool_fixed_effect

FIGURES = {
    "density": ("eta", "sigma2", "sigma_s_grid", "x_min", "x_max", "n_points"),
    "threshold_vs_sigma_s": ("eta", "sigma2", "delta", "sigma_s_min", "sigma_s_max", "n_points"),
    "bias_vs_s": ("eta", "sigma2", "sigma_s_grid", "s_min", "s_max", "n_points"),
    "pos_vs_s": ("eta", "sigma2", "sigma_l", "delta", "sigma_s_grid", "s_min", "s_max", "n_points"),
    "adjust_compare": ("eta", "sigma2", "portfolio", "small_phase", "large_phase"),
}
_GRIDS = {"sigma_s_grid"}
_TEXT = {"portfolio", "small_phase", "large_phase"}


@dataclass(frozen=True)
class PlotTable:
    figure_id: str
    columns: dict
    params: dict
    labels: Optional[list] = field(default=None)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValidationError(f"columns differ in length: {sorted(lengths)}")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0


def _normalize(figure_id, params):
    if figure_id not in FIGURES:
        raise ValidationError(f"unknown figure {figure_id!r}; choose from {', '.join(FIGURES)}")
    required = FIGURES[figure_id]
    missing = [k for k in required if k not in params]
    if missing:
        raise ValidationError(f"{figure_id}: missing parameter(s): {', '.join(missing)}")
    out = dict(params)
    for key in required:
        value = params[key]
        if key in _TEXT:
            out[key] = str(value)
        elif key in _GRIDS:
            seq = value if isinstance(value, (list, tuple)) else [value]
            out[key] = [float(v) for v in seq]
            if not out[key]:
                raise ValidationError(f"{key} must not be empty")
        elif key == "n_points":
            if int(value) != float(value) or int(value) < 2:
                raise ValidationError("n_points must be an integer >= 2")
            out[key] = int(value)
        else:
            out[key] = float(value)
            if not math.isfinite(out[key]):
                raise ValidationError(f"{key} must be finite")
    return out


def _grid_label(name, value):
    return f"{name}@sigma_s={value!r}"


def emit_plot_data(figure_id: str, params: dict) -> PlotTable:
    """Compute the table for ``figure_id`` from a complete parameter dict."""
    p = _normalize(figure_id, params)
    prior = NormalPrior(p["eta"], p["sigma2"])
    cols: dict[str, np.ndarray] = {}
    labels = None

    if figure_id == "density":
        x = np.linspace(p["x_min"], p["x_max"], p["n_points"])
        cols["x"] = x
        cols["theta_density"] = norm_pdf((x - prior.eta) / prior.sigma) / prior.sigma
        for ss in p["sigma_s_grid"]:
            tau = math.sqrt(ss * ss + prior.sigma2)
            cols[_grid_label("s_hat_density", ss)] = norm_pdf((x - prior.eta) / tau) / tau

    elif figure_id == "threshold_vs_sigma_s":
        grid = np.linspace(p["sigma_s_min"], p["sigma_s_max"], p["n_points"])
        cols["sigma_s"] = grid
        cols["prob_meet_threshold"] = np.array(
            [prob_meet_threshold(prior, ss, p["delta"]) for ss in grid])

    elif figure_id == "bias_vs_s":
        s = np.linspace(p["s_min"], p["s_max"], p["n_points"])
        cols["s"] = s
        for ss in p["sigma_s_grid"]:
            cols[_grid_label("bias", ss)] = np.array(
                [bias(prior, ss, si) for si in s])

    elif figure_id == "pos_vs_s":
        s = np.linspace(p["s_min"], p["s_max"], p["n_points"])
        cols["s"] = s
        for ss in p["sigma_s_grid"]:
            cols[_grid_label("pos", ss)] = np.array(
                [pos_large(prior, ss, p["sigma_l"], si, p["delta"]) for si in s])

    else:  # adjust_compare
        portfolio = parse_portfolio(p["portfolio"])
        rows, labels = [], []
        for rec in portfolio.compounds:
            small = [st for st in rec.studies if st.phase == p["small_phase"]]
            large = [st for st in rec.studies if st.phase == p["large_phase"]]
            if not small or not large:
                continue
            sm = pool_fixed_effect(small)
            lg = pool_fixed_effect(large)
            rows.append((sm.estimate, sm.std_error, adjust_estimate(prior, sm),
                         lg.estimate, lg.std_error, 1.0 / sm.variance))
            labels.append(rec.compound_id)
        if not rows:
            raise ValidationError(
                f"no compound has both {p['small_phase']!r} and {p['large_phase']!r} studies")
        arr = np.array(rows)
        for i, name in enumerate(("small_observed", "small_se", "small_adjusted",
                                  "large_observed", "large_se", "small_information")):
            cols[name] = arr[:, i]

    return PlotTable(figure_id, cols, p, labels)


def _fmt(x) -> str:
    return repr(float(x))


def write_plot_table(table: PlotTable, dest) -> None:
    header = dict(table.params)
    header["figure_id"] = table.figure_id
    lines = ["# " + json.dumps(header, sort_keys=True)]
    if table.labels is not None:
        lines.append("# labels " + json.dumps(list(table.labels)))
    names = list(table.columns)
    lines.append("\t".join(names))
    for i in range(table.n_rows):
        lines.append("\t".join(_fmt(table.columns[n][i]) for n in names))
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)


def read_plot_table(source) -> PlotTable:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValidationError("plot table lacks its '# {params}' header line")
    params = json.loads(lines[0][2:])
    figure_id = params.pop("figure_id")
    pos = 1
    labels = None
    if pos < len(lines) and lines[pos].startswith("# labels "):
        labels = json.loads(lines[pos][len("# labels "):])
        pos += 1
    names = lines[pos].split("\t")
    data = [[float(x) for x in ln.split("\t")] for ln in lines[pos + 1:] if ln]
    arr = np.array(data).reshape(len(data), len(names))
    return PlotTable(figure_id, {n: arr[:, i] for i, n in enumerate(names)}, params, labels)

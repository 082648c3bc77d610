"""Report files: ``report.json``, ``critical_points.csv``, ``measure_sweep.csv`` and ``domain_k.svg``.

Every file carries the configuration hash: a top-level key in the JSON, a
leading ``# config_hash=...`` line in the CSV files and a ``<metadata>``
element in the SVG.
"""

from __future__ import annotations

import csv
import io
import json
import os

import numpy as np
from skimage.measure import find_contours

from .config import RunConfig
from .errors import StarcritError
from .harmonic_profile import profile_value
from .pipeline import build_field
from .torsion_domain import TRANSVERSE_RADIUS, StarDomain

FORMATS = ("json", "csv", "svg")
CP_KEYS = {"theorem1": None, "domain": "critical_points", "solve": "solution_critical_points"}


def dump_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header, rows, config_hash):
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _critical_key(report: dict, rec: dict) -> str | None:
    key = CP_KEYS.get(report["command"])
    if key is None and report["command"] == "theorem1":
        key = rec.get("clauses", {}).get("a", {}).get("source")
    return key


def critical_point_rows(report: dict) -> tuple[list[str], list[list]]:
    d = report["config"]["d"]
    header = ["k", "eps", "eta"] + [f"x{i + 1}" for i in range(d)] + ["kind", "min_eig", "max_eig"]
    rows = []
    for rec in report.get("records", []):
        key = _critical_key(report, rec)
        for p in (rec.get(key) or []) if key else []:
            eig = p["eigenvalues"]
            rows.append([rec["k"], rec["eps"], rec.get("eta"), *p["location"], p["kind"], min(eig), max(eig)])
    return header, rows


def measure_rows(report: dict) -> tuple[list[str], list[list]]:
    header = ["k", "eps", "ratio", "ci", "fitted_slope"]
    if report["command"] == "theorem1":
        slope = report["clauses"]["c"].get("fitted_slope")
        key = "manifold_ratio"
    else:
        slope = report.get("sweep", {}).get("fitted_slope")
        key = "ratio"
    rows = []
    for rec in report.get("records", []):
        est = rec.get(key)
        if est:
            rows.append([rec["k"], rec["eps"], est["value"], est["error"], slope])
    return header, rows


# ---------------------------------------------------------------------- svg


def _slice_boundary(dom: StarDomain, count: int = 720):
    th = 2 * np.pi * np.arange(count) / count
    omega = np.zeros((count, dom.d))
    omega[:, 0], omega[:, 1] = np.cos(th), np.sin(th)
    r = dom.radial_extent(omega)
    return r[:, None] * omega[:, :2]


def _slice_contours(dom: StarDomain, level: float, spacing: float = 0.02):
    f = dom.field
    x1 = np.arange(-dom.half_width, dom.half_width + spacing / 2, spacing)
    x2 = np.arange(-TRANSVERSE_RADIUS, TRANSVERSE_RADIUS + spacing / 2, spacing)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    u = 0.5 / (f.d - 1) * (1 - X2**2) + f.eps * profile_value(f.profile, X1, X2)
    out = []
    for c in find_contours(u, level):
        out.append(np.column_stack([x1[0] + c[:, 0] * spacing, x2[0] + c[:, 1] * spacing]))
    return out


def render_svg(dom: StarDomain, points, config_hash: str, title: str, width: int = 900) -> str:
    """Slice ``x3 = ... = 0``: boundary polyline, the cylinder-level contour and marked critical points."""
    bnd = _slice_boundary(dom)
    contours = _slice_contours(dom, dom.field.level)
    xmax = float(np.max(np.abs(bnd[:, 0]))) * 1.05
    ymax = float(np.max(np.abs(bnd[:, 1]))) * 1.15
    scale = width / (2 * xmax)
    height = int(round(2 * ymax * scale))

    def pt(p):
        return f"{(p[0] + xmax) * scale:.2f},{(ymax - p[1]) * scale:.2f}"

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<metadata>config_hash={config_hash}</metadata>",
        f"<title>{title}</title>",
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<polygon points="{" ".join(pt(p) for p in bnd)}" fill="#eef3fb" stroke="#1f3b73" stroke-width="1.5"/>',
    ]
    for c in contours:
        lines.append(f'<polyline points="{" ".join(pt(p) for p in c)}" fill="none" stroke="#c0392b" '
                     'stroke-width="1" stroke-dasharray="4,3"/>')
    for p in points:
        x, y = pt(p["location"][:2]).split(",")
        if p["kind"] == "maximum":
            lines.append(f'<circle class="maximum" cx="{x}" cy="{y}" r="5" fill="#1f3b73"/>')
        else:
            lines.append(f'<rect class="{p["kind"]}" x="{float(x) - 4:.2f}" y="{float(y) - 4:.2f}" '
                         'width="8" height="8" fill="#e67e22"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_artifacts(report: dict, formats, out_dir, cfg: RunConfig | None = None) -> list[str]:
    """Write the requested formats into ``out_dir`` and return the written paths."""
    formats = list(formats)
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ValueError(f"unknown formats {bad}; choose from {FORMATS}")
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir} is not writable")
    h = report["config_hash"]
    written = []
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dump_json(report))
        written.append(path)
    records = report.get("records", [])
    if "csv" in formats and records:
        header, rows = critical_point_rows(report)
        if report["command"] in CP_KEYS:
            path = os.path.join(out_dir, "critical_points.csv")
            _write_csv(path, header, rows, h)
            written.append(path)
        if report["command"] in ("theorem1", "kernel"):
            header, rows = measure_rows(report)
            path = os.path.join(out_dir, "measure_sweep.csv")
            _write_csv(path, header, rows, h)
            written.append(path)
    if "svg" in formats and records and cfg is not None and report["command"] in CP_KEYS:
        for rec in records:
            key = _critical_key(report, rec)
            dom = StarDomain(build_field(cfg, rec["eps"]))
            try:
                svg = render_svg(dom, rec.get(key) or [], h, f"k={rec['k']} eps={rec['eps']:g}")
            except StarcritError:
                continue
            path = os.path.join(out_dir, f"domain_{rec['k']}.svg")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(svg)
            written.append(path)
    return written

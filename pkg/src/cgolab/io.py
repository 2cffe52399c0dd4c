"""Output formats: self-describing grid dumps, CSV tables, plot data and SVG line plots."""
from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .errors import CGOError

DUMP_MAGIC = b"CGOLABGRID\n"
DUMP_VERSION = 1


class DumpFormatError(CGOError):
    pass


def write_grid_dump(path, array, spacings=(), T: float | None = None, meta: dict | None = None) -> None:
    """Header line of JSON after the magic, then little-endian samples (complex interleaved re, im)."""
    a = np.asarray(array)
    cplx = np.iscomplexobj(a)
    dtype = "<c16" if cplx else "<f8"
    header = {
        "version": DUMP_VERSION,
        "dims": list(a.shape),
        "dtype": "complex128-le-interleaved" if cplx else "float64-le",
        "spacings": [float(s) for s in spacings],
        "T": None if T is None else float(T),
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(a, dtype=dtype).tobytes())


def read_grid_dump(path):
    """(array, header)."""
    with open(path, "rb") as fh:
        if fh.read(len(DUMP_MAGIC)) != DUMP_MAGIC:
            raise DumpFormatError(f"{path}: not a grid dump")
        header = json.loads(fh.readline())
        if header.get("version") != DUMP_VERSION:
            raise DumpFormatError(f"{path}: unsupported dump version {header.get('version')}")
        dtype = "<c16" if header["dtype"].startswith("complex") else "<f8"
        data = np.frombuffer(fh.read(), dtype=dtype)
    n = int(np.prod(header["dims"])) if header["dims"] else 1
    if data.size != n:
        raise DumpFormatError(f"{path}: expected {n} samples, found {data.size}")
    return data.reshape(header["dims"]).astype(dtype[1:]), header


def fmt_float(x) -> str:
    """Shortest round-trip repr; empty for None, 'nan' for NaN."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(v) if isinstance(v, float) or v is None else v for v in row])


def write_plot_data(path, columns: dict) -> None:
    """Whitespace-separated table with a commented header, readable by gnuplot."""
    names = list(columns)
    n = len(next(iter(columns.values()))) if columns else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for i in range(n):
            fh.write(" ".join(fmt_float(columns[c][i]) if not isinstance(columns[c][i], str) else columns[c][i]
                              for c in names) + "\n")


def svg_line_plot(path, series: dict, xlabel: str = "x", ylabel: str = "y", logx=False, logy=False,
                  width: int = 480, height: int = 320) -> None:
    """Minimal static SVG: one polyline per series (name -> (xs, ys)), axes and labels."""
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if logy else (lambda v: v)
    pts = {}
    for name, (xs, ys) in series.items():
        p = [(tx(x), ty(y)) for x, y in zip(xs, ys)
             if math.isfinite(x) and math.isfinite(y) and (not logx or x > 0) and (not logy or y > 0)]
        pts[name] = p
    allp = [q for p in pts.values() for q in p] or [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(q[0] for q in allp), max(q[0] for q in allp)
    y0, y1 = min(q[1] for q in allp), max(q[1] for q in allp)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    m = 50
    sx = lambda v: m + (v - x0) / (x1 - x0) * (width - 2 * m)
    sy = lambda v: height - m - (v - y0) / (y1 - y0) * (height - 2 * m)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
           f'<text x="14" y="{height / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 14 {height / 2})">{ylabel}</text>']
    for i, (name, p) in enumerate(pts.items()):
        c = colors[i % len(colors)]
        if p:
            coords = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in p)
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{width - m}" y="{m + 14 * i}" text-anchor="end" font-size="11" fill="{c}">{name}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def ensure_dir(path) -> str:
    """Create the output directory if missing; raise OSError if it is not writable."""
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path} is not writable")
    return path

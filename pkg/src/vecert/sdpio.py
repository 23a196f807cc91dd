"""Sparse text format for SDP problems and a canonical serialization.

Format (one record per line, ``#`` comments ignored)::

    sdp 1
    blocks <d_1> ... <d_m>
    free <n>
    rows <r>
    b <row> <value>                        (nonzero right-hand sides)
    f <row> <var> <value>                  (free-variable coefficients)
    a <row> <block> <i> <j> <value>        (upper-triangle block coefficients, i <= j)
    cf <var> <value>                       (free-variable costs)
    cb <block> <i> <j> <value>             (block costs)
    lb <var> <value> / ub <var> <value>    (finite bounds)

Indices are 0-based; values are written with ``repr`` so reading a written
problem reproduces it bit for bit. Names and labels are not part of the
format.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .sdpcore import BlockEntries, SdpFormatError, SdpProblem

FORMAT_VERSION = 1


def _num(v: float) -> str:
    v = float(v)
    return "0.0" if v == 0.0 else repr(v)


def write_sdp(p: SdpProblem) -> str:
    out = [f"sdp {FORMAT_VERSION}",
           "blocks " + " ".join(str(d) for d in p.block_dims),
           f"free {p.n_free}",
           f"rows {p.n_rows}"]
    out += [f"b {r} {_num(v)}" for r, v in enumerate(p.b) if v != 0.0]
    order = np.lexsort((p.free_cols, p.free_rows))
    out += [f"f {p.free_rows[t]} {p.free_cols[t]} {_num(p.free_vals[t])}" for t in order
            if p.free_vals[t] != 0.0]
    for k, ent in enumerate(p.blocks):
        order = np.lexsort((ent.jj, ent.ii, ent.rows))
        out += [f"a {ent.rows[t]} {k} {ent.ii[t]} {ent.jj[t]} {_num(ent.vals[t])}" for t in order
                if ent.vals[t] != 0.0]
    out += [f"cf {j} {_num(v)}" for j, v in enumerate(p.c_free) if v != 0.0]
    for k, ent in enumerate(p.objective_blocks()):
        order = np.lexsort((ent.jj, ent.ii))
        out += [f"cb {k} {ent.ii[t]} {ent.jj[t]} {_num(ent.vals[t])}" for t in order
                if ent.vals[t] != 0.0]
    for tag, arr in (("lb", p.free_lb), ("ub", p.free_ub)):
        if arr is not None:
            out += [f"{tag} {j} {_num(v)}" for j, v in enumerate(arr) if np.isfinite(v)]
    return "\n".join(out) + "\n"


def read_sdp(text: str) -> SdpProblem:
    dims: list[int] | None = None
    n_free = n_rows = None
    b_ent, f_ent, c_free, lbs, ubs = [], [], [], [], []
    a_ent: dict[int, list] = {}
    cb_ent: dict[int, list] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            tag = tok[0]
            if tag == "sdp":
                if int(tok[1]) != FORMAT_VERSION:
                    raise SdpFormatError(f"line {lineno}: unsupported format version {tok[1]}")
            elif tag == "blocks":
                dims = [int(t) for t in tok[1:]]
            elif tag == "free":
                n_free = int(tok[1])
            elif tag == "rows":
                n_rows = int(tok[1])
            elif tag == "b":
                b_ent.append((int(tok[1]), float(tok[2])))
            elif tag == "f":
                f_ent.append((int(tok[1]), int(tok[2]), float(tok[3])))
            elif tag == "a":
                a_ent.setdefault(int(tok[2]), []).append(
                    (int(tok[1]), int(tok[3]), int(tok[4]), float(tok[5])))
            elif tag == "cf":
                c_free.append((int(tok[1]), float(tok[2])))
            elif tag == "cb":
                cb_ent.setdefault(int(tok[1]), []).append((0, int(tok[2]), int(tok[3]), float(tok[4])))
            elif tag == "lb":
                lbs.append((int(tok[1]), float(tok[2])))
            elif tag == "ub":
                ubs.append((int(tok[1]), float(tok[2])))
            else:
                raise SdpFormatError(f"line {lineno}: unknown record {tag!r}")
        except (IndexError, ValueError) as e:
            if isinstance(e, SdpFormatError):
                raise
            raise SdpFormatError(f"line {lineno}: malformed record {line!r}") from None
    if dims is None or n_free is None or n_rows is None:
        raise SdpFormatError("missing header (blocks/free/rows)")
    b = np.zeros(n_rows)
    for r, v in b_ent:
        b[r] = v

    def entries(lst, n):
        if not lst:
            return BlockEntries.empty()
        arr = np.array(lst, dtype=float)
        ii, jj = arr[:, 1].astype(np.int64), arr[:, 2].astype(np.int64)
        if np.any(ii > jj) or np.any(jj >= n):
            raise SdpFormatError("block entry outside the upper triangle")
        return BlockEntries(arr[:, 0].astype(np.int64), ii, jj, arr[:, 3])

    blocks = [entries(a_ent.get(k, []), d) for k, d in enumerate(dims)]
    c_blocks = [entries(cb_ent.get(k, []), d) for k, d in enumerate(dims)]
    fr = np.array([e[0] for e in f_ent], dtype=np.int64)
    fc = np.array([e[1] for e in f_ent], dtype=np.int64)
    fv = np.array([e[2] for e in f_ent], dtype=float)
    cf = np.zeros(n_free)
    for j, v in c_free:
        cf[j] = v
    lb = np.full(n_free, -np.inf)
    ub = np.full(n_free, np.inf)
    for j, v in lbs:
        lb[j] = v
    for j, v in ubs:
        ub[j] = v
    return SdpProblem(dims, n_free, b, blocks, fr, fc, fv, cf, c_blocks, lb, ub)


def canonical_text(p: SdpProblem) -> str:
    """Name-free serialization; equal strings mean identical problems up to naming."""
    return write_sdp(p)


def problem_hash(p: SdpProblem) -> str:
    return hashlib.sha256(canonical_text(p).encode()).hexdigest()

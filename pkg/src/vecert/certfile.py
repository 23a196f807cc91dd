"""Plain-text certificate files.

One record per line; ``#`` starts a comment::

    vecert-certificate 1
    kind VCC_safety
    k 2
    n 2
    degree 3
    lambda 1.0                          (scalar decay, scalar kinds only)
    matrix A 2 2 0.0 1.0 1.0 0.0        (name rows cols entries row-major)
    eta u1 0.001
    assignment u1 1
    gamma 1.0 1.0
    rho 1.0 1.0
    poly 1 - <polynomial>               (function index, automaton tag, text)
    gram <constraint label> <sha256 of the Gram blocks>
    note <free text>

Pair certificates (closure kinds) are polynomials over ``x1..xn, y1..yn``;
state certificates over ``x1..xn``. Automaton tags are ``-`` (none), a
state name, or ``n,p`` for a state pair. Numbers are written with
``repr`` so files round-trip exactly and reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .poly import Polynomial, StructureError
from .semialg import block_space
from .synth import KINDS, SpecError, VectorCertificate

MAGIC = "vecert-certificate"
VERSION = 1


class CertificateFormatError(ValueError):
    pass


def _num(v: float) -> str:
    v = float(v)
    return "0.0" if v == 0.0 else repr(v)


def _tag_text(tag) -> str:
    if tag is None:
        return "-"
    if isinstance(tag, tuple):
        return ",".join(tag)
    return str(tag)


def _tag_parse(text: str):
    if text == "-":
        return None
    if "," in text:
        return tuple(text.split(","))
    return text


def gram_hash(blocks) -> str:
    h = hashlib.sha256()
    for G in blocks:
        G = np.ascontiguousarray(np.asarray(G, dtype="<f8"))
        h.update(f"{G.shape[0]}x{G.shape[1]};".encode())
        h.update(G.tobytes())
    return h.hexdigest()


def dumps(cert: VectorCertificate) -> str:
    out = [f"{MAGIC} {VERSION}", f"kind {cert.kind}", f"k {cert.k}", f"n {cert.n}",
           f"degree {cert.degree}"]
    if cert.lam is not None:
        out.append(f"lambda {_num(cert.lam)}")
    for name in sorted(cert.matrices):
        M = np.asarray(cert.matrices[name], dtype=float)
        out.append(f"matrix {name} {M.shape[0]} {M.shape[1]} " + " ".join(_num(v) for v in M.ravel()))
    for lab in sorted(cert.eta):
        out.append(f"eta {lab} {_num(cert.eta[lab])}")
    for lab in sorted(cert.assignment):
        out.append(f"assignment {lab} {int(cert.assignment[lab])}")
    if cert.gamma:
        out.append("gamma " + " ".join(_num(v) for v in cert.gamma))
    if cert.rho:
        out.append("rho " + " ".join(_num(v) for v in cert.rho))
    for (i, tag), p in cert.polynomials.items():
        out.append(f"poly {i} {_tag_text(tag)} {p.to_text()}")
    for g in cert.grams:
        out.append(f"gram {g.label.replace(' ', '_')} {gram_hash(g.grams)}")
    if not cert.grams:
        # a certificate read from a file keeps only the hashes
        for lab, h in getattr(cert, "gram_hashes", {}).items():
            out.append(f"gram {lab} {h}")
    if cert.note:
        out.append("note " + cert.note.replace("\n", " "))
    return "\n".join(out) + "\n"


def loads(text: str) -> VectorCertificate:
    fields: dict = {"matrices": {}, "eta": {}, "assignment": {}, "polys": [], "gamma": (),
                    "rho": (), "lam": None, "note": "", "grams": {}}
    header = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip() if not raw.startswith("note ") else raw.strip()
        if not line:
            continue
        tag, _, rest = line.partition(" ")
        try:
            if tag == MAGIC:
                if int(rest) != VERSION:
                    raise CertificateFormatError(f"line {lineno}: unsupported version {rest}")
                header = True
            elif tag in ("kind",):
                fields["kind"] = rest.strip()
            elif tag in ("k", "n", "degree"):
                fields[tag] = int(rest)
            elif tag == "lambda":
                fields["lam"] = float(rest)
            elif tag == "matrix":
                tok = rest.split()
                r, c = int(tok[1]), int(tok[2])
                vals = [float(v) for v in tok[3:]]
                if len(vals) != r * c:
                    raise CertificateFormatError(f"line {lineno}: matrix {tok[0]} needs {r * c} entries")
                fields["matrices"][tok[0]] = np.array(vals).reshape(r, c)
            elif tag == "eta":
                lab, v = rest.split()
                fields["eta"][lab] = float(v)
            elif tag == "assignment":
                lab, v = rest.split()
                fields["assignment"][lab] = int(v)
            elif tag in ("gamma", "rho"):
                fields[tag] = tuple(float(v) for v in rest.split())
            elif tag == "poly":
                i, t, body = rest.split(" ", 2)
                fields["polys"].append((int(i), _tag_parse(t), body, lineno))
            elif tag == "gram":
                lab, h = rest.split()
                fields["grams"][lab] = h
            elif tag == "note":
                fields["note"] = rest
            else:
                raise CertificateFormatError(f"line {lineno}: unknown record {tag!r}")
        except (ValueError, IndexError) as e:
            if isinstance(e, CertificateFormatError):
                raise
            raise CertificateFormatError(f"line {lineno}: malformed {tag!r} record") from None
    if not header:
        raise CertificateFormatError(f"missing '{MAGIC} {VERSION}' header")
    for key in ("kind", "k", "n"):
        if key not in fields:
            raise CertificateFormatError(f"missing {key!r} record")
    kind = fields["kind"]
    if kind not in KINDS:
        raise CertificateFormatError(f"unknown certificate kind {kind!r}")
    pair = kind.startswith(("VCC", "CC"))
    space = block_space(fields["n"], 2 if pair else 1)
    polys = {}
    for i, t, body, lineno in fields["polys"]:
        try:
            polys[(i, t)] = Polynomial.parse(body, space)
        except (StructureError, ValueError) as e:
            raise CertificateFormatError(f"line {lineno}: {e}") from None
    try:
        cert = VectorCertificate(kind, fields["k"], fields["n"], polys, fields["matrices"],
                                 fields["eta"], fields["gamma"], fields["rho"],
                                 fields["assignment"], fields["lam"], fields.get("degree", 0),
                                 note=fields["note"])
    except SpecError as e:
        raise CertificateFormatError(str(e)) from None
    cert.gram_hashes = fields["grams"]
    return cert


def write(cert: VectorCertificate, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(cert))
    return path


def read(path: str | Path) -> VectorCertificate:
    return loads(Path(path).read_text())

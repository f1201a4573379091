"""Deterministic text/JSON rendering of forms."""
from __future__ import annotations

from . import monomial as mono
from .grammar import format_coeff
from .monomial import bits


def _term_sort_key(key):
    h, y, a, b, u = key
    return (h, mono.degree(y), y, a, b, u)


def term_record(key, coef, ring, n) -> dict:
    h, y, a, b, u = key
    rec = {"hbar_exp": h}
    rec["y"] = list(mono.unpack(y, 2 * n))
    if a:
        rec["theta"] = [i + 1 for i in bits(a)]
    rec["dx"] = [i + 1 for i in bits(b)]
    if u:
        rec["u_exp"] = u
    rec["coeff"] = format_coeff(coef, ring)
    return rec


def form_to_records(f) -> list:
    return [term_record(k, f.terms[k], f.ring, f.n) for k in sorted(f.terms, key=_term_sort_key)]


def form_to_text(f) -> str:
    if not f.terms:
        return "0"
    parts = []
    for k in sorted(f.terms, key=_term_sort_key):
        h, y, a, b, u = k
        fac = []
        if h:
            fac.append("hbar" if h == 1 else f"hbar^{h}")
        for i, e in enumerate(mono.unpack(y, 2 * f.n)):
            if e:
                fac.append(f"y{i + 1}" if e == 1 else f"y{i + 1}^{e}")
        fac += [f"th{i + 1}" for i in bits(a)]
        fac += [f"dx{i + 1}" for i in bits(b)]
        if u:
            fac.append(f"u^{u}")
        parts.append(f"({format_coeff(f.terms[k], f.ring)})" + ("*" + "*".join(fac) if fac else ""))
    return " + ".join(parts)

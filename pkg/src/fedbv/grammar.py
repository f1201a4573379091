"""Text grammar for polynomial and Fourier coefficients.

Polynomials::

    "3/2 x1^2 x2 - x3"      terms joined by + / -, a term is an optional
                            rational followed by factors xK or xK^E

Fourier elements on the torus::

    "e(1,0) - 1/2 tau^2 e(0,-1) + i"   factors e(m1,...,mN), tau^k and i

Whitespace is ignored.  Errors carry the character offset of the problem.
"""
from __future__ import annotations

from . import monomial as mono
from .rational import Q, ZERO, fmt_q


class GrammarError(ValueError):
    def __init__(self, msg: str, text: str, pos: int):
        self.msg = msg
        self.text = text
        self.pos = pos
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        self.line = line
        self.col = col
        super().__init__(f"{msg} at line {line}, column {col}")


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip(self):
        t = self.text
        while self.pos < len(t) and t[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch: str):
        if self.peek() != ch:
            self.fail(f"expected {ch!r}")
        self.pos += 1

    def integer(self, signed=False) -> int:
        self.skip()
        start = self.pos
        t = self.text
        if signed and self.pos < len(t) and t[self.pos] in "+-":
            self.pos += 1
        d0 = self.pos
        while self.pos < len(t) and t[self.pos].isdigit():
            self.pos += 1
        if self.pos == d0:
            self.pos = start
            self.fail("expected an integer")
        return int(t[start:self.pos])

    def fail(self, msg: str):
        raise GrammarError(msg, self.text, self.pos)


def _rational(sc: _Scanner):
    num = sc.integer()
    if sc.peek() == "/":
        sc.pos += 1
        p = sc.pos
        den = sc.integer()
        if den == 0:
            sc.pos = p
            sc.fail("zero denominator")
        return Q(num, den)
    return Q(num)


def _terms(sc: _Scanner, factor_fn, unit):
    """Generic ``[sign] term (sign term)*`` loop; factor_fn consumes one factor."""
    out = []
    sign = 1
    first = True
    while True:
        ch = sc.peek()
        if ch in "+-":
            sc.pos += 1
            sign = -1 if ch == "-" else 1
        elif not first:
            sc.fail("expected '+' or '-'")
        coef = Q(sign)
        key = unit()
        nfac = 0
        if sc.peek().isdigit():
            coef *= _rational(sc)
            nfac += 1
        while True:
            got = factor_fn(sc, key)
            if got is None:
                break
            key, mult = got
            coef *= mult
            nfac += 1
        if nfac == 0:
            sc.fail("empty term")
        out.append((key, coef))
        first = False
        sign = 1
        if sc.peek() == "":
            return out


def parse_poly(text: str, nvars: int, J: int | None = None) -> dict:
    """Parse a polynomial into a jet coefficient (packed-monomial dict)."""
    sc = _Scanner(text)
    if sc.peek() == "":
        sc.fail("empty expression")

    def factor(sc, key):
        if sc.peek() != "x":
            return None
        at = sc.pos
        sc.pos += 1
        idx = sc.integer()
        if not 1 <= idx <= nvars:
            sc.pos = at
            sc.fail(f"variable x{idx} out of range 1..{nvars}")
        e = 1
        if sc.peek() == "^":
            sc.pos += 1
            e = sc.integer()
            if e < 1:
                sc.fail("exponent must be >= 1")
        return key + e * mono.unit(idx - 1), 1

    out: dict = {}
    for key, c in _terms(sc, factor, lambda: 0):
        if J is not None and mono.degree(key) > J and c:
            raise GrammarError(f"term degree {mono.degree(key)} exceeds x_degree {J}", text, len(text))
        nv = out.get(key, ZERO) + c
        if nv:
            out[key] = nv
        else:
            out.pop(key, None)
    return out


def _mono_text(key: int, nvars: int) -> str:
    parts = []
    for i, e in enumerate(mono.unpack(key, nvars)):
        if e == 1:
            parts.append(f"x{i + 1}")
        elif e > 1:
            parts.append(f"x{i + 1}^{e}")
    return " ".join(parts)


def _join(items) -> str:
    """items: list of (q, body) with body '' for a bare constant."""
    if not items:
        return "0"
    out = []
    for n, (q, body) in enumerate(items):
        neg = q < 0
        a = -q if neg else q
        if body and a == 1:
            txt = body
        elif body:
            txt = f"{fmt_q(a)} {body}"
        else:
            txt = fmt_q(a)
        if n == 0:
            out.append(("-" if neg else "") + txt)
        else:
            out.append((" - " if neg else " + ") + txt)
    return "".join(out)


def format_poly(c: dict, nvars: int) -> str:
    keys = sorted(c, key=lambda k: (-mono.degree(k), tuple(-e for e in mono.unpack(k, nvars))))
    return _join([(c[k], _mono_text(k, nvars)) for k in keys])


def parse_fourier(text: str, nvars: int) -> dict:
    """Parse a Fourier-ring element; keys are (m, tau_exp, i_exp)."""
    sc = _Scanner(text)
    if sc.peek() == "":
        sc.fail("empty expression")
    zero_m = (0,) * nvars

    def factor(sc, key):
        m, t, s = key
        ch = sc.peek()
        rest = sc.text[sc.pos:]
        if rest.startswith("tau"):
            sc.pos += 3
            e = 1
            if sc.peek() == "^":
                sc.pos += 1
                e = sc.integer()
            return (m, t + e, s), 1
        if ch == "i":
            sc.pos += 1
            if s:
                return (m, t, 0), -1
            return (m, t, 1), 1
        if ch == "e":
            sc.pos += 1
            sc.take("(")
            at = sc.pos
            vals = [sc.integer(signed=True)]
            while sc.peek() == ",":
                sc.pos += 1
                vals.append(sc.integer(signed=True))
            if len(vals) != nvars:
                sc.pos = at
                sc.fail(f"frequency vector needs {nvars} entries, got {len(vals)}")
            sc.take(")")
            return (tuple(a + b for a, b in zip(m, vals)), t, s), 1
        return None

    out: dict = {}
    for key, c in _terms(sc, factor, lambda: (zero_m, 0, 0)):
        nv = out.get(key, ZERO) + c
        if nv:
            out[key] = nv
        else:
            out.pop(key, None)
    return out


def _fourier_body(key, nvars: int) -> str:
    m, t, s = key
    parts = []
    if t == 1:
        parts.append("tau")
    elif t > 1:
        parts.append(f"tau^{t}")
    if s:
        parts.append("i")
    if any(m):
        parts.append("e(" + ",".join(str(v) for v in m) + ")")
    return " ".join(parts)


def format_fourier(c: dict, nvars: int) -> str:
    keys = sorted(c, key=lambda k: (k[0], k[1], k[2]))
    return _join([(c[k], _fourier_body(k, nvars)) for k in keys])


def format_coeff(c: dict, ring) -> str:
    if ring.tag == "jet":
        return format_poly(c, ring.nvars)
    return format_fourier(c, ring.nvars)


def parse_coeff(text: str, ring) -> dict:
    if ring.tag == "jet":
        return ring.truncate(parse_poly(text, ring.nvars))
    return parse_fourier(text, ring.nvars)

"""Loading charts, tori and amplitude specs from JSON.

Errors are raised as :class:`InputError` with a line and column pointing
into the source text (JSON syntax errors, grammar errors inside coefficient
strings) or a JSON path (schema violations).
"""
from __future__ import annotations

import json
from importlib import resources

import jsonschema

from .circle import AmplitudeSpec
from .fedosov import Chart
from .forms import TruncationPolicy
from .grammar import GrammarError, parse_coeff
from .rings import FourierRing, JetRing


class InputError(ValueError):
    def __init__(self, msg: str, line: int | None = None, col: int | None = None, path: str | None = None):
        self.line, self.col, self.path = line, col, path
        where = []
        if path:
            where.append(f"at {path}")
        if line is not None:
            where.append(f"line {line}, column {col}")
        super().__init__(msg + (" (" + ", ".join(where) + ")" if where else ""))


def schema(name: str) -> dict:
    return json.loads(resources.files("fedbv").joinpath(f"schemas/{name}.schema.json").read_text())


def _line_col(text: str, pos: int):
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def parse_json(text: str, kind: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"malformed JSON: {e.msg}", e.lineno, e.colno) from None
    v = jsonschema.Draft202012Validator(schema(kind))
    errs = sorted(v.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        path = "$" + "".join(f"[{p!r}]" if isinstance(p, str) else f"[{p}]" for p in e.absolute_path)
        raise InputError(f"schema violation: {e.message}", path=path)
    return data


class _Coeffs:
    """Parses coefficient strings and maps grammar errors back to the file."""

    def __init__(self, text: str, ring):
        self.text = text
        self.ring = ring

    def __call__(self, value, path: str) -> dict:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if isinstance(value, float) and not value.is_integer():
                raise InputError("non-integral numbers must be given as \"p/q\" strings", path=path)
            value = str(int(value))
        try:
            return parse_coeff(value, self.ring)
        except GrammarError as e:
            lit = json.dumps(value)
            at = self.text.find(lit)
            if at < 0 or "\\" in lit:
                raise InputError(f"{e.msg} (offset {e.pos} in string)", path=path) from None
            line, col = _line_col(self.text, at + 1 + e.pos)
            raise InputError(e.msg, line, col, path) from None


def _index_key(key: str, N: int, path: str):
    parts = key.split(",") if "," in key else list(key)
    try:
        idx = tuple(int(p) - 1 for p in parts)
    except ValueError:
        raise InputError(f"bad index key {key!r}", path=path) from None
    if len(idx) != 3 or not all(0 <= i < N for i in idx):
        raise InputError(f"index key {key!r} needs three indices in 1..{N}", path=path)
    return idx


def _matrix(raw, parse, N, path):
    if len(raw) != N or any(len(r) != N for r in raw):
        raise InputError(f"matrix must be {N} x {N}", path=path)
    return [[parse(raw[i][j], f"{path}[{i}][{j}]") for j in range(N)] for i in range(N)]


def _policy(data) -> TruncationPolicy:
    t = data.get("truncation", {})
    try:
        return TruncationPolicy(weight=t.get("weight", 4), x_degree=t.get("x_degree", 0), hbar=t.get("hbar"))
    except ValueError as e:
        raise InputError(str(e), path="$['truncation']") from None


def chart_from_text(text: str, source: str | None = None) -> Chart:
    data = parse_json(text, "chart")
    n = data["n"]
    N = 2 * n
    pol = _policy(data)
    ring = FourierRing(N) if data.get("ring") == "fourier" else JetRing(N, pol.x_degree)
    parse = _Coeffs(text, ring)
    omega = _matrix(data["omega"], parse, N, "$['omega']")
    gamma = {}
    for key, val in data.get("gamma_lower", {}).items():
        path = f"$['gamma_lower'][{key!r}]"
        gamma[_index_key(key, N, path)] = parse(val, path)
    omega_k = [_matrix(m, parse, N, f"$['omega_k'][{i}]") for i, m in enumerate(data.get("omega_k", []))]
    try:
        return Chart(n, ring, omega, gamma, omega_k=omega_k, policy=pol, source=source)
    except (ZeroDivisionError, ValueError) as e:
        raise InputError(f"invalid chart: {e}") from None


def torus_from_text(text: str, source: str | None = None) -> Chart:
    return _torus(parse_json(text, "torus"), text, source)


def _torus(data, text, source):
    n = data["n"]
    N = 2 * n
    pol = _policy(data)
    ring = FourierRing(N)
    parse = _Coeffs(text, ring)
    omega = _matrix(data["omega"], parse, N, "$['omega']")
    omega_k = [_matrix(m, parse, N, f"$['omega_k'][{i}]") for i, m in enumerate(data.get("omega_k", []))]
    try:
        return Chart(n, ring, omega, {}, omega_k=omega_k, policy=pol, source=source)
    except (ZeroDivisionError, ValueError) as e:
        raise InputError(f"invalid torus: {e}") from None


def amplitude_spec_from_text(text: str) -> AmplitudeSpec:
    data = parse_json(text, "amplitude")
    try:
        return AmplitudeSpec(data["k"], data["edges"], data.get("dtheta_vertices"))
    except ValueError as e:
        raise InputError(str(e)) from None


def read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None

"""Command-line front end.

Exit codes: 0 success, 1 invalid chart (``validate`` only), 2 input error,
3 a residual check failed.  Output is JSON with exact "p/q" strings except
for ``wheel`` (one summary line) and ``heatkernel`` (floats).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

from . import __version__
from .circle import (
    AmplitudeSpec,
    DiagonalError,
    SeriesMismatch,
    amplitude,
    amplitude_with_reason,
    effective_propagator,
    heat_kernel,
    heat_kernel_fourier,
    heat_kernel_images,
    wheel_zeta,
)
from .fedosov import (
    FedosovError,
    InvalidChart,
    flatness_residual,
    function_form,
    solve_fedosov,
    star_functions,
    validate_chart,
)
from .forms import TruncationPolicy
from .grammar import GrammarError, format_coeff, parse_coeff
from .io import InputError, amplitude_spec_from_text, chart_from_text, read_text, torus_from_text
from .rational import fmt_q
from .serialize import form_to_records
from .transfer import GlobalSetup, gamma_infinity, index_check, qme_check, trace

EXIT_OK, EXIT_INVALID, EXIT_INPUT, EXIT_RESIDUAL = 0, 1, 2, 3


class _Result:
    def __init__(self, payload, code=EXIT_OK, text=None):
        self.payload = payload
        self.code = code
        self.text = text

    def render(self) -> str:
        if self.text is not None:
            return self.text + "\n"
        return json.dumps(self.payload, indent=2, sort_keys=False) + "\n"


def _laurent(series: dict, ring) -> list:
    return [{"hbar_exp": h, "value": format_coeff(v, ring)} for h, v in sorted(series.items())]


def _load_chart(path):
    return chart_from_text(read_text(path), source=path)


def _load_torus(path):
    return torus_from_text(read_text(path), source=path)


def _expr(text, ring, flag):
    try:
        return parse_coeff(text, ring)
    except GrammarError as e:
        raise InputError(f"{flag}: {e.msg}", e.line, e.col) from None


def _with_weight(c, weight):
    if weight is None:
        return c
    pol = c.policy
    return c.with_policy(TruncationPolicy(weight=weight, x_degree=pol.x_degree))


# -- subcommands ---------------------------------------------------------------------------------
def cmd_validate(args):
    c = _load_chart(args.chart)
    diag = validate_chart(c)
    return _Result({"valid": not diag, "diagnostics": diag}, EXIT_OK if not diag else EXIT_INVALID)


def _require_valid(c):
    diag = validate_chart(c)
    if diag:
        raise InputError("invalid chart: " + "; ".join(diag))


def cmd_fedosov(args):
    c = _with_weight(_load_chart(args.chart), args.weight)
    _require_valid(c)
    gamma = solve_fedosov(c)
    res = flatness_residual(gamma, c)
    out = {
        "n": c.n,
        "weight": c.policy.weight,
        "gamma": form_to_records(gamma),
        "residual_zero": not res,
        "max_weight_checked": c.policy.weight - 1,
    }
    return _Result(out, EXIT_OK if not res else EXIT_RESIDUAL)


def cmd_star(args):
    c = _load_chart(args.chart)
    if args.hbar_order is not None:
        H = args.hbar_order
        W = max(c.policy.weight, 2 * H + 2)
        c = c.with_policy(TruncationPolicy(weight=W, x_degree=c.policy.x_degree, hbar=H))
    _require_valid(c)
    fg = star_functions(_expr(args.f, c.ring, "--f"), _expr(args.g, c.ring, "--g"), c)
    series = {}
    for (h, y, th, dx, u), coef in fg.terms.items():
        series[h] = coef
    return _Result({"star": _laurent(series, c.ring), "hbar_order": c.policy.hbar})


def cmd_gamma_inf(args):
    c = _with_weight(_load_chart(args.chart), args.weight)
    _require_valid(c)
    gamma = solve_fedosov(c)
    gi = gamma_infinity(gamma, c, check=False)
    rep = qme_check(gi, c)
    out = {"gamma_inf": form_to_records(gi), **rep}
    return _Result(out, EXIT_OK if rep["qme_residual_zero"] else EXIT_RESIDUAL)


def cmd_amplitude(args):
    spec = amplitude_spec_from_text(read_text(args.spec))
    val, reason = amplitude_with_reason(spec)
    out = {"k": spec.k, "edges": [list(e) for e in spec.edges], "amplitude": fmt_q(val)}
    if reason:
        out["reason"] = reason
    return _Result(out)


def cmd_wheel(args):
    if args.k < 1:
        raise InputError("--k must be positive")
    a = amplitude(AmplitudeSpec.wheel(args.k))
    z = wheel_zeta(args.k)
    line = f"amplitude = {fmt_q(a)}, zeta_formula = {fmt_q(z)}, match = {'true' if a == z else 'false'}"
    return _Result(None, EXIT_OK if a == z else EXIT_RESIDUAL, text=line)


def cmd_trace(args):
    c = _load_torus(args.torus)
    _require_valid(c)
    setup = GlobalSetup(c)
    f = function_form(c, _expr(args.f, c.ring, "--f"), policy=setup.gamma.policy)
    return _Result({"trace": _laurent(trace(f, setup), c.ring)})


def cmd_index(args):
    c = _load_torus(args.torus)
    _require_valid(c)
    rep = index_check(GlobalSetup(c))
    out = {
        "trace_of_one": _laurent(rep.trace_of_one, c.ring),
        "exp_integral": _laurent(rep.exp_integral, c.ring),
        "sign": rep.sign,
        "max_hbar_exp": rep.precision,
        "match": rep.holds,
    }
    return _Result(out, EXIT_OK if rep.holds else EXIT_RESIDUAL)


def cmd_heatkernel(args):
    if args.t <= 0:
        raise InputError("--t must be positive")
    d = args.theta1 - args.theta2
    out = {
        "t": args.t,
        "images": heat_kernel_images(args.t, d),
        "fourier": heat_kernel_fourier(args.t, d),
    }
    try:
        out["kernel"] = heat_kernel(args.t, args.theta1, args.theta2)
    except SeriesMismatch as e:
        out["error"] = str(e)
        return _Result(out, EXIT_RESIDUAL)
    if args.epsilon is not None or args.L is not None:
        if args.epsilon is None or args.L is None:
            raise InputError("--epsilon and --L go together")
        if not 0 < args.epsilon < args.L:
            raise InputError("need 0 < epsilon < L")
        try:
            out["effective_propagator"] = effective_propagator(args.epsilon, args.L, args.theta1, args.theta2)
        except SeriesMismatch as e:
            out["error"] = str(e)
            return _Result(out, EXIT_RESIDUAL)
        frac = d - math.floor(d)
        out["sawtooth"] = frac - 0.5 if frac else None
    return _Result(out)


# -- parser ---------------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedbv", description="Exact Fedosov/BV computations and circle amplitudes.")
    p.add_argument("--version", action="version", version=f"fedbv {__version__}")
    p.add_argument("--output", "-o", help="write the result to this file instead of stdout")
    p.add_argument("--manifest", help="write a run manifest (JSON) to this file")
    p.add_argument("--threads", type=int, help="worker threads (overrides FEDBV_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a chart file")
    s.add_argument("chart")
    s.set_defaults(fn=cmd_validate, inputs=("chart",))

    s = sub.add_parser("fedosov", help="solve Fedosov's equation")
    s.add_argument("chart")
    s.add_argument("--weight", type=int)
    s.set_defaults(fn=cmd_fedosov, inputs=("chart",))

    s = sub.add_parser("star", help="star product of two functions")
    s.add_argument("chart")
    s.add_argument("--f", required=True)
    s.add_argument("--g", required=True)
    s.add_argument("--hbar-order", type=int, dest="hbar_order")
    s.set_defaults(fn=cmd_star, inputs=("chart",))

    s = sub.add_parser("gamma-inf", help="transfer gamma to the BV bundle and check the master equation")
    s.add_argument("chart")
    s.add_argument("--weight", type=int)
    s.set_defaults(fn=cmd_gamma_inf, inputs=("chart",))

    s = sub.add_parser("amplitude", help="exact configuration integral")
    s.add_argument("spec")
    s.set_defaults(fn=cmd_amplitude, inputs=("spec",))

    s = sub.add_parser("wheel", help="wheel amplitude against the Bernoulli formula")
    s.add_argument("--k", type=int, required=True)
    s.set_defaults(fn=cmd_wheel, inputs=())

    s = sub.add_parser("trace", help="trace of a Fourier function on a flat torus")
    s.add_argument("torus")
    s.add_argument("--f", required=True)
    s.set_defaults(fn=cmd_trace, inputs=("torus",))

    s = sub.add_parser("index", help="both sides of the index identity on a flat torus")
    s.add_argument("torus")
    s.set_defaults(fn=cmd_index, inputs=("torus",))

    s = sub.add_parser("heatkernel", help="heat kernel and effective propagator numerics")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--theta1", type=float, required=True)
    s.add_argument("--theta2", type=float, required=True)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--L", type=float)
    s.set_defaults(fn=cmd_heatkernel, inputs=())
    return p


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _manifest(args, output: str) -> dict:
    inputs = []
    for name in args.inputs:
        path = getattr(args, name)
        with open(path, "rb") as fh:
            inputs.append({"path": path, "sha256": _sha256(fh.read())})
    opts = {k: v for k, v in sorted(vars(args).items())
            if k not in ("fn", "inputs", "output", "manifest", "threads", "command") + tuple(args.inputs)}
    return {
        "tool": "fedbv",
        "version": __version__,
        "subcommand": args.command,
        "inputs": inputs,
        "options": opts,
        "output": args.output,
        "output_sha256": _sha256(output.encode()),
    }


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code not in (0, None) else EXIT_OK
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return EXIT_INPUT
        os.environ["FEDBV_THREADS"] = str(args.threads)
    try:
        result = args.fn(args)
    except (InputError, InvalidChart, DiagonalError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except FedosovError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RESIDUAL
    text = result.render()
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.manifest:
        with open(args.manifest, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(_manifest(args, text), indent=2) + "\n")
    return result.code


if __name__ == "__main__":
    sys.exit(main())

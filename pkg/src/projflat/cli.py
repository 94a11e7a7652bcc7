"""Command-line interface: ``projflat <command> [<action>] [options]``.

Results go to stdout (or ``--output``) as JSON (``schema: 1``) or CSV.
Diagnostics go to stderr as ``LEVEL key=value`` lines. Exit codes: 0 ok,
2 validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .curvature import (
    VARIANTS,
    CurvatureDomain,
    CurvatureModel,
    closed_form_extrema,
    extrema,
    variant_params,
)
from .errors import ProjflatError, ValidationError
from .gauge import canonical_gauge, default_t_max, solve_gauge_ivp, square_gauge
from .geodesic import (
    GaugedDelta,
    closed_geodesic_length,
    family_start,
    integrate_geodesic,
    length_L1,
    length_L2,
    length_square,
    series_L,
)
from .phi import MetricParams, algebraic_range, regularity_range, solve_phi, taylor_phi
from .sphere import NavigationBundle, SphereData

SCHEMA = 1
COMMANDS = {
    "phi": ("solve", "taylor", "regularity"),
    "gauge": ("canonical", "square", "ivp"),
    "length": ("compare",),
    "curvature": ("grid", "extrema", "table"),
    "geodesic": None,
    "verify": None,
}


# diagnostics

def _fmt_value(v):
    s = v if isinstance(v, str) else (f"{v:.17g}" if isinstance(v, float) else str(v))
    return json.dumps(s) if (not s or any(c in s for c in ' "=\n')) else s


def log(level: str, **fields):
    print(level + "".join(f" {k}={_fmt_value(v)}" for k, v in fields.items()), file=sys.stderr)


# output

def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    return x


def render_json(command: str, body: dict) -> str:
    doc = {"schema": SCHEMA, "command": command}
    doc.update(body)
    return json.dumps(_jsonable(doc), indent=2) + "\n"


def render_csv(columns, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join("%.17g" % float(v) for v in row) + "\n")
    return buf.getvalue()


# argument handling

def _add_common(p, params=True, sphere=False, variant=False):
    p.add_argument("--config", help="JSON file with option values (same names as the flags)")
    p.add_argument("--output", help="write the result here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), help="output format")
    if params:
        for name in ("k1", "k2", "k3", "epsilon"):
            p.add_argument(f"--{name}", type=float)
    if variant:
        p.add_argument("--variant", choices=sorted(VARIANTS), help="square-family shortcut (sets params, square gauge)")
    if sphere:
        p.add_argument("--mu", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--gauge", choices=("canonical", "square"),
                       help="gauge the delta value is measured in (required with --delta)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="projflat", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    phi = sub.add_parser("phi", help="the profile function phi")
    phi_sub = phi.add_subparsers(dest="action", required=True)
    p = phi_sub.add_parser("solve", help="tabulate phi, phi', phi''")
    _add_common(p)
    p.add_argument("--s-max", type=float)
    p.add_argument("--n", type=int, help="number of sample points")
    p = phi_sub.add_parser("taylor", help="Taylor coefficients through s^4")
    _add_common(p)
    p = phi_sub.add_parser("regularity", help="regular range of b^2 and b-hat")
    _add_common(p)

    gauge = sub.add_parser("gauge", help="(u, v, w) gauges")
    g_sub = gauge.add_subparsers(dest="action", required=True)
    for name in ("canonical", "square", "ivp"):
        p = g_sub.add_parser(name)
        _add_common(p, params=name != "square")
        p.add_argument("--t-max", type=float)
        p.add_argument("--n", type=int)
        if name == "square":
            p.add_argument("--sign", type=int, choices=(1, -1))
        if name == "ivp":
            for v in ("u0", "v0", "w0"):
                p.add_argument(f"--{v}", type=float)

    length = sub.add_parser("length", help="closed-geodesic lengths")
    l_sub = length.add_subparsers(dest="action", required=True)
    p = l_sub.add_parser("compare", help="quadrature, closed forms, series and the geodesic oracle")
    _add_common(p, sphere=True, variant=True)
    p.add_argument("--tol", type=float)
    p.add_argument("--no-geodesic", action="store_true", default=None, help="skip the integrated geodesic")

    curv = sub.add_parser("curvature", help="flag curvature")
    c_sub = curv.add_subparsers(dest="action", required=True)
    for name in ("grid", "extrema"):
        p = c_sub.add_parser(name)
        _add_common(p, sphere=True, variant=True)
        p.add_argument("--domain", choices=("D", "D_tilde"))
        p.add_argument("--n", type=int, help="grid points per side")
    p = c_sub.add_parser("table", help="closed-form extrema of the square variants")
    _add_common(p, params=False)
    p.add_argument("--mu", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--gauge", choices=("square",), default="square", help="the closed forms are stated in the square gauge")

    p = sub.add_parser("geodesic", help="trace a geodesic to CSV")
    _add_common(p, sphere=True, variant=True)
    p.add_argument("--dim", type=int, help="sphere dimension n")
    p.add_argument("--family", choices=("poles", "equator"))
    p.add_argument("--T", type=float, help="parameter length")
    p.add_argument("--metric", choices=("F", "h"))
    p.add_argument("--tol", type=float)
    p.add_argument("--closed", action="store_true", default=None, help="stop after one loop")

    p = sub.add_parser("verify", help="run the acceptance suite")
    _add_common(p, params=False)
    return ap


DEFAULTS = {
    "format": "json", "epsilon": 0.0, "n": 201, "mu": 1.0, "tol": 1e-12, "domain": "D",
    "dim": 2, "family": "poles", "metric": "F", "u0": 1.0, "w0": 1.0,
}
# options a config file may set but a flag would never spell this way
_CONFIG_ONLY = {"command"}


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    params = cfg.pop("params", None)
    if isinstance(params, dict):
        for k, v in params.items():
            cfg.setdefault(k, v)
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _argv_with_config_command(argv):
    """Let a config file supply the command when the argv gives none."""
    if any(a in COMMANDS for a in argv):
        return argv
    for i, a in enumerate(argv):
        path = a.split("=", 1)[1] if a.startswith("--config=") else (argv[i + 1] if a == "--config" and i + 1 < len(argv) else None)
        if path:
            cmd = _load_config(path).get("command")
            if isinstance(cmd, str):
                return cmd.split() + list(argv)
    return argv


def resolve(args) -> argparse.Namespace:
    """Merge flags over config over defaults."""
    cfg = _load_config(args.config) if args.config else {}
    known = set(vars(args)) | _CONFIG_ONLY
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ValidationError(f"unknown config keys for this command: {', '.join(unknown)}")
    for k, v in cfg.items():
        if k in vars(args) and getattr(args, k) is None:
            setattr(args, k, v)
    for k, v in DEFAULTS.items():
        if k in vars(args) and getattr(args, k) is None:
            setattr(args, k, v)
    if getattr(args, "delta", None) is not None and "gauge" in vars(args) and args.gauge is None:
        if getattr(args, "variant", None) is None:
            raise ValidationError("--gauge (canonical or square) is required whenever --delta is given")
    return args


def _params(args) -> MetricParams:
    if getattr(args, "variant", None):
        if args.gauge not in (None, "square"):
            raise ValidationError("square variants use the square gauge")
        args.gauge = "square"
        return variant_params(args.variant)
    missing = [k for k in ("k1", "k2", "k3") if getattr(args, k) is None]
    if missing:
        raise ValidationError(f"missing parameters: {', '.join(missing)}")
    return MetricParams(float(args.k1), float(args.k2), float(args.k3), float(args.epsilon))


def _params_dict(p: MetricParams):
    return {"k1": p.k1, "k2": p.k2, "k3": p.k3, "epsilon": p.epsilon}


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise ValidationError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")


# commands; each returns (body dict, csv columns, csv rows)

def cmd_phi(args):
    p = _params(args)
    if args.action == "taylor":
        return {"params": _params_dict(p), "coefficients": list(taylor_phi(p))}, ["power", "coefficient"], \
            list(enumerate(taylor_phi(p)))
    if args.action == "regularity":
        sup = regularity_range(p)
        body = {"params": _params_dict(p), "algebraic_range": algebraic_range(p),
                "regular_b_sq_sup": sup, "b_hat": math.sqrt(sup)}
        return body, ["algebraic_range", "regular_b_sq_sup", "b_hat"], [[body["algebraic_range"], sup, body["b_hat"]]]
    if args.s_max is None:
        sup = regularity_range(p)
        args.s_max = min(math.sqrt(sup) * 0.99, 1.0) if math.isfinite(sup) else 1.0
    sol = solve_phi(p, args.s_max)
    s = np.linspace(-args.s_max, args.s_max, args.n)
    f, df, ddf = sol.derivs(s)
    rows = np.column_stack([s, f, df, ddf])
    body = {"params": _params_dict(p), "s_max": args.s_max, "kind": sol.kind,
            "max_residual": float(np.max(np.abs(sol.residual(s)))),
            "samples": {"s": s, "phi": f, "dphi": df, "ddphi": ddf}}
    return body, ["s", "phi", "dphi", "ddphi"], rows


def cmd_gauge(args):
    if args.action == "square":
        _need(args, "sign")
        g = square_gauge(args.sign, args.t_max)
        p = g.params
    else:
        p = _params(args)
        t_max = args.t_max if args.t_max is not None else default_t_max(p)
        if args.action == "canonical":
            g = canonical_gauge(p, t_max)
        else:
            v0 = args.v0 if args.v0 is not None else p.k1 + p.k3
            g = solve_gauge_ivp(p, args.u0, v0, args.w0, t_max)
    B = np.linspace(0.0, g.t_max, args.n)
    u, v, w = g(B)
    rows = np.column_stack([B, u, v, w])
    body = {"params": _params_dict(p), "kind": g.kind, "t_max": g.t_max,
            "max_ode_residual": float(np.max(g.residuals(B))),
            "samples": {"B": B, "u": u, "v": v, "w": w, "norm_relation": g.norm_relation(B)}}
    return body, ["B", "u", "v", "w"], rows


def _sphere_for(args, n=2):
    _need(args, "mu", "delta")
    return SphereData.from_delta(args.mu, args.delta, n)


def cmd_length(args):
    p = _params(args)
    _need(args, "mu", "delta")
    d = GaugedDelta(args.delta, args.gauge)
    body = {"params": _params_dict(p), "mu": args.mu, "delta": args.delta, "gauge": args.gauge}
    if args.gauge == "canonical":
        L1, L2 = length_L1(p, args.mu, d, tol=args.tol), length_L2(p, args.mu, d)
        body.update(L1=L1, L2=L2, abs_L1_minus_L2=abs(L1 - L2), series=series_L(p, args.mu, d))
    else:
        sign = p.square_sign
        if sign is None:
            raise ValidationError("the square gauge needs params (+-2, 0, -+3)")
        body["closed_form"] = length_square(sign, args.mu, d)
    if not args.no_geodesic:
        bundle = NavigationBundle.build(_sphere_for(args), p, args.gauge)
        L, path = closed_geodesic_length(bundle, "poles", tol=args.tol)
        body["geodesic_oracle"] = L
        body["geodesic_charts"] = path.charts
    keys = [k for k in ("L1", "L2", "series", "closed_form", "geodesic_oracle") if k in body]
    return body, keys, [[body[k] for k in keys]]


def _curvature_model(args):
    p = _params(args)
    _need(args, "mu", "delta")
    return CurvatureModel.build(p, args.mu, args.delta, args.gauge)


def cmd_curvature(args):
    if args.action == "table":
        _need(args, "mu", "delta")
        rows, entries = [], []
        for variant in VARIANTS:
            try:
                cf = closed_form_extrema(variant, args.mu, args.delta)
            except ValidationError as exc:
                log("WARN", variant=variant, skipped=str(exc))
                continue
            entries.append({"variant": variant, "min": cf.min, "max": cf.max, "t_o": cf.t_o, "t1": cf.t1})
            rows.append([list(VARIANTS).index(variant), cf.min, cf.max, cf.t_o, cf.t1 if cf.t1 is not None else math.nan])
        body = {"mu": args.mu, "delta": args.delta, "gauge": "square", "variants": entries}
        return body, ["variant_index", "min", "max", "t_o", "t1"], rows
    model = _curvature_model(args)
    domain = CurvatureDomain(args.domain, model)
    head = {"params": _params_dict(model.params), "mu": model.mu, "delta": model.delta,
            "gauge": args.gauge, "domain": args.domain, "t_max": domain.t_hi}
    if args.action == "grid":
        S, T, B = domain.grid(args.n)
        R = domain.evaluate(S, T, B)
        rows = np.column_stack([S.ravel(), T.ravel(), R.ravel()])
        head["samples"] = {"s": S.ravel(), "t": T.ravel(), "R": R.ravel()}
        return head, ["s", "t", "R"], rows
    rep = extrema(domain)
    head.update(rep.as_dict())
    if getattr(args, "variant", None):
        try:
            cf = closed_form_extrema(args.variant, model.mu, model.delta)
            head["closed_form"] = {"min": cf.min, "max": cf.max, "t_o": cf.t_o, "t1": cf.t1}
        except ValidationError as exc:
            log("WARN", closed_form="unavailable", reason=str(exc))
    return head, ["min", "max", "argmin_s", "argmin_t", "argmax_s", "argmax_t"], \
        [[rep.min, rep.max, *rep.argmin, *rep.argmax]]


def cmd_geodesic(args):
    p = _params(args)
    sphere = _sphere_for(args, args.dim)
    bundle = NavigationBundle.build(sphere, p, args.gauge)
    X, V = family_start(sphere, args.family)
    local = sphere.recentered(X)
    x0, y0 = local.from_ambient(X, V)
    T = args.T if args.T is not None else 2.0 * math.pi / math.sqrt(sphere.mu) * 1.5
    target = bundle.with_sphere(local) if args.metric == "F" else local
    path = integrate_geodesic(x0, y0, T, target, args.metric, args.tol, stop_when_closed=bool(args.closed))
    n1 = sphere.n + 1
    cols = ["t"] + [f"X{i}" for i in range(n1)] + [f"V{i}" for i in range(n1)] + ["F_length"]
    rows = np.column_stack([path.t, path.X, path.V, path.f_length])
    body = {"params": _params_dict(p), "mu": sphere.mu, "delta": sphere.delta(), "gauge": args.gauge,
            "family": args.family, "metric": args.metric, "closed_at": path.closed_at,
            "length": path.length, "charts": path.charts,
            "samples": {c: rows[:, i] for i, c in enumerate(cols)}}
    return body, cols, rows


def cmd_verify(args):
    from .verify import run_all

    results = run_all()
    width = max(len(r.name) for _, r in results)
    lines = [f"{i:>2}  {'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  value={r.value:.3e}  tol={r.tol:.1e}  {r.detail}"
             for i, r in results]
    body = {"passed": all(r.passed for _, r in results),
            "checks": [{"id": i, "name": r.name, "passed": r.passed, "value": r.value, "tol": r.tol,
                        "detail": r.detail} for i, r in results]}
    return body, ["id", "passed", "value", "tol"], [[i, float(r.passed), r.value, r.tol] for i, r in results], lines


HANDLERS = {
    "phi": cmd_phi, "gauge": cmd_gauge, "length": cmd_length,
    "curvature": cmd_curvature, "geodesic": cmd_geodesic, "verify": cmd_verify,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _argv_with_config_command(argv)
        args = build_parser().parse_args(argv)
        args = resolve(args)
        label = args.command + (f" {args.action}" if getattr(args, "action", None) else "")
        out = HANDLERS[args.command](args)
        body, columns, rows = out[:3]
        table = out[3] if len(out) > 3 else None
        if args.format == "csv":
            text = render_csv(columns, rows)
        elif table is not None and args.output is None:
            text = "\n".join(table) + "\n"
        else:
            text = render_json(label, body)
        if args.output:
            with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text if table is None or args.format == "csv" else render_json(label, body))
            log("INFO", command=label, wrote=args.output)
            if table is not None:
                sys.stdout.write("\n".join(table) + "\n")
        else:
            sys.stdout.write(text)
        if args.command == "verify" and not body["passed"]:
            log("ERROR", command=label, failed=sum(not c["passed"] for c in body["checks"]))
            return 3
        return 0
    except ProjflatError as exc:
        log("ERROR", type=type(exc).__name__, message=str(exc))
        return exc.exit_code
    except SystemExit as exc:  # argparse usage errors
        return 2 if exc.code not in (0, None) else 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

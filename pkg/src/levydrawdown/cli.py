"""Command-line front end: scale tables, identity evaluation, MC verification,
and the consistency report.

Exit codes: 0 success, 1 numerical-accuracy failure, 2 input validation,
3 internal error.  Errors are emitted as a JSON object on stderr.
"""
from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import identities as ident
from . import mc
from .drawdown import DrawdownFunction
from .errors import (
    DrawdownDegenerateError,
    InsufficientEventsError,
    InversionAccuracyError,
    IterationError,
    UnsupportedRegimeError,
)
from .models import LevyModel
from .report import run_battery
from .scale import scale_function

EXIT_ACCURACY = 1
EXIT_VALIDATION = 2
EXIT_INTERNAL = 3


def _fail(code: int, kind: str, message: str):
    sys.stderr.write(json.dumps(
        {"error": {"code": code, "type": kind, "message": message}},
        sort_keys=True) + "\n")
    sys.exit(code)


def _guard(fn):
    def wrapped(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DrawdownDegenerateError,) as exc:
            _fail(EXIT_VALIDATION, "drawdown-degenerate", str(exc))
        except (ValueError, KeyError, json.JSONDecodeError, FileNotFoundError,
                UnsupportedRegimeError) as exc:
            _fail(EXIT_VALIDATION, type(exc).__name__, str(exc))
        except (InversionAccuracyError, InsufficientEventsError,
                IterationError, ArithmeticError) as exc:
            _fail(EXIT_ACCURACY, type(exc).__name__, str(exc))
        except click.exceptions.Exit:
            raise
        except Exception as exc:  # pragma: no cover - defensive
            _fail(EXIT_INTERNAL, type(exc).__name__, str(exc))
    wrapped.__name__ = fn.__name__
    wrapped.__doc__ = fn.__doc__
    return wrapped


def _load_model(path: str) -> LevyModel:
    with open(path) as fh:
        return LevyModel.from_dict(json.load(fh))


def _load_xi(spec: str) -> DrawdownFunction:
    """Accept inline JSON ('{...}') or a path to a JSON file."""
    text = spec.strip()
    if not text.startswith("{"):
        with open(text) as fh:
            text = fh.read()
    return DrawdownFunction.from_dict(json.loads(text))


def _write(out, text: str):
    if out is None or out == "-":
        click.echo(text, nl=False)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _csv(header: list[str], rows) -> str:
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        text = str(v)
        if any(ch in text for ch in ',"\n'):
            text = '"' + text.replace('"', '""') + '"'
        return text

    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _default_workers() -> int:
    return int(os.environ.get("LEVYDD_WORKERS", "1"))


@click.group()
def main():
    """Drawdown exit identities for spectrally negative Levy processes."""


# ---------------------------------------------------------------------------
@main.group()
def scale():
    """Scale-function tables."""


@scale.command("eval")
@click.option("--model", "model_path", required=True, type=str)
@click.option("--q", required=True, type=float)
@click.option("--x-max", default=5.0, show_default=True, type=float)
@click.option("--points", default=101, show_default=True, type=int)
@click.option("--method", default="auto", show_default=True,
              type=click.Choice(["auto", "closed_form", "inversion"]))
@click.option("--out", default="-", show_default=True)
@_guard
def scale_eval(model_path, q, x_max, points, method, out):
    """Dump (x, W, W', W'', Z) as CSV on a geometric grid of (0, x_max]."""
    model = _load_model(model_path)
    sf = scale_function(model, q, method=method)
    xs = np.geomspace(x_max * 1e-3, x_max, points)
    rows = []
    gaussian = model.sigma > 0.0
    for x in xs:
        w = float(sf.w(x))
        wp = float(sf.w_prime(x))
        wpp = float(sf.w_second(x)) if gaussian else float("nan")
        z = float(sf.z(x))
        est = getattr(sf, "last_error_estimate", 0.0)
        rows.append([float(x), w, wp, wpp, z, float(est)])
    _write(out, _csv(["x", "w", "w_prime", "w_second", "z", "error_estimate"], rows))


# ---------------------------------------------------------------------------
@main.group()
def identity():
    """Drawdown exit identity evaluation."""


@identity.command("eval")
@click.option("--model", "model_path", required=True, type=str)
@click.option("--xi", "xi_spec", required=True, type=str,
              help="inline JSON or a path to a JSON file")
@click.option("--which", required=True,
              type=click.Choice(["up_exit", "triple", "potential", "creep", "hit"]))
@click.option("--x", required=True, type=float)
@click.option("--b", required=True, type=float)
@click.option("--q", type=float, default=None)
@click.option("--u", type=float, default=None)
@click.option("--v", type=float, default=0.0, show_default=True)
@click.option("--r", type=float, default=0.0, show_default=True)
@click.option("--y", type=float, default=None, help="evaluation point (potential)")
@click.option("--y-grid", type=str, default=None,
              help="lo,hi,n for a CSV density grid (potential)")
@click.option("--c", type=float, default=None, help="lower barrier (hit)")
@click.option("--method", default="auto", show_default=True,
              type=click.Choice(["auto", "closed_form", "inversion"]))
@click.option("--tol", default=ident.DEFAULT_TOL, show_default=True, type=float)
@click.option("--format", "fmt", default="json", show_default=True,
              type=click.Choice(["json", "csv"]))
@click.option("--out", default="-", show_default=True)
@_guard
def identity_eval(model_path, xi_spec, which, x, b, q, u, v, r, y, y_grid, c,
                  method, tol, fmt, out):
    """Evaluate one identity, emitting {value, error_estimate} (or a CSV grid)."""
    model = _load_model(model_path)
    xi = _load_xi(xi_spec)
    query = ident.ExitQuery(model, xi, x, b, scale_method=method, tol=tol)

    if which == "potential" and y_grid is not None:
        lo, hi, n = y_grid.split(",")
        ys = np.linspace(float(lo), float(hi), int(n))
        if q is None:
            raise ValueError("--q is required for potential")
        vals, errs = ident.potential_density_grid(query, q, ys)
        rows = [[float(yy), float(vv), float(ee)] for yy, vv, ee in zip(ys, vals, errs)]
        _write(out, _csv(["y", "density", "error_estimate"], rows))
        return

    if which == "up_exit":
        if q is None:
            raise ValueError("--q is required for up_exit")
        res = ident.up_exit_before_drawdown(query, q)
    elif which == "triple":
        if u is None:
            u = q
        if u is None:
            raise ValueError("--u (or --q) is required for triple")
        res = ident.drawdown_triple_transform(query, u, v, r)
    elif which == "potential":
        if q is None or y is None:
            raise ValueError("--q and --y are required for potential")
        res = ident.potential_density(query, q, y)
    elif which == "creep":
        if q is None:
            raise ValueError("--q is required for creep")
        res = ident.creeping_transform(query, q)
    else:  # hit
        if q is None or c is None:
            raise ValueError("--q and --c are required for hit")
        res = ident.hitting_transform(query, q, c)

    payload = {"which": which, "value": res.value,
               "error_estimate": res.abs_error_estimate}
    if fmt == "json":
        _write(out, _json_text(payload))
    else:
        _write(out, _csv(["which", "value", "error_estimate"],
                         [[which, res.value, res.abs_error_estimate]]))


# ---------------------------------------------------------------------------
@main.group(name="mc")
def mc_group():
    """Monte Carlo verification."""


@mc_group.command("verify")
@click.option("--model", "model_path", required=True, type=str)
@click.option("--xi", "xi_spec", required=True, type=str)
@click.option("--x", required=True, type=float)
@click.option("--b", required=True, type=float)
@click.option("--q", required=True, type=float)
@click.option("--paths", default=50000, show_default=True, type=int)
@click.option("--dt", default=1e-3, show_default=True, type=float)
@click.option("--seed", required=True, type=int)
@click.option("--which", default="up_exit", show_default=True,
              type=click.Choice(["up_exit", "drawdown", "creep"]))
@click.option("--workers", default=None, type=int,
              help="defaults to $LEVYDD_WORKERS or 1")
@click.option("--out", default="-", show_default=True)
@_guard
def mc_verify(model_path, xi_spec, x, b, q, paths, dt, seed, which, workers, out):
    """Simulate across dt refinement levels and compare with the formula value."""
    if q <= 0.0:
        raise ValueError("mc verify requires q > 0")
    model = _load_model(model_path)
    xi = _load_xi(xi_spec)
    workers = _default_workers() if workers is None else workers
    config = mc.SimConfig(dt=dt, n_paths=paths, seed=seed,
                          horizon=mc.default_horizon(q, paths), workers=workers)
    query = ident.ExitQuery(model, xi, x, b)

    if which == "up_exit":
        formula = ident.up_exit_before_drawdown(query, q).value
        estimator = lambda ens: mc.estimate_transform(ens, "up_exit", u=q)
    elif which == "drawdown":
        formula = ident.drawdown_triple_transform(query, q).value
        estimator = lambda ens: mc.estimate_transform(ens, "drawdown", u=q)
    else:
        formula = ident.creeping_transform(query, q).value
        estimator = lambda ens: mc.creep_fraction(ens, q)

    means, ses, dts, (value, se) = mc.run_levels(model, xi, x, b, config, estimator)
    report = {
        "which": which,
        "formula_value": formula,
        "dt_levels": dts,
        "level_means": means,
        "level_ses": ses,
        "mc_mean": means[-1],
        "mc_se": ses[-1],
        "extrapolated": {"value": value, "se": se},
        "z_score": (value - formula) / se,
        "paths": paths,
        "seed": seed,
    }
    _write(out, _json_text(report))


# ---------------------------------------------------------------------------
@main.command("compare-report")
@click.option("--seed", default=12345, show_default=True, type=int)
@click.option("--with-mc/--no-mc", default=True, show_default=True)
@click.option("--paths", default=20000, show_default=True, type=int)
@click.option("--workers", default=None, type=int)
@click.option("--out", default="-", show_default=True)
@_guard
def compare_report(seed, with_mc, paths, workers, out):
    """Run the reduction / closed-form / MC consistency battery."""
    workers = _default_workers() if workers is None else workers
    rows, all_pass = run_battery(seed=seed, with_mc=with_mc, paths=paths,
                                 workers=workers)
    header = ["check", "config", "value", "reference", "abs_diff",
              "tolerance", "status"]
    table = [[r[k] for k in header] for r in rows]
    _write(out, _csv(header, table))
    n_fail = sum(r["status"] != "pass" for r in rows)
    click.echo(f"# {len(rows) - n_fail}/{len(rows)} checks passed", err=True)
    if not all_pass:
        sys.exit(EXIT_ACCURACY)


if __name__ == "__main__":
    main()

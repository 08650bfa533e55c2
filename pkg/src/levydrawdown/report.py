"""Consistency battery behind the ``compare-report`` command.

Cross-checks the three routes to every identity family: general-boundary
quadrature, closed forms, and (optionally) the Monte Carlo oracle.  Each row
records one comparison with its tolerance and pass/fail status.
"""
from __future__ import annotations

from . import identities as ident
from . import mc
from .drawdown import DrawdownFunction
from .models import JumpSpec, LevyModel
from .scale import ClosedFormScale, InversionScale

BATTERY_MODELS = {
    "bm": LevyModel(mu=1.0, sigma=1.0),
    "cpp": LevyModel(mu=2.0, sigma=0.0, jumps=JumpSpec.exponential(1.0, 1.0)),
    "mix": LevyModel(mu=0.5, sigma=0.8,
                     jumps=JumpSpec.mixed(1.2, [(0.4, 1.0), (0.6, 2.5)])),
}


def _row(check, config, got, want, tol):
    got, want = float(got), float(want)
    diff = abs(got - want)
    lim = tol * max(abs(want), 1e-12)
    return {
        "check": check,
        "config": config,
        "value": got,
        "reference": want,
        "abs_diff": diff,
        "tolerance": tol,
        "status": "pass" if diff <= lim else "FAIL",
    }


def _scale_rows(rows):
    for name in ("bm", "cpp"):
        model = BATTERY_MODELS[name]
        for q in (0.0, 1.0):
            cf = ClosedFormScale(model, q, validate=False)
            inv = InversionScale(model, q)
            for x in (0.25, 1.0, 3.0):
                rows.append(_row("scale/closed-vs-inversion",
                                 f"{name} q={q} x={x}", cf.w(x), inv.w(x), 1e-8))


def _reduction_rows(rows):
    grid = [(0.5, 2.0, 1.0), (0.2, 1.5, 0.5)]
    for name, model in BATTERY_MODELS.items():
        for x, b, q in grid:
            c = -0.8
            xi = DrawdownFunction.constant(c)
            query = ident.ExitQuery(model, xi, x, b)
            rows.append(_row("reduce/up-exit", f"{name} x={x} b={b} q={q}",
                             ident.up_exit_before_drawdown(query, q).value,
                             ident.classical_up_exit(model, q, x, c, b), 1e-8))
            rows.append(_row("reduce/drawdown", f"{name} x={x} b={b} q={q}",
                             ident.drawdown_triple_transform(query, q).value,
                             ident.classical_down_exit_transform(model, q, 0.0, x, c, b),
                             1e-8))
            if model.sigma > 0.0:
                rows.append(_row("reduce/creeping", f"{name} x={x} b={b} q={q}",
                                 ident.creeping_transform(query, q).value,
                                 ident.classical_creeping(model, q, x, c, b), 1e-8))
            y = 0.5 * (x + b) - 0.4
            rows.append(_row("reduce/potential", f"{name} x={x} b={b} q={q} y={y}",
                             ident.potential_density(query, q, y).value,
                             float(ident.classical_killed_potential_density(
                                 model, q, x, c, b, y)), 1e-8))
            a, c2 = x - 0.3, -2.0
            xi_a = DrawdownFunction.constant(a)
            query_a = ident.ExitQuery(model, xi_a, x, b)
            rows.append(_row("reduce/hitting", f"{name} x={x} b={b} q={q} a={a}",
                             ident.hitting_transform(query_a, q, c2).value,
                             ident.classical_hitting(model, q, x, a, c2, b), 1e-8))


def _linear_rows(rows):
    for name, model in BATTERY_MODELS.items():
        for slope in (-0.5, 0.3, 0.7):
            d, b, q = 1.0, 2.0, 1.0
            xi = DrawdownFunction.linear(slope, d)
            query = ident.ExitQuery(model, xi, 0.0, b)
            rows.append(_row("linear/up-exit", f"{name} slope={slope}",
                             ident.up_exit_before_drawdown(query, q).value,
                             ident.linear_up_exit(model, slope, d, b, q), 1e-7))
            rows.append(_row("linear/drawdown", f"{name} slope={slope}",
                             ident.drawdown_triple_transform(query, q, 0.3).value,
                             ident.linear_drawdown_transform(model, slope, d, b, q, 0.3),
                             1e-7))
            if model.sigma > 0.0:
                rows.append(_row("linear/creeping", f"{name} slope={slope}",
                                 ident.creeping_transform(query, q).value,
                                 ident.linear_creeping(model, slope, d, b, q), 1e-7))


def _reflected_rows(rows):
    for name, model in BATTERY_MODELS.items():
        d, b, q = 1.0, 1.5, 1.0
        xi = DrawdownFunction.linear(1.0, d)
        query = ident.ExitQuery(model, xi, 0.0, b)
        rows.append(_row("reflected/up-exit", name,
                         ident.up_exit_before_drawdown(query, q).value,
                         ident.reflected_up_exit(model, d, b, q), 1e-7))
        rows.append(_row("reflected/drawdown", name,
                         ident.drawdown_triple_transform(query, q, 0.2, r=-0.1).value,
                         ident.reflected_drawdown_transform(model, d, b, q, 0.2, -0.1),
                         1e-7))
        if model.sigma > 0.0:
            rows.append(_row("reflected/creeping", name,
                             ident.creeping_transform(query, q).value,
                             ident.reflected_creeping(model, d, b, q), 1e-7))


def _mass_rows(rows):
    configs = [
        ("constant", DrawdownFunction.constant(-0.8), 0.5, 2.0),
        ("linear", DrawdownFunction.linear(0.5, 1.0), 0.0, 2.0),
        ("reflected", DrawdownFunction.linear(1.0, 1.0), 0.0, 1.5),
    ]
    for name, model in BATTERY_MODELS.items():
        for label, xi, x, b in configs:
            query = ident.ExitQuery(model, xi, x, b)
            bal = ident.potential_mass_check(query, 1.0)
            rows.append(_row("mass-balance", f"{name} {label}",
                             bal.mass_side, bal.transform_side, 1e-6))


def _mc_rows(rows, seed, paths, workers):
    model = BATTERY_MODELS["bm"]
    xi = DrawdownFunction.linear(0.5, 1.0)
    x, b, q = 0.0, 1.5, 1.0
    config = mc.SimConfig(dt=2e-3, n_paths=paths, seed=seed,
                          horizon=mc.default_horizon(q, paths), workers=workers)
    query = ident.ExitQuery(model, xi, x, b)
    formula = ident.up_exit_before_drawdown(query, q).value
    means, ses, dts, (value, se) = mc.run_levels(
        model, xi, x, b, config,
        lambda ens: mc.estimate_transform(ens, "up_exit", u=q))
    z = (value - formula) / se
    rows.append({
        "check": "mc/up-exit-z",
        "config": f"bm linear paths={paths}",
        "value": value,
        "reference": formula,
        "abs_diff": abs(z),
        "tolerance": 3.5,
        "status": "pass" if abs(z) <= 3.5 else "FAIL",
    })


def run_battery(seed: int = 12345, with_mc: bool = True, paths: int = 20000,
                workers: int = 1):
    """Run the full consistency battery; returns (rows, all_pass)."""
    rows: list[dict] = []
    _scale_rows(rows)
    _reduction_rows(rows)
    _linear_rows(rows)
    _reflected_rows(rows)
    _mass_rows(rows)
    if with_mc:
        _mc_rows(rows, seed, paths, workers)
    all_pass = all(r["status"] == "pass" for r in rows)
    return rows, all_pass

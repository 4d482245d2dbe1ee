"""Command-line experiment runner: ``d2dgame solve | compare | zipf-sweep``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .model import ConfigError, EquilibriumResult, SolverParams, config_from_dict
from .payoff import bs_cost, ut_utilities
from .stackelberg import bs_optimize, solve_at, verify_se
from .workload import SCHEMES, baseline_cache, default_instance_doc

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_VERIFY = 0, 1, 2, 3

SWEEP_COLUMNS = ("r", "total_cost", "serving_cost", "reward_cost", "mean_utility", "min_utility", "max_utility")

log = logging.getLogger("d2dgame")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _load_doc(path: str | None) -> dict:
    if path is None:
        return default_instance_doc()
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


def _apply_overrides(doc: dict, alpha: float | None = None, seed: int | None = None, warm: bool | None = None) -> dict:
    doc = json.loads(json.dumps(doc))
    if alpha is not None or seed is not None:
        if "zipf" not in doc:
            if alpha is not None:
                raise ConfigError("--alpha needs a config with a zipf workload, not explicit preferences")
        else:
            if alpha is not None:
                doc["zipf"]["alpha"] = alpha
            if seed is not None:
                doc["zipf"]["permute_seed"] = seed
    solver = dict(doc.get("solver", {}))
    if seed is not None:
        solver["rng_seed"] = seed
    if warm is not None:
        solver["warm_start"] = warm
    doc["solver"] = solver
    return doc


def _setup(args, alpha=None, seed=None):
    doc = _apply_overrides(_load_doc(args.config), alpha=alpha, seed=seed, warm=args.warm)
    cfg, prefs, params = config_from_dict(doc)
    return doc, cfg, prefs, params


def _run_sc(cfg, prefs, params: SolverParams, r_fixed: float | None) -> EquilibriumResult:
    if r_fixed is not None:
        if r_fixed < 0:
            raise ConfigError("--r-fixed must be >= 0")
        return solve_at(r_fixed, cfg, prefs, params)
    return bs_optimize(cfg, prefs, params)


def _all_converged(result: EquilibriumResult) -> bool:
    return all(p.get("converged", True) for p in result.sweep_trace)


def _write_solve(out: Path, result: EquilibriumResult, doc: dict, extra: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    body = result.to_dict()
    body["config"] = doc
    if extra:
        body.update(extra)
    (out / "equilibrium.json").write_text(json.dumps(body, indent=1), encoding="utf-8")
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, ([p[c] for c in SWEEP_COLUMNS] for p in result.sweep_trace))


def _verify(result, cfg, prefs, params, grid_step: float) -> tuple[bool, dict]:
    rep = verify_se(result, cfg, prefs, params, grid_step=grid_step)
    print(rep.describe())
    return rep.ok, {
        "verification": {
            "ok": rep.ok,
            "leader_ok": rep.leader_ok,
            "leader_margin": rep.leader_margin,
            "fixed_x_margin": rep.fixed_x_margin,
            "nash_ok": rep.nash.ok,
            "nash_worst_ut": rep.nash.worst_ut,
            "nash_margin": rep.nash.margin,
            "grid_step": grid_step,
        }
    }


def _status(converged: bool, verified: bool) -> int:
    if not converged:
        return EXIT_NONCONV
    if not verified:
        return EXIT_VERIFY
    return EXIT_OK


def cmd_solve(args) -> int:
    doc, cfg, prefs, params = _setup(args, alpha=args.alpha, seed=args.seed)
    result = _run_sc(cfg, prefs, params, args.r_fixed)
    converged = _all_converged(result)
    verified, extra = (True, None)
    if args.verify:
        verified, extra = _verify(result, cfg, prefs, params, args.grid_step)
    _write_solve(Path(args.out_dir), result, doc, extra)
    print(
        f"r*={fmt(result.reward)} total={fmt(result.bs_total_cost)} serving={fmt(result.bs_serving_cost)} "
        f"reward={fmt(result.bs_reward_cost)} points={len(result.sweep_trace)} converged={converged}"
    )
    return _status(converged, verified)


def _schemes(arg: str | None) -> list[str]:
    if not arg:
        return list(SCHEMES)
    names = [s.strip().upper() for s in arg.split(",") if s.strip()]
    bad = [s for s in names if s not in SCHEMES and s != "SC"]
    if bad:
        raise ConfigError(f"unknown scheme(s) {bad}; expected any of {SCHEMES}")
    return [s for s in names if s != "SC"]


def scheme_rows(result: EquilibriumResult, cfg, prefs, schemes, seed: int) -> list[tuple[str, float, np.ndarray]]:
    """(scheme, BS serving cost, per-UT utility) for SC and each baseline at r = 0."""
    rows = [("SC", result.bs_serving_cost, np.asarray(result.ut_utilities))]
    for s in schemes:
        x = baseline_cache(s, cfg, prefs, seed)
        rows.append((s, bs_cost(x, 0.0, cfg, prefs).serving_cost, ut_utilities(x, 0.0, cfg, prefs)))
    return rows


def cmd_compare(args) -> int:
    doc, cfg, prefs, params = _setup(args, alpha=args.alpha, seed=args.seed)
    schemes = _schemes(args.scheme)
    result = _run_sc(cfg, prefs, params, args.r_fixed)
    converged = _all_converged(result)
    verified, extra = (True, None)
    if args.verify:
        verified, extra = _verify(result, cfg, prefs, params, args.grid_step)
    out = Path(args.out_dir)
    _write_solve(out, result, doc, extra)
    rows = scheme_rows(result, cfg, prefs, schemes, params.rng_seed)
    header = ["scheme", "bs_serving_cost", "mean_ut_cost", "min_ut_cost", "max_ut_cost"]
    header += [f"ut_cost_{i + 1}" for i in range(cfg.n_uts)]
    table = []
    for name, serving, u in rows:
        cost = -u
        table.append([name, serving, cost.mean(), cost.min(), cost.max(), *cost])
        print(f"{name:4s} serving={fmt(serving)} mean_ut_cost={fmt(cost.mean())}")
    write_csv(out / "compare.csv", header, table)
    return _status(converged, verified)


def parse_alphas(text: str) -> list[float]:
    """``0.4:0.1:1.5`` (inclusive range) or a comma list."""
    if ":" in text:
        lo, step, hi = (float(t) for t in text.split(":"))
        if step <= 0:
            raise ConfigError("alpha range step must be positive")
        n = int(np.floor((hi - lo) / step + 1e-9))
        return [round(lo + k * step, 10) for k in range(n + 1)]
    return [float(t) for t in text.split(",") if t.strip()]


def zipf_cell(doc: dict, alpha: float, seed: int, schemes) -> tuple[list[list], bool]:
    cfg, prefs, params = config_from_dict(_apply_overrides(doc, alpha=alpha, seed=seed))
    result = bs_optimize(cfg, prefs, params)
    rows = [[alpha, seed, name, float(np.mean(u)), serving] for name, serving, u in scheme_rows(result, cfg, prefs, schemes, seed)]
    return rows, _all_converged(result)


def cmd_zipf_sweep(args) -> int:
    doc = _apply_overrides(_load_doc(args.config), warm=args.warm)
    if "zipf" not in doc:
        raise ConfigError("zipf-sweep needs a config with a zipf workload")
    alphas = parse_alphas(args.alphas)
    if not alphas or min(alphas) <= 0:
        raise ConfigError("alphas must be positive")
    if args.replicates < 1:
        raise ConfigError("--replicates must be >= 1")
    config_from_dict(doc)  # fail fast on a bad base config
    schemes = _schemes(args.scheme)
    cells = [(a, args.seed + k) for a in alphas for k in range(args.replicates)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outs = list(pool.map(zipf_cell, [doc] * len(cells), *zip(*cells), [schemes] * len(cells)))
    else:
        outs = [zipf_cell(doc, a, s, schemes) for a, s in cells]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [row for cell_rows, _ in outs for row in cell_rows]
    write_csv(out / "zipf.csv", ("alpha", "seed", "scheme", "mean_ut_utility", "bs_serving_cost"), rows)
    converged = all(ok for _, ok in outs)
    print(f"{len(cells)} cells written to {out / 'zipf.csv'} converged={converged}")
    return _status(converged, True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="JSON config (default: bundled 8-UT instance)")
    common.add_argument("--out-dir", default=".", help="directory for result files")
    common.add_argument("--seed", type=int, default=None, help="Zipf permutation and solver seed")
    common.add_argument("--scheme", default=None, help="comma list of baselines (RCC,GC,PAC,FC)")
    common.add_argument("--grid-step", type=float, default=0.01, help="grid of the Nash check")
    common.add_argument("--verify", action="store_true", help="check the SE/NE conditions of the result")
    warm = common.add_mutually_exclusive_group()
    warm.add_argument("--warm", dest="warm", action="store_true", default=None, help="warm-start the reward sweep (default)")
    warm.add_argument("--cold", dest="warm", action="store_false", help="restart every sub-game from the initial state")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="d2dgame", description="Stackelberg caching-incentive experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("solve", cmd_solve, "sweep r and report the cheapest equilibrium"),
        ("compare", cmd_compare, "SC against the incentive-free baselines"),
    ):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--alpha", type=float, default=None, help="Zipf skewness override")
        sp.add_argument("--r-fixed", type=float, default=None, help="solve one sub-game at this reward")
        sp.set_defaults(func=fn)
    sp = sub.add_parser("zipf-sweep", parents=[common], help="SC and baselines across Zipf skewness")
    sp.add_argument("--alphas", default="0.4:0.1:1.5", help="range lo:step:hi or comma list")
    sp.add_argument("--replicates", type=int, default=5)
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.set_defaults(func=cmd_zipf_sweep, seed=0)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

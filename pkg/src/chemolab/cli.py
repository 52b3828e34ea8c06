"""Command-line interface.

Exit codes: 0 success, 1 configuration error, 2 numerical blowup,
3 invariant violation, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import hopf_cole
from .config import load_config
from .diagnostics import divcurl_identity_check, curl_mass_monitor
from .dynamics import KSState
from .errors import ChemolabError, ConfigError, InvariantViolation
from .initdata import gen_init, gen_init_ks
from .integrator import simulate
from .io import (
    emit_diagnostics_csv,
    load_snapshot,
    read_diagnostics_csv,
    save_snapshot,
    write_errors_csv,
    write_manifest,
    write_rate_csv,
)
from .sweep import NORMS, SweepConfig, run_sweep

log = logging.getLogger("chemolab")

CURL_TOL = 1e-10
DIVCURL_TOL = 1e-12
MASS_TOL = 1e-12
LEDGER_TOL = 1e-7


def _eps_dirname(eps: float) -> str:
    return f"eps_{eps!r}"


def cmd_gen_init(args) -> int:
    cfg = load_config(args.config)
    state = gen_init(cfg.seed, cfg.amplitude, cfg.band_limit, cfg.grid, cfg.params)
    save_snapshot(state, args.out)
    print(f"wrote {args.out}")
    return 0


def _run_dir_outputs(out: Path, initial, final, record, cfg_raw, extra) -> None:
    out.mkdir(parents=True, exist_ok=True)
    files = [
        save_snapshot(initial, out / "initial.snap"),
        save_snapshot(final, out / "final.snap"),
        emit_diagnostics_csv(record, out / "diagnostics.csv"),
    ]
    write_manifest(out, cfg_raw, files, **extra)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    params = cfg.params
    model = args.model or params.model_tag
    if model == "nondiffusive":
        params = params.with_epsilon(0.0)
    elif model == "diffusive" and params.epsilon == 0:
        raise ConfigError("model 'diffusive' needs epsilon > 0 in [params]")
    if model == "ks":
        initial = gen_init_ks(cfg.seed, cfg.amplitude, cfg.band_limit, cfg.grid, params)
    else:
        initial = gen_init(cfg.seed, cfg.amplitude, cfg.band_limit, cfg.grid, params)
    t0 = time.time()
    final, record = simulate(initial, cfg.schedule)
    out = Path(args.out)
    extra = {
        "model": model,
        "grid": cfg.raw["grid"],
        "params": cfg.raw["params"],
        "seed": cfg.seed,
        "schedule": cfg.raw["schedule"],
        "wall_seconds": time.time() - t0,
    }
    _run_dir_outputs(out, initial, final, record, cfg.raw, extra)
    print(f"simulated {model} to t={final.time:g}; outputs in {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    sw = cfg.sweep
    sc = SweepConfig(
        grid=cfg.grid,
        eps_ladder=tuple(sw["eps_ladder"]),
        dt=cfg.schedule.dt,
        t_end=cfg.schedule.t_end,
        seed=cfg.seed,
        amplitude=cfg.amplitude,
        band_limit=cfg.band_limit,
        params=cfg.params.with_epsilon(0.0),
        comparison_times=None if sw["comparison_times"] is None else tuple(sw["comparison_times"]),
        norms=tuple(sw["norms"]),
        stride=cfg.schedule.stride,
        cfl_safety=cfg.schedule.cfl_safety,
        workers=int(sw["workers"]),
    )
    t0 = time.time()
    res = run_sweep(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for m in [res.baseline, *res.members]:
        sub = out / _eps_dirname(m.epsilon)
        sub.mkdir(exist_ok=True)
        f = emit_diagnostics_csv(m.record, sub / "diagnostics.csv")
        write_manifest(sub, cfg.raw, [f], epsilon=m.epsilon, wall_seconds=m.wall)
        files += [f, sub / "manifest.json"]

    files.append(write_errors_csv(out / "errors.csv", res, NORMS))
    files.append(write_rate_csv(out / "rate.csv", res.fits, sc.norms))
    write_manifest(
        out, cfg.raw, files, seed=cfg.seed, wall_seconds=time.time() - t0,
        monotone=res.monotone(), members=res.manifests,
    )
    for n in sc.norms:
        f = res.fits[n]
        if f is None:
            print(f"{n:5s} fit refused (degenerate errors)")
        else:
            print(f"{n:5s} slope={f.slope:.4f} r2={f.r2:.5f}")
    return 0


def cmd_transform(args) -> int:
    state = load_snapshot(args.input)
    if args.direction == "forward":
        if not isinstance(state, KSState):
            raise ConfigError("forward transform expects a keller_segel snapshot")
        out = hopf_cole.forward(state)
    else:
        if isinstance(state, KSState):
            raise ConfigError("inverse transform expects a conservation snapshot")
        out = hopf_cole.inverse(state, args.normalization)
    save_snapshot(out, args.out)
    print(f"wrote {args.out}")
    return 0


def _report(name: str, ok: bool, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok


def _check_state(state) -> bool:
    if isinstance(state, KSState):
        cmin = float(np.min(state.c))
        ok = _report("positivity", cmin > 0, f"min c = {cmin:.3e}")
        if not ok:
            return False
        state = hopf_cole.forward(state)
    curl, mass = curl_mass_monitor(state)
    gq, dq = divcurl_identity_check(state.grid, state.q)
    ok = _report("curl", curl <= CURL_TOL * (1 + gq), f"|curl q| = {curl:.3e}")
    ok &= _report("div-curl", abs(gq - dq) <= DIVCURL_TOL * (1 + gq),
                  f"|grad q| = {gq:.12e}, |div q| = {dq:.12e}")
    _report("mass", True, f"int p~ = {mass:.3e}")
    return ok


def _check_record(path: Path, ledger_tol: float = LEDGER_TOL) -> bool:
    rec = read_diagnostics_csv(path)
    print(f"-- {path}")
    if len(rec) == 0:
        return _report("samples", False, "no samples")
    curl = np.max(rec["l2_curlq"] / (1 + rec["l2_gradq"]))
    ok = _report("curl", curl <= CURL_TOL, f"max |curl q|/(1+|grad q|) = {curl:.3e}")
    dc = np.max(np.abs(rec["l2_gradq"] - rec["l2_divq"]) / (1 + rec["l2_gradq"]))
    ok &= _report("div-curl", dc <= DIVCURL_TOL, f"max rel gap = {dc:.3e}")
    m0, m1 = rec["mass_p"][0], rec["mass_p"][-1]
    ok &= _report("mass", abs(m1 - m0) <= MASS_TOL * (1 + abs(m0)), f"drift = {abs(m1 - m0):.3e}")
    e0 = rec["l2_p"][0] ** 2 + rec["l2_q"][0] ** 2
    lr = float(np.max(np.abs(rec["ledger_residual"])))
    ok &= _report("ledger", lr <= ledger_tol * (1 + e0), f"max |residual| = {lr:.3e}")
    return ok


def cmd_check(args) -> int:
    target = Path(args.input)
    if target.is_dir():
        csvs = sorted(target.glob("diagnostics.csv")) or sorted(target.glob("*/diagnostics.csv"))
        if not csvs:
            raise FileNotFoundError(f"no diagnostics.csv under {target}")
        ok = all([_check_record(p, args.ledger_tol) for p in csvs])
    else:
        ok = _check_state(load_snapshot(target))
    if not ok:
        raise InvariantViolation("invariant check failed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chemolab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--model", choices=["diffusive", "nondiffusive", "ks"])
    p.add_argument("--out", default="run")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="zero-diffusion rate sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("transform", help="Hopf-Cole transform of a snapshot")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--direction", choices=["forward", "inverse"], required=True)
    p.add_argument("--normalization", type=float, default=0.0,
                   help="mean of ln c for the inverse transform")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("check", help="run the invariant suite on a snapshot or run directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ledger-tol", type=float, default=LEDGER_TOL,
                   help="relative bound on the energy ledger residual (run directories only)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gen-init", help="write the initial-data snapshot")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_init)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ChemolabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``hypoctrl <command> --config path [--out dir] [--seed int] [--threads int]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from . import io
from .config import (
    COMMANDS,
    EXIT_IO,
    EXIT_OK,
    EXIT_SCHEMA,
    ConfigError,
    RunConfig,
    parse_config,
    resolve_problem,
    resolve_region,
)

log = logging.getLogger("hypoctrl")


class OutputError(OSError):
    pass


def emit_report(result: Any, out_dir: str | Path, stem: str, formats: Iterable[str] = ("json",)) -> list[Path]:
    """Write ``stem.json`` and/or ``stem.csv``; CSV needs ``header`` + ``rows``."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            if fmt == "json":
                p = out / f"{stem}.json"
                io.write_json(p, result)
            elif fmt == "csv":
                rows = getattr(result, "rows", None)
                if rows is None:
                    continue
                rows = list(rows())
                if rows and isinstance(rows[0], dict):
                    header = list(rows[0])
                    rows = [[r[h] for h in header] for r in rows]
                else:
                    header = list(result.header)
                p = out / f"{stem}.csv"
                io.write_csv(p, header, ([float(v) if isinstance(v, (np.floating, float)) else v for v in r] for r in rows))
            else:
                raise ValueError(f"unknown format {fmt!r}")
            written.append(p)
    except OSError as exc:
        raise OutputError(str(exc)) from exc
    return written


class _Table:
    """Adapter giving plain row lists the emit_report interface."""

    def __init__(self, header, rows, summary=None):
        self.header = header
        self._rows = rows
        self.summary = summary or {}

    def rows(self):
        return iter(self._rows)

    def to_dict(self):
        return {"header": self.header, "rows": self._rows, **self.summary}


# ----------------------------------------------------------------------------
# commands


def _analysis(problem) -> dict:
    from .phase_space import hamilton_map, kalman_analysis, partially_elliptic_on_S, singular_space

    F = hamilton_map(problem.symbol)
    rep = singular_space(F)
    out = {
        "problem": problem.label,
        "n": problem.n,
        "hamilton_map": F.F,
        "singular_space": rep.to_dict(),
        "k0": rep.k0 if rep.k0 is not None else "none",
        "accretive": problem.symbol.is_accretive(),
        "partially_elliptic_on_S": partially_elliptic_on_S(problem.symbol, rep),
        "time_exponent": (2 * rep.k0 + 1) if rep.k0 is not None else None,
    }
    if problem.ou is not None:
        kr = kalman_analysis(problem.ou)
        out["kalman"] = {"rank": kr.rank, "k0": kr.kalman_k0 if kr.kalman_k0 is not None else "none"}
        out["stable"] = problem.ou.stable_flag
    return out


def cmd_analyze(cfg: RunConfig, out: Path, formats) -> list[Path]:
    return emit_report(_analysis(resolve_problem(cfg)), out, "analysis", ["json"])


def cmd_chain(cfg: RunConfig, out: Path, formats) -> list[Path]:
    prob = resolve_problem(cfg)
    res = _analysis(prob)
    ch = prob.chain
    res.update(
        {
            "accretive_flag": ch.accretive_flag,
            "beta": list(ch.beta),
            "delta": list(ch.delta),
            "nondegeneracy": ch.nondegeneracy,
            "chain_parameters": cfg.preset_params,
        }
    )
    return emit_report(res, out, "chain", ["json"])


def _grid_initial(n: int, L: float, m: int):
    from .ou import GridFunction

    c = 0.5
    return GridFunction.uniform(n, L, m, lambda *X: np.exp(-sum((x - c) ** 2 for x in X)))


def _require_ou(cfg: RunConfig, problem):
    if problem.ou is None:
        raise ConfigError([("/preset", f"command {cfg.command!r} needs an OU problem (heat, kolmogorov or ou)")])
    return problem.ou


def cmd_evolve(cfg: RunConfig, out: Path, formats) -> list[Path]:
    from .ou import fourier_apply, kolmogorov_apply

    prob = resolve_problem(cfg)
    sysm = _require_ou(cfg, prob)
    num = cfg.numerics
    m, L = num.get("grid", 128), num.get("L", 8.0)
    times = num.get("times", [0.1, 0.5])
    f0 = _grid_initial(sysm.n, L, m)
    rows = []
    for t in times:
        gk = kolmogorov_apply(sysm, f0, t)
        gf = fourier_apply(sysm, f0, t, with_half_trace=False)
        diff = gk.with_values(gk.values - gf.values).norm()
        rows.append([float(t), gk.norm(), gf.norm(), diff])
        if cfg.output.get("save_matrices"):
            try:
                out.mkdir(parents=True, exist_ok=True)
                gk.save(out / f"evolve_t{t:g}.bin")
            except OSError as exc:
                raise OutputError(str(exc)) from exc
        log.info("evolve t=%g diff=%.3e", t, diff)
    tab = _Table(
        ["t", "norm_convolution", "norm_fourier", "l2_difference"],
        rows,
        {"problem": prob.label, "grid": m, "L": L, "initial_norm": f0.norm(), "max_difference": max(r[3] for r in rows)},
    )
    return emit_report(tab, out, "evolve", formats)


def cmd_dissipation(cfg: RunConfig, out: Path, formats) -> list[Path]:
    from .ou import frequency_dissipation_profile, hypoellipticity_index

    prob = resolve_problem(cfg)
    sysm = _require_ou(cfg, prob)
    num = cfg.numerics
    m, L = num.get("grid", 64), num.get("L", 8.0)
    times = num.get("times", list(np.logspace(-3, -1, 9)))
    cutoffs = num.get("cutoffs", [1.0, 2.0, 4.0, 8.0])
    prof = frequency_dissipation_profile(sysm, _grid_initial(sysm.n, L, m), times, cutoffs)
    hi = hypoellipticity_index(sysm, seed=cfg.seed)
    summary = {
        "problem": prob.label,
        "exponent_fit": prof.exponent_fit,
        "fit_residual": prof.fit_residual,
        "fit_ok": prof.fit_ok,
        "fitted_delta": prof.fitted_delta,
        "times": prof.times,
        "cutoffs": prof.cutoffs,
        "hypoellipticity_index": hi._asdict(),
    }
    files = emit_report(summary, out, "dissipation", ["json"] if "json" in formats else [])
    if "csv" in formats:
        files += emit_report(prof, out, "dissipation", ["csv"])
    return files


def cmd_spectral(cfg: RunConfig, out: Path, formats) -> list[Path]:
    from .hermite import HermiteTruncation, assemble_weyl, gelfand_shilov_profile, omega_gram, spectral_constant_profile
    from .phase_space import hamilton_map, singular_space

    prob = resolve_problem(cfg)
    n = cfg.region.get("n", prob.n if prob else 1)
    region = resolve_region(cfg, n)
    num = cfg.numerics
    N = num.get("N", 40)
    trunc = HermiteTruncation(n, N)
    gm = omega_gram(trunc, region)
    prof = spectral_constant_profile(trunc, gm, num.get("k_list", list(range(N + 1))))
    summary = {
        "region": region.to_dict(),
        "N": N,
        "exponent": prof.exponent,
        "fit_range": list(prof.fit_range),
        "vacuous": prof.vacuous,
        "thickness_witness": region.thickness_witness,
    }
    files = []
    if prob is not None and "gs_times" in num:
        if prob.n != n:
            raise ConfigError([("/region/n", "region dimension differs from the problem")])
        rep = singular_space(hamilton_map(prob.symbol))
        if rep.k0 is None:
            raise ConfigError([("/preset", "Gelfand-Shilov profile needs a symbol with trivial singular space")])
        gs = gelfand_shilov_profile(assemble_weyl(prob.symbol, trunc), num["gs_times"], rep.k0)
        summary["gelfand_shilov"] = {
            "exponent": gs.exponent,
            "exponent_raw": gs.exponent_raw,
            "exponents_by_C0": gs.exponents_by_C0,
            "C0_hat": gs.C0_hat,
            "t0_hat": gs.t0_hat,
            "truncation_warning": gs.truncation_warning,
            "k0": rep.k0,
        }
        if "csv" in formats:
            files += emit_report(gs, out, "gelfand_shilov", ["csv"])
    if "json" in formats:
        files += emit_report(summary, out, "spectral", ["json"])
    if "csv" in formats:
        tab = _Table(["k", "lambda_min", "c_hat"], [[k, l, c] for k, l, c in zip(prof.k, prof.lambda_min, prof.c_hat)])
        files += emit_report(tab, out, "spectral", ["csv"])
    if cfg.output.get("save_matrices"):
        try:
            gm.save(out / "gram.bin")
        except OSError as exc:
            raise OutputError(str(exc)) from exc
    return files


def cmd_cost(cfg: RunConfig, out: Path, formats) -> list[Path]:
    from .lr_cost import DiagonalSemigroupModel, LRParams, observability_cost, telescoping_trace

    p = LRParams(**{k: float(v) for k, v in cfg.params.items()})
    num = cfg.numerics
    q = num.get("q", 0.5)
    rep = observability_cost(p, q)
    Ts = num.get("T", [0.1, 0.2, 0.5, 1.0, 2.0])
    Ts = Ts if isinstance(Ts, list) else [Ts]
    res = rep.to_dict()
    res["exponent_exact"] = p.exponent_fraction()
    res["log_cost"] = {f"{T:g}": rep.log_cost(T) for T in Ts}
    files = []
    if num.get("trace"):
        tr = telescoping_trace(p, max(Ts), DiagonalSemigroupModel.exact(p), q=q, seed=cfg.seed)
        res["trace"] = {
            "passed": tr.passed,
            "first_failure": tr.first_failure,
            "final_passes": tr.final_passes,
            "final_checks": tr.final_checks,
            "worst_final_log_ratio": tr.worst_final_log_ratio,
            "notes": tr.notes,
        }
        if "csv" in formats:
            files += emit_report(tr, out, "telescoping", ["csv"])
    if "json" in formats:
        files += emit_report(res, out, "cost", ["json"])
    if "csv" in formats:
        tab = _Table(["T", "log_cost"], [[float(T), rep.log_cost(T)] for T in Ts])
        files += emit_report(tab, out, "cost", ["csv"])
    return files


def cmd_control(cfg: RunConfig, out: Path, formats) -> list[Path]:
    from .control import ControlProblem, hum_control, observability_gramian
    from .hermite import HermiteTruncation, assemble_weyl

    prob = resolve_problem(cfg)
    region = resolve_region(cfg, prob.n)
    num = cfg.numerics
    trunc = HermiteTruncation(prob.n, num.get("N", 16))
    op = assemble_weyl(prob.symbol, trunc)
    rng = np.random.default_rng(cfg.seed)
    f0 = np.zeros(trunc.D, dtype=complex)
    low = trunc.upto(min(2, trunc.N))
    f0[:low] = rng.standard_normal(low) + 1j * rng.standard_normal(low)
    f0 /= np.linalg.norm(f0)
    T = num.get("T", 1.0)
    T = T[0] if isinstance(T, list) else T
    cp = ControlProblem(op, region, T, num.get("nt", 256), f0)
    gr = observability_gramian(cp, seed=cfg.seed)
    res = hum_control(cp, num.get("eps"), gr)
    summary = {
        "problem": prob.label,
        "region": region.to_dict(),
        "N": trunc.N,
        "D": trunc.D,
        "gramian": gr.to_dict(),
        "control": res.to_dict(),
        "energy_bound": gr.observability_cost_hat * float(np.linalg.norm(f0) ** 2),
    }
    files = []
    if "json" in formats:
        files += emit_report(summary, out, "control", ["json"])
    if "csv" in formats:
        files += emit_report(res, out, "control", ["csv"])
    if cfg.output.get("save_matrices"):
        try:
            out.mkdir(parents=True, exist_ok=True)
            io.save_matrix(out / "gramian.bin", gr.G_T, {"T": T, "nt": cp.nt})
        except OSError as exc:
            raise OutputError(str(exc)) from exc
    return files


DISPATCH = {
    "analyze": cmd_analyze,
    "evolve": cmd_evolve,
    "dissipation": cmd_dissipation,
    "spectral": cmd_spectral,
    "cost": cmd_cost,
    "control": cmd_control,
    "chain": cmd_chain,
}


def _setup_logging() -> None:
    level = os.environ.get("HYPOCTRL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def run(cfg: RunConfig, out: Path) -> list[Path]:
    formats = cfg.output.get("formats", ["json", "csv"])
    return DISPATCH[cfg.command](cfg, out, formats)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="hypoctrl", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)
    _setup_logging()
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        if cfg.command != args.command:
            raise ConfigError([("/command", f"config command {cfg.command!r} differs from CLI command {args.command!r}")])
    except ConfigError as exc:
        for ptr, msg in exc.violations:
            print(f"config violation at {ptr or '/'}: {msg}", file=sys.stderr)
        return exc.code
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.output.get("dir", "out"))
    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=args.threads):
            files = run(cfg, out)
    except ConfigError as exc:
        for ptr, msg in exc.violations:
            print(f"config violation at {ptr or '/'}: {msg}", file=sys.stderr)
        return exc.code
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

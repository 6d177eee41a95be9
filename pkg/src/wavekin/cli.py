"""Command line entry point: ``wavekin <subcommand> [options]``.

Every subcommand writes its artifacts and a ``manifest.json`` (config echo,
library versions, wall time, headline numbers) into ``--out``.  Exit status
is 0 on success, 2 for invalid configuration and 3 for numerical failures;
errors are also reported on stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .model import ModelParams

__all__ = ["RunConfig", "build_parser", "main", "run"]

SUBCOMMANDS = ("resonance", "quadrature", "kernels", "kinetic", "wke", "simulate", "diagrams",
               "count-quadric", "bezout", "report")
PARAM_KEYS = ("d", "L", "r_star", "b0", "sigma", "epsilon")
EXIT_CONFIG, EXIT_NUMERICAL = 2, 3


@dataclass
class RunConfig:
    """Everything a run depends on; ``to_dict``/``from_dict`` round-trip exactly."""

    subcommand: str
    params: ModelParams = field(default_factory=ModelParams)
    options: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "wavekin-out"
    cache_dir: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {self.subcommand!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.threads) < 1:
            raise ValueError("threads must be >= 1")

    def to_dict(self):
        return {"subcommand": self.subcommand, "params": self.params.to_dict(),
                "options": dict(self.options), "seed": int(self.seed), "out": str(self.out),
                "cache_dir": self.cache_dir, "threads": int(self.threads)}

    @classmethod
    def from_dict(cls, cfg):
        allowed = {"subcommand", "params", "options", "seed", "out", "cache_dir", "threads"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(subcommand=cfg["subcommand"],
                   params=ModelParams.from_dict(cfg.get("params", {})),
                   options=dict(cfg.get("options", {})),
                   seed=int(cfg.get("seed", 0)), out=cfg.get("out", "wavekin-out"),
                   cache_dir=cfg.get("cache_dir"), threads=int(cfg.get("threads", 1)))


# ---------------------------------------------------------------------------
# parser

def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _ints(text):
    return [int(x) for x in text.split(",") if x]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="JSON file with keys d, L, r_star, b0, sigma, epsilon")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--out", default="wavekin-out", help="output directory")
    g.add_argument("--cache-dir", default=None, help="overrides $WAVEKIN_CACHE_DIR")
    for key, typ in (("d", int), ("L", float), ("r_star", float), ("b0", float), ("sigma", float),
                     ("epsilon", float)):
        g.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None)

    p = argparse.ArgumentParser(prog="wavekin", description="Wave kinetic workbench")
    p.add_argument("--version", action="version", version=f"wavekin {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("resonance", parents=[common], help="resonant pair counts and sums S_L,2")
    s.add_argument("--M", type=int, default=1, help="box radius for --count-only")
    s.add_argument("--count-only", action="store_true")
    s.add_argument("--Ls", type=_ints, default=[4, 8, 16])
    s.add_argument("--method", default="auto")

    s = sub.add_parser("quadrature", parents=[common], help="quadric integral and lattice comparison")
    s.add_argument("--Ls", type=_ints, default=[4, 8, 16, 32])
    s.add_argument("--constant", default=None, help="None, 'singular_series' or a number")

    s = sub.add_parser("kernels", parents=[common], help="kernel sweep, closed form vs quadrature")
    s.add_argument("--sweep", action="store_true")
    s.add_argument("--n", type=int, default=100)

    s = sub.add_parser("kinetic", parents=[common], help="K(tau0)(n0) profile")
    s.add_argument("--tau0", type=float, default=0.5)
    s.add_argument("--constant", default=None)

    s = sub.add_parser("wke", parents=[common], help="solve the wave kinetic equation")
    s.add_argument("--T", type=float, default=2.0)
    s.add_argument("--h", type=float, default=0.05)
    s.add_argument("--eps-list", type=_floats, default=None, help="several amplitudes in lockstep")

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo spectra")
    s.add_argument("--M-cut", type=int, default=3)
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--h", type=float, default=0.02)
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--order", type=int, default=1, choices=(0, 1, 2))
    s.add_argument("--variant", default="a", choices=("a", "frak"))

    s = sub.add_parser("diagrams", parents=[common], help="diagram sets and Feynman diagrams")
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--max-m", type=int, default=5)

    s = sub.add_parser("count-quadric", parents=[common], help="intersection counts vs bound")
    s.add_argument("--N", type=int, default=3, choices=(3, 4))
    s.add_argument("--R", type=float, default=1.0)
    s.add_argument("--trials", type=int, default=20)

    s = sub.add_parser("bezout", parents=[common], help="finite-field counts vs Bezout bound")
    s.add_argument("--N", type=int, default=3, choices=(3, 4))
    s.add_argument("--primes", type=_ints, default=[5, 7, 11])
    s.add_argument("--trials", type=int, default=10)

    s = sub.add_parser("report", parents=[common], help="run the acceptance criteria")
    s.add_argument("--criteria", type=_ints, default=None)
    return p


def config_from_args(args):
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
        unknown = set(base) - set(PARAM_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key in PARAM_KEYS:
        val = getattr(args, key)
        if val is not None:
            base[key] = val
    # eps = 0 is a valid run of the solver but not a model amplitude
    eps_override = None
    if "epsilon" in base and base["epsilon"] == 0:
        eps_override = 0.0
        base.pop("epsilon")
    params = ModelParams.from_dict(base)
    skip = {"config", "seed", "threads", "out", "cache_dir", "subcommand", *PARAM_KEYS}
    options = {k: v for k, v in vars(args).items() if k not in skip}
    if eps_override is not None:
        options["epsilon_override"] = eps_override
    return RunConfig(args.subcommand, params, options, args.seed, args.out, args.cache_dir, args.threads)


# ---------------------------------------------------------------------------
# subcommands

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _resonance(cfg, out):
    from .lattice import count_resonant_pairs, gaussian_test, resonance_sum_2
    o, p = cfg.options, cfg.params
    if o["count_only"]:
        n = count_resonant_pairs(p.d, o["M"])
        print(n)
        return {"count": n, "d": p.d, "M": o["M"]}
    phi = gaussian_test(p.d)
    rows = [(L, resonance_sum_2(phi, L, d2_lognorm=(p.d == 2), method=o["method"])) for L in o["Ls"]]
    _write_csv(out / "resonance.csv", ("L", "value"), rows)
    return {"values": dict(rows)}


def _quadrature(cfg, out):
    from .lattice import gaussian_test
    from .quadrature import heath_brown_check, sigma_integral, write_table_csv
    p = cfg.params
    phi = gaussian_test(p.d)
    integral = sigma_integral(phi, np.zeros(p.d))
    const = cfg.options["constant"]
    if const not in (None, "singular_series"):
        const = float(const)
    rows = heath_brown_check(phi, p.d, cfg.options["Ls"], constant=const, integral=integral)
    write_table_csv(rows, out / "quadrature.csv")
    return {"integral": integral, "limit": rows[0]["limit"], "residuals": [r["residual"] for r in rows]}


def _kernels(cfg, out):
    from .kernels import Z_closed, Z_infinity, Z_quadrature
    rng = np.random.default_rng(cfg.seed)
    n = cfg.options["n"] if cfg.options["sweep"] else 5
    rows, worst = [], 0.0
    for _ in range(n):
        q = 1 + 4 * rng.random(4)
        t = 10 ** rng.uniform(-3, 1)
        Z = [float(Z_closed(t, q, j)) for j in (1, 2, 3, 4)]
        res = max(abs(Z[j - 1] - Z_quadrature(t, q, j)) for j in (1, 2, 3, 4))
        worst = max(worst, res)
        rows.append((t, *q, *Z, Z_infinity(q), res))
    _write_csv(out / "kernels.csv", ("tau0", "g1", "g2", "g3", "g4", "Z1", "Z2", "Z3", "Z4", "Z_inf",
                                     "residual"), rows)
    return {"max_residual": worst}


def _kinetic(cfg, out):
    from .kinetic import KineticOperator, default_base_radii, n0_field
    p = cfg.params
    const = cfg.options["constant"]
    if const not in (None, "singular_series"):
        const = float(const)
    radii = default_base_radii(p.sigma)
    knots = np.linspace(0, 8 * p.sigma, 161)
    n0 = n0_field(cfg.options["tau0"], p, knots)
    op = KineticOperator(p.d, p.r_star, knots[-1], radii, constant=const)
    terms = op.terms(cfg.options["tau0"], n0)
    rows = [(r, t.sum(), *t) for r, t in zip(radii, terms)]
    _write_csv(out / "kinetic.csv", ("radius", "K", "K1", "K2", "K3", "K4"), rows)
    return {"K_at_0": float(terms[0].sum())}


def _wke(cfg, out):
    from .wke import WKESolver
    p, o = cfg.params, cfg.options
    eps = o["eps_list"] or [o.get("epsilon_override", p.epsilon)]
    solver = WKESolver(p)
    traj = solver.solve(o["T"], o["h"], eps)
    lin = np.array([solver.linear(t) for t in traj["tau"]])
    rows = []
    for k, t in enumerate(traj["tau"]):
        rows.append((t, *[traj["norm"][i, k] for i in range(len(eps))]))
    _write_csv(out / "wke_norms.csv", ("tau", *[f"norm_eps_{e:g}" for e in eps]), rows)
    np.savez(out / "wke_trajectory.npz", tau=traj["tau"], z=traj["z"], knots=solver.knots,
             epsilons=traj["epsilons"])
    dev = [float(np.max(np.abs(traj["z"][i] - lin))) for i in range(len(eps))]
    return {"epsilons": list(map(float, eps)), "max_abs_dev_from_linear": dev,
            "sup_norm": traj["sup_norm"].tolist()}


def _simulate(cfg, out):
    from .cache import resonant_table
    from .stochastic import closed_form_a1_inf, simulate, spectrum_terms
    p, o = cfg.params, cfg.options
    table = resonant_table(p.d, o["M_cut"])
    sim = simulate(p, M_cut=o["M_cut"], tau=o["tau"], h=o["h"], n_samples=o["samples"], seed=cfg.seed,
                   order=o["order"], variant=o["variant"], table=table)
    st = spectrum_terms(sim, p)
    g, B, tau = sim["gamma"], sim["B"], sim["tau"]
    sites = sim["grid"].sites / p.L
    a1sq = np.abs(sim["a"][:, 1]) ** 2
    m1, e1 = a1sq.mean(axis=0), a1sq.std(axis=0, ddof=1) / math.sqrt(a1sq.shape[0])
    rows = []
    for i in range(g.size):
        rows.append((*sites[i], float(np.linalg.norm(sites[i])), st["total"].mean[i], st["total"].stderr[i],
                     st["n"][0].mean[i], st["n"][0].stderr[i], B[i] * -math.expm1(-2 * g[i] * tau),
                     m1[i], e1[i], closed_form_a1_inf(p, table, i)))
    coords = [f"s{k + 1}" for k in range(p.d)]
    _write_csv(out / "spectrum.csv", (*coords, "abs_s", "n_mean", "n_stderr", "n0_mean", "n0_stderr",
                                      "n0_reference", "a1sq_mean", "a1sq_stderr", "a1sq_closed_form"), rows)
    return {"tau": tau, "h": sim["h"], "samples": o["samples"], "flags": sim["flags"],
            "table_size": table.size}


def _diagrams(cfg, out):
    from .diagrams import count_D, feynman_set, is_true, render, to_json
    o = cfg.options
    Fs = feynman_set(o["m"], o["n"])
    with open(out / "diagrams.json", "w") as fh:
        json.dump([json.loads(to_json(F)) for F in Fs], fh, indent=1)
    with open(out / "diagrams.txt", "w") as fh:
        fh.write("\n\n".join(render(F) for F in Fs) + "\n")
    counts = [count_D(m) for m in range(o["max_m"] + 1)]
    return {"counts_D": counts, "n_feynman": len(Fs), "n_true": sum(is_true(F) for F in Fs)}


def _count_quadric(cfg, out):
    from .acceptance import _random_alpha, _random_pair
    from .lattice import quadric_intersection_count
    rng = np.random.default_rng(cfg.seed)
    p, o = cfg.params, cfg.options
    rows = []
    for _ in range(o["trials"]):
        An, _ = _random_alpha(o["N"], rng).normalized()
        z1, v = _random_pair(p.d, rng)
        c, b, r = quadric_intersection_count(An, z1, v, o["R"], p.L)
        rows.append((json.dumps(An.alpha.tolist()), json.dumps(z1.tolist()), json.dumps(v.tolist()), c, b, r))
    _write_csv(out / "count_quadric.csv", ("alpha", "z1", "v", "count", "bound", "ratio"), rows)
    return {"max_ratio": max(r[-1] for r in rows)}


def _bezout(cfg, out):
    from .acceptance import _random_alpha, _random_pair
    from .lattice import finite_field_count, quadric_polynomials
    rng = np.random.default_rng(cfg.seed)
    p, o = cfg.params, cfg.options
    rows = []
    m = (o["N"] - 2) * p.d
    for _ in range(o["trials"]):
        An, _ = _random_alpha(o["N"], rng).normalized()
        z1, v = _random_pair(p.d, rng)
        polys = quadric_polynomials(An, z1, v)
        for pr in o["primes"]:
            c, b = finite_field_count(polys, pr, m)
            rows.append((json.dumps(An.alpha.tolist()), json.dumps(z1.tolist()), json.dumps(v.tolist()), pr,
                         c, b))
    _write_csv(out / "bezout.csv", ("alpha", "z1", "v", "p", "count", "bound"), rows)
    return {"all_within_bound": all(r[4] <= r[5] for r in rows)}


def _report(cfg, out):
    from .acceptance import format_result, run as run_criteria
    results = run_criteria(cfg.options["criteria"])
    _write_csv(out / "report.csv", ("criterion", "title", "passed", "seconds", "budget", "detail"),
               [(r.number, r.title, r.passed, f"{r.seconds:.2f}", r.budget, r.detail) for r in results])
    with open(out / "report.txt", "w") as fh:
        fh.write("\n".join(format_result(r) for r in results) + "\n")
    return {"passed": [r.number for r in results if r.passed],
            "failed": [r.number for r in results if not r.passed]}


HANDLERS = {"resonance": _resonance, "quadrature": _quadrature, "kernels": _kernels, "kinetic": _kinetic,
            "wke": _wke, "simulate": _simulate, "diagrams": _diagrams, "count-quadric": _count_quadric,
            "bezout": _bezout, "report": _report}


def _versions():
    import numba
    import scipy
    return {"wavekin": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def run(cfg: RunConfig):
    """Execute one configured run; returns the manifest dict."""
    import numba
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    if cfg.cache_dir:
        os.environ["WAVEKIN_CACHE_DIR"] = str(cfg.cache_dir)
    numba.set_num_threads(min(int(cfg.threads), numba.config.NUMBA_NUM_THREADS))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = HANDLERS[cfg.subcommand](cfg, out)
    manifest = {"config": cfg.to_dict(), "versions": _versions(),
                "wall_time_s": time.perf_counter() - t0, "results": summary}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=float)
    return manifest


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(cfg)
    except (RuntimeError, FloatingPointError, ArithmeticError) as exc:
        print(json.dumps({"error": "numerical", "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"ok": True, "out": str(cfg.out), "results": manifest["results"]}, default=float))
    if cfg.subcommand == "report" and manifest["results"]["failed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

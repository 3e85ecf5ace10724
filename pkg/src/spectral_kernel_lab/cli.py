"""Command-line harness: verification suites, sweeps and reports.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on a
configuration or environment error.  JSON reports are written with sorted
keys and contain no timings, so a fixed configuration and seed reproduce
them byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import hyperbolic as hyp
from . import quasimode as qm
from . import tree_kernel as tk
from . import wave
from .errors import DegenerateWindow, EtaOutOfRange, NTooSmall, SpectralKernelError
from .tree_core import delta_at_root

__all__ = ["ConfigError", "ExperimentConfig", "build_parser", "main"]

SUBCOMMANDS = (
    "propagate",
    "design-tree",
    "recurrence-tree",
    "selberg",
    "design-hyperbolic",
    "recurrence-hyperbolic",
    "quasimode",
)

# per-subcommand defaults; flags override a config file, which overrides these
DEFAULTS = {
    "propagate": {"p": [2, 3, 5, 7], "n_max": 20, "trials": 10, "steps": 20},
    "design-tree": {"p": [5], "eta": [0.25], "bigN": [200, 400, 800], "theta0": [math.pi / 3], "grid": 2048},
    "recurrence-tree": {"p": [3, 5], "L": [5, 10, 20], "grid": 200, "c_min": 0.5},
    "selberg": {"t_sweep": [1.0 + 0.5 * i for i in range(11)], "tol": 1e-6, "grid": 64, "slope_max": -0.45},
    "design-hyperbolic": {
        "eta": [0.25, 0.4],
        "bigN": [400, 800],
        "r_target": [0.7],
        "t_sweep": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        "grid": 4001,
        "tol": 1e-9,
    },
    "recurrence-hyperbolic": {"r_target": [0.0, 1.3], "L": [8], "q": [1, 2], "tol": 1e-8},
    "quasimode": {"trials": 1000, "components": 50, "r_target": [], "omega": []},
}


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


@dataclasses.dataclass
class ExperimentConfig:
    """Resolved configuration of one run."""

    subcommand: str
    params: dict
    seed: int
    json_path: Path | None
    csv_path: Path | None
    perturb: bool
    threads: int

    def get(self, key):
        return self.params[key]

    def to_json(self) -> dict:
        return {"subcommand": self.subcommand, "seed": self.seed, "perturb": self.perturb, **self.params}


# ---------------------------------------------------------------------------
# parsing


def _float_list(text: str) -> list[float]:
    try:
        out = [_parse_float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _parse_float(x: str) -> float:
    x = x.strip().lower()
    named = {"pi": math.pi, "pi/2": math.pi / 2, "pi/3": math.pi / 3, "pi/4": math.pi / 4}
    return named[x] if x in named else float(x)


def _int_list(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _sweep(text: str) -> list[float]:
    """``start:stop:step`` (inclusive) or a comma list."""
    if ":" in text:
        try:
            a, b, h = (float(x) for x in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad sweep {text!r}") from None
        if h <= 0 or b < a:
            raise argparse.ArgumentTypeError(f"bad sweep {text!r}")
        n = int(math.floor((b - a) / h + 1e-9))
        return [a + i * h for i in range(n + 1)]
    return _float_list(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=_int_list, help="primes, comma separated")
    common.add_argument("--eta", type=_float_list, help="window parameters in (0, 1/2)")
    common.add_argument("--bigN", type=_int_list, help="support radii")
    common.add_argument("--theta0", type=_float_list, help="target angles in [0, pi]")
    common.add_argument("--r-target", dest="r_target", type=_float_list, help="spectral targets r")
    common.add_argument("--t-sweep", dest="t_sweep", type=_sweep, help="T values, start:stop:step or list")
    common.add_argument("--L", type=_int_list, help="amplifier lengths")
    common.add_argument("--q", type=_int_list, help="recurrence steps for the annuli")
    common.add_argument("--omega", type=_float_list, help="window half-widths")
    common.add_argument("--n-max", dest="n_max", type=int, help="largest propagation time")
    common.add_argument("--trials", type=int, help="number of randomized trials")
    common.add_argument("--steps", type=int, help="wave steps per trial")
    common.add_argument("--components", type=int, help="components per random decomposition")
    common.add_argument("--tol", type=float, help="numerical tolerance")
    common.add_argument("--grid", type=int, help="grid size")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--json", dest="json_path", help="write the JSON report here")
    common.add_argument("--csv", dest="csv_path", help="write curve data here")
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument(
        "--perturb", action="store_true", default=None, help="inject a fault (negative control)"
    )
    parser = argparse.ArgumentParser(prog="skl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


_KEYS = (
    "p", "eta", "bigN", "theta0", "r_target", "t_sweep", "L", "q", "omega",
    "n_max", "trials", "steps", "components", "tol", "grid",
)


def resolve_config(args: argparse.Namespace, environ=os.environ) -> ExperimentConfig:
    """Merge defaults, config file and flags, then validate.

    Raises:
        ConfigError: on any invalid value or unusable path.
    """
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    params = dict(DEFAULTS[args.subcommand])
    for key in _KEYS:
        if key in file_cfg:
            params[key] = file_cfg[key]
        flag = getattr(args, key)
        if flag is not None:
            params[key] = flag

    def pick(key, default):
        flag = getattr(args, key)
        return flag if flag is not None else file_cfg.get(key, default)

    seed = pick("seed", 0)
    perturb = bool(pick("perturb", False))
    json_path = pick("json_path", file_cfg.get("json"))
    csv_path = pick("csv_path", file_cfg.get("csv"))
    for path in (json_path, csv_path):
        if path is not None and not Path(path).parent.is_dir():
            raise ConfigError(f"parent directory of {path} does not exist")
    threads = environ.get("SKL_THREADS", "1")
    try:
        threads = int(threads)
    except ValueError:
        raise ConfigError(f"SKL_THREADS must be a positive integer, got {threads!r}") from None
    if threads < 1:
        raise ConfigError("SKL_THREADS must be a positive integer")
    _validate(params)
    return ExperimentConfig(
        args.subcommand,
        params,
        int(seed),
        Path(json_path) if json_path else None,
        Path(csv_path) if csv_path else None,
        perturb,
        threads,
    )


def _validate(params: dict):
    for key, value in params.items():
        optional = key in ("r_target", "omega") and "omega" in params
        if isinstance(value, list) and not value and not optional:
            raise ConfigError(f"{key} must be nonempty")
    for p in params.get("p", []):
        if p < 2 or any(p % d == 0 for d in range(2, int(math.isqrt(p)) + 1)):
            raise ConfigError(f"{p} is not prime")
    for eta in params.get("eta", []):
        if not 0.0 < eta < 0.5:
            raise ConfigError(f"eta must lie in (0, 1/2), got {eta}")
    for N in params.get("bigN", []):
        if N < 1:
            raise ConfigError("bigN must be positive")
    for th in params.get("theta0", []):
        if not 0.0 <= th <= math.pi:
            raise ConfigError(f"theta0 must lie in [0, pi], got {th}")
    for key in ("tol",):
        if key in params and not params[key] > 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("grid", "trials", "steps", "components", "n_max"):
        if key in params and not int(params[key]) >= 1:
            raise ConfigError(f"{key} must be at least 1")
    if len(params.get("r_target", [])) != len(params.get("omega", params.get("r_target", []))):
        raise ConfigError("--r-target and --omega must have the same length")


# ---------------------------------------------------------------------------
# subcommands; each returns (passed, report, csv_rows)


def _map(cfg: ExperimentConfig, fn: Callable, items: Sequence):
    """Apply ``fn`` to ``items``, possibly in parallel, keeping input order."""
    if cfg.threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))


def cmd_propagate(cfg: ExperimentConfig):
    rows, ok = [], True
    cases = [(p, n) for p in cfg.get("p") for n in range(0, cfg.get("n_max") + 1, 2)]
    for i, (p, n) in enumerate(cases):
        R = n + 1
        closed = wave.propagate_closed_form(p, n, R)
        if cfg.perturb and i == len(cases) - 1:
            closed = closed + delta_at_root(p, R)
        oracle = wave.chebyshev_operator("first", n, delta_at_root(p, R))
        diff = closed - oracle
        exact = diff.is_zero()
        ok &= exact
        rows.append(
            {
                "p": p,
                "n": n,
                "exact_zero": exact,
                "max_abs_deviation": max(float(abs(x)) for x in diff.values),
            }
        )
    energy = wave.energy_trials(cfg.seed, cfg.get("trials"), cfg.get("steps"), tuple(cfg.get("p")))
    ok &= energy["all_zero"]
    report = {
        "propagation": rows,
        "energy": {k: energy[k] for k in ("trials", "steps", "all_zero")},
        "energy_drift": [{"p": d["p"], "drift_zero": d["drift_zero"]} for d in energy["results"]],
    }
    return ok, report, None


def cmd_design_tree(cfg: ExperimentConfig):
    tuples = [
        (p, eta, N, th)
        for p in cfg.get("p")
        for eta in cfg.get("eta")
        for N in cfg.get("bigN")
        for th in cfg.get("theta0")
    ]

    def run(t):
        p, eta, N, th = t
        entry = {"p": p, "eta": eta, "N": N, "theta0": th}
        try:
            d = tk.design_kernel(p, eta, N, th)
        except NTooSmall as exc:
            return {**entry, "status": "NTooSmall", "error": str(exc), "checks": exc.checks}, None
        if cfg.perturb:
            d = dataclasses.replace(d, kernel=d.kernel + delta_at_root(p, d.kernel.R))
        rep = tk.verify_design(d, grid_size=cfg.get("grid"))
        entry.update(status="designed", design=d.to_json(), properties=rep.to_json())
        entry["analytic_lower_bound"] = "analytic" if d.branch == "simple" else "measured"
        theta = np.linspace(0.0, math.pi, 257)
        curve = [(p, eta, N, th, float(x), float(y)) for x, y in zip(theta, d.h(2 * np.cos(theta)))]
        return entry, (rep, curve)

    results = _map(cfg, run, tuples)
    entries = [e for e, _ in results]
    designed = [r for _, r in results if r is not None]
    passed = all(e["status"] == "designed" and e["properties"]["passed"] for e in entries)
    delta_req = [e["properties"]["delta_required"] for e in entries if e["status"] == "designed"]
    delta_hat = [e["properties"]["delta_measured"] for e in entries if e["status"] == "designed"]
    summary = {
        "designed": len(designed),
        "rejected": len(entries) - len(designed),
        "all_delta_ok": all(h >= r for h, r in zip(delta_hat, delta_req)),
        "min_delta_ratio": min((h / r for h, r in zip(delta_hat, delta_req)), default=None),
    }
    csv_rows = [("p", "eta", "N", "theta0", "theta", "h")]
    for _, curve in designed:
        csv_rows.extend(curve)
    return passed, {"tuples": entries, "summary": summary}, csv_rows


def cmd_recurrence_tree(cfg: ExperimentConfig):
    rows, worst = [], math.inf
    c_min = cfg.get("c_min")
    for p in cfg.get("p"):
        lim = (p + 1) / math.sqrt(p)
        lams = np.linspace(-lim, lim, cfg.get("grid"))
        for L in cfg.get("L"):
            cs = [tk.recurrence_kernel(p, L, float(lam)).c for lam in lams]
            i = int(np.argmin(cs))
            worst = min(worst, cs[i])
            rows.append({"p": p, "L": L, "min_c": cs[i], "argmin_lambda": float(lams[i])})
    if cfg.perturb:
        worst -= 1.0
    return worst >= c_min, {"rows": rows, "min_c": worst, "c_required": c_min}, None


def cmd_selberg(cfg: ExperimentConfig):
    Ts = cfg.get("t_sweep")
    tol = cfg.get("tol")
    sweep = hyp.selberg_sweep(Ts)
    roundtrip = hyp.selberg_roundtrip([T for T in Ts if T <= 3.0] or Ts[:1], cfg.get("grid"), 8.0, tol * 1e-3)
    abel = hyp.abel_roundtrip_suite()
    if cfg.perturb:
        roundtrip["max_deviation"] += 1.0
    checks = {
        "fourier_roundtrip": roundtrip["max_deviation"] <= tol,
        "abel_roundtrip": abel["max_error"] <= 10 * tol,
        "sup_exponent": sweep["sup_fitted_exponent"] <= cfg.get("slope_max"),
        "tail_exponent": sweep["tail_fitted_exponent"] <= -1.0,
        "constants_finite": math.isfinite(sweep["sup_fitted_constant"])
        and math.isfinite(sweep["tail_fitted_constant"]),
    }
    csv_rows = [("T", "t", "k")]
    for T in Ts:
        t = np.expm1(np.linspace(0.0, 2.0 * T + 4.0, 201))
        csv_rows.extend((T, float(a), float(b)) for a, b in zip(t, hyp.kernel_k(T, t)))
    report = {
        "checks": checks,
        "sweep": sweep,
        "fourier_roundtrip": roundtrip,
        "abel_roundtrip": abel,
        "T_sweep": Ts,
        "fitted_constant": sweep["sup_fitted_constant"],
        "fitted_exponent": sweep["sup_fitted_exponent"],
        "max_deviation": roundtrip["max_deviation"],
        "quadrature_error": sweep["quadrature_error"],
    }
    return all(checks.values()), report, csv_rows


def cmd_design_hyperbolic(cfg: ExperimentConfig):
    tuples = [(eta, N, r) for eta in cfg.get("eta") for N in cfg.get("bigN") for r in cfg.get("r_target")]
    tol = cfg.get("tol")

    def run(t):
        eta, N, r = t
        entry = {"eta": eta, "N": N, "r_target": r}
        try:
            ck = hyp.design_hyperbolic_kernel(eta, N, r, tol=tol)
        except NTooSmall as exc:
            return {**entry, "status": "NTooSmall", "error": str(exc), "checks": exc.checks}
        rep = hyp.verify_hyperbolic(ck, grid_size=cfg.get("grid"))
        data = rep.to_json()
        if cfg.perturb:
            data["window_min"] -= 1.0 / eta
            data["window_ok"] = data["window_min"] >= 0.5 / eta
        entry.update(status="designed", design=ck.to_json(), properties=data)
        entry["passed"] = data["window_ok"] and data["support_ok"] and data["untempered_ok"]
        return entry

    entries = _map(cfg, run, tuples)
    trunc = hyp.truncation_sweep(cfg.get("t_sweep"), tol=tol)
    c0 = [e["properties"]["C0"] for e in entries if e["status"] == "designed"]
    report = {
        "tuples": entries,
        "C0": max(c0) if c0 else None,
        "truncation": trunc,
    }
    passed = all(e["status"] == "designed" and e["passed"] for e in entries) and math.isfinite(
        trunc["fitted_constant"]
    )
    csv_rows = [("T", "max_deviation", "certified_bound")]
    csv_rows.extend((r["T"], r["max_deviation"], r["certified_bound"]) for r in trunc["rows"])
    return passed, report, csv_rows


def cmd_recurrence_hyperbolic(cfg: ExperimentConfig):
    tol = cfg.get("tol")
    amps = []
    for r in cfg.get("r_target"):
        for L in cfg.get("L"):
            amps.append(hyp.recurrence_amplification(r, L, tol=tol).to_json())
    annuli = []
    for q in cfg.get("q"):
        for L in cfg.get("L"):
            annuli.append(hyp.verify_annuli_bounds(q, L, tol).to_json())
    constant = max(a["max_value"] for a in annuli)
    if cfg.perturb:
        constant = math.inf
    report = {"amplification": amps, "annuli": annuli, "annuli_constant": constant}
    passed = math.isfinite(constant) and all(a["h_value"] > 0 for a in amps)
    return passed, report, None


def cmd_quasimode(cfg: ExperimentConfig):
    trials = cfg.get("trials")
    n = cfg.get("components")
    pairs = list(zip(cfg.get("r_target"), cfg.get("omega")))
    report = {}
    if not pairs:
        res = qm.run_projection_trials(cfg.seed, trials, n)
        if cfg.perturb:
            res["failures"].append({"trial": -1, "injected": True})
            res["all_hold"] = False
        report["random"] = res
        return res["all_hold"], report, None
    rng = np.random.default_rng(cfg.seed)
    windows, degenerate, ok = [], [], True
    for r, omega in pairs:
        entry = {"r": r, "omega": omega}
        try:
            reps = []
            for _ in range(trials):
                psi = qm.random_decomposition(rng, n, center=r, spread=2.0 * omega)
                reps.append(qm.verify_projection_bound(psi, r, omega))
        except DegenerateWindow as exc:
            degenerate.append({**entry, "error": "DegenerateWindow", "message": str(exc)})
            ok = False
            continue
        holds = all(x.holds for x in reps) and not cfg.perturb
        ok &= holds
        windows.append({**entry, "all_hold": holds, "max_tightness": max(x.tightness for x in reps)})
    report.update(windows=windows, degenerate=degenerate, trials=trials, n_components=n)
    return ok, report, None


COMMANDS = {
    "propagate": cmd_propagate,
    "design-tree": cmd_design_tree,
    "recurrence-tree": cmd_recurrence_tree,
    "selberg": cmd_selberg,
    "design-hyperbolic": cmd_design_hyperbolic,
    "recurrence-hyperbolic": cmd_recurrence_hyperbolic,
    "quasimode": cmd_quasimode,
}


# ---------------------------------------------------------------------------
# output


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.ndarray,)):
        return _jsonable(x.tolist())
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, Path):
        return str(x)
    return x


def render_report(cfg: ExperimentConfig, passed: bool, report: dict) -> str:
    doc = {"config": cfg.to_json(), "seed": cfg.seed, "passed": passed, "report": report}
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        passed, report, csv_rows = COMMANDS[cfg.subcommand](cfg)
    except (EtaOutOfRange, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SpectralKernelError as exc:
        print(f"check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        passed, report, csv_rows = False, {"error": type(exc).__name__, "message": str(exc)}, None
    text = render_report(cfg, passed, report)
    try:
        if cfg.json_path is not None:
            cfg.json_path.write_text(text)
        else:
            sys.stdout.write(text)
        if cfg.csv_path is not None and csv_rows:
            with cfg.csv_path.open("w", newline="") as fh:
                csv.writer(fh).writerows(csv_rows)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return 2
    print(f"{cfg.subcommand}: {'PASS' if passed else 'FAIL'}", file=sys.stderr)
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())

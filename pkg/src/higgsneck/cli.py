"""Command-line experiment runner.

Every subcommand accepts ``--config FILE`` (INI sections named after the
subcommand plus ``[run]`` and ``[tolerances]``); flags override the file.
Exit codes: 0 pass, 2 configuration error, 3 numerical failure.
"""
import argparse
from concurrent.futures import ThreadPoolExecutor
import configparser
import json
import logging
import math
import os
from pathlib import Path
import sys
import time

import numpy as np

from . import checks as C
from . import fields as F
from . import linop as L
from . import localsys as S
from . import models as M
from .errors import ConfigError, HiggsNeckError, SolverError
from .grid import LogPolarGrid
from .records import RunRecord, atomic_write, dumps, field_pair_from_json, write_csv
from .surface import NodeParameter

log = logging.getLogger("higgsneck")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

RUN_KEYS = {"out": ("str", "runs"), "cache_dir": ("str", None), "seed": ("int", 0),
            "plots": ("bool", True)}

SCHEMAS = {
    "residual": {"pair": ("choice:model|fiducial|limiting|pole_part", "model"),
                 "system": ("choice:full|rescaled|fixed_det|decoupled", "fixed_det"),
                 "input": ("str", None), "t": ("float", 1.0), "alpha": ("float", 0.5),
                 "c": ("complex", 1.0), "degree": ("int", 0)},
    "model": {"alpha": ("float", 0.5), "c": ("complex", 1.0), "t": ("complex", 0.1),
              "nr": ("int", 256), "ntheta": ("int", 128)},
    "fiducial": {"t": ("floats", [1.0, 2.0, 4.0, 8.0]), "tol": ("float", 1e-8)},
    "glue": {"t": ("floats", [1.0, 2.0, 4.0, 8.0]), "rc": ("float", 0.2),
             "cutoff": ("choice:cosine|polynomial", "cosine")},
    "cohomology": {"genus": ("ints", [2, 3, 4, 5, 6]), "punctures": ("int", None),
                   "signs": ("choice:default|trivial", "default")},
    "metric": {"rho": ("float", math.exp(-2)), "u": ("complex", 1j), "nr": ("int", 257),
               "ntheta": ("int", 64)},
    "spectrum": {"r": ("floats", list(C.SPECTRUM_RS)), "t_trunc": ("float", 8.0),
                 "n": ("int", 8), "m": ("int", 64), "cap": ("choice:aps|dirichlet", "aps"),
                 "node": ("choice:matching|dirichlet", "matching"),
                 "measure": ("choice:dr|dtau", "dr"), "count": ("int", 4)},
    "graphcont": {"r": ("floats", [0.04, 0.01, 0.0025]), "window": ("float", 1.0),
                  "t_trunc": ("float", 8.0), "n": ("int", 4), "h": ("float", 0.05)},
    "divergence": {"ustar": ("complex", 1.0), "eps": ("floats", [1e-1, 1e-2, 1e-3, 1e-4])},
    "verify-all": {"only": ("strs", None), "tol": ("assign", None)},
    "sweep": {"experiment": ("choice:fiducial|glue|spectrum|divergence|model", "fiducial"),
              "param": ("str", None), "values": ("strs", None)},
}

HELP = {
    "residual": "residuals of a named or stored field pair",
    "model": "model solution residual and neck gluing",
    "fiducial": "fiducial family: residuals, det, decay of h_t",
    "glue": "cutoff-glued fiducial surrogate",
    "cohomology": "twisted cohomology table",
    "metric": "neck metric pairing against its closed form",
    "spectrum": "near-kernel counts of the neck dbar family",
    "graphcont": "graph-projection distance table",
    "divergence": "L2 divergence scan at a node",
    "verify-all": "run the acceptance suite",
    "sweep": "cartesian sweep of one parameter",
}


# -- config parsing -----------------------------------------------------------------

def _parse_complex(text):
    if isinstance(text, (int, float, complex)):
        return complex(text)
    text = str(text).strip()
    if text.startswith("{"):
        d = json.loads(text)
        if set(d) - {"re", "im"}:
            raise ValueError("complex objects take keys re, im")
        return complex(d.get("re", 0.0), d.get("im", 0.0))
    return complex(text.replace(" ", "").replace("i", "j"))


def _split(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    return [p for p in str(text).replace(",", " ").split() if p]


def coerce(kind, value, name):
    if value is None:
        return None
    try:
        if kind == "float":
            return float(value)
        if kind == "int":
            return int(value)
        if kind == "complex":
            return _parse_complex(value)
        if kind == "bool":
            if isinstance(value, bool):
                return value
            return {"1": True, "true": True, "yes": True, "0": False, "false": False,
                    "no": False}[str(value).lower()]
        if kind == "floats":
            vals = [float(v) for v in _split(value)]
        elif kind == "ints":
            vals = [int(v) for v in _split(value)]
        elif kind == "strs":
            vals = _split(value)
        elif kind == "assign":
            vals = {}
            for item in _split(value):
                k, _, v = item.partition("=")
                if k not in C.DEFAULT_TOLERANCES:
                    raise ValueError(f"unknown tolerance {k!r}")
                vals[k] = float(v)
            return vals
        elif kind.startswith("choice:"):
            choices = kind.split(":", 1)[1].split("|")
            if str(value) not in choices:
                raise ValueError(f"expected one of {choices}")
            return str(value)
        else:
            return str(value)
        if not vals:
            raise ValueError("empty list")
        return vals
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{name}: cannot parse {value!r} ({exc})") from exc


def load_config(path, command):
    """Read an INI file into {section: {key: raw}} after rejecting unknown keys."""
    if path is None:
        return {}, {}, {}
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    allowed = {"run": RUN_KEYS, "tolerances": C.DEFAULT_TOLERANCES, command: SCHEMAS[command]}
    for sec in cp.sections():
        if sec not in allowed:
            if sec in SCHEMAS:
                continue  # sections for other subcommands may share the file
            raise ConfigError(f"unknown config section [{sec}]")
        for key in cp[sec]:
            if key not in allowed[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
    get = lambda s: dict(cp[s]) if cp.has_section(s) else {}
    return get(command), get("run"), get("tolerances")


def resolve(args, command):
    file_params, file_run, file_tols = load_config(args.config, command)
    params = {}
    for key, (kind, default) in SCHEMAS[command].items():
        flag = getattr(args, key.replace("-", "_"), None)
        raw = flag if flag is not None else file_params.get(key, default)
        params[key] = coerce(kind, raw, key)
    run = {}
    for key, (kind, default) in RUN_KEYS.items():
        flag = getattr(args, key, None)
        run[key] = coerce(kind, flag if flag is not None else file_run.get(key, default), key)
    tols = {k: coerce("float", v, k) for k, v in file_tols.items()}
    if command == "verify-all" and params.get("tol"):
        tols.update(params["tol"])
    return params, run, tols


# -- experiments --------------------------------------------------------------------------

class Outcome:
    def __init__(self, payload, passed=True):
        self.payload = payload
        self.passed = passed
        self.tables = {}
        self.plots = {}
        self.lines = []


def _pair_for(params):
    if params["input"]:
        with open(params["input"]) as fh:
            return field_pair_from_json(json.load(fh))
    kind = params["pair"]
    if kind == "model":
        grid = LogPolarGrid.annulus(0.1, 1.0, 256, 128)
        return M.model_pair(M.ModelParameters(params["alpha"], params["c"]), grid)
    grid = M.default_disk_grid()
    if kind == "fiducial":
        return M.fiducial_pair(M.fiducial_profile(params["t"]), grid)
    if kind == "limiting":
        return M.limiting_fiducial_pair(grid)
    return M.pole_part_pair(grid)


def run_residual(p, run, tols):
    pair = _pair_for(p)
    A, Phi = pair.A, pair.Phi
    system = p["system"]
    if system == "full":
        rep = F.residual_full(A, Phi, p["degree"])
    elif system == "rescaled":
        rep = F.residual_rescaled(A, Phi, p["t"])
    elif system == "fixed_det":
        rep = F.residual_fixed_det(A, Phi)
    else:
        rep = F.residual_decoupled(A, Phi)
    out = Outcome(rep.as_dict())
    for name, d in rep.defects.items():
        out.lines.append(f"{name:12s} sup {d['sup']:.3e}  l2 {d['l2']:.3e}")
    return out


def run_model(p, run, tols):
    params = M.ModelParameters(p["alpha"], p["c"])
    grid = LogPolarGrid.annulus(0.1, 1.0, p["nr"], p["ntheta"])
    pair = M.model_pair(params, grid)
    res = F.residual_fixed_det(pair.A, pair.Phi).sup()
    glue = M.glue_model_neck(params, NodeParameter(p["t"]))
    ok = res <= C._tol(tols, "model_residual") and glue.max_mismatch <= C._tol(tols, "gluing")
    out = Outcome({"residual_sup": res, "gluing": glue.mismatch}, ok)
    out.lines.append(f"residual sup {res:.3e}; gluing mismatch {glue.max_mismatch:.3e}")
    return out


def run_fiducial(p, run, tols):
    ts = p["t"]
    rows, slope = C.fiducial_summary(ts, run["cache_dir"])
    ok = all(r["residual"] <= C._tol(tols, "fiducial_residual")
             and r["det_error"] <= C._tol(tols, "fiducial_det") for r in rows)
    out = Outcome({"rows": rows, "decay_slope": slope}, ok)
    out.tables["fiducial"] = (rows, ["t", "residual", "det_error", "sup_h"])
    out.lines += [f"t={r['t']:g} residual {r['residual']:.3e} det err {r['det_error']:.1e} "
                  f"sup|h| {r['sup_h']:.4e}" for r in rows]
    out.lines.append(f"log-linear decay slope of sup|h_t|: {slope}")

    def plot(ax):
        r = np.geomspace(0.02, 1.0, 300)
        for t in ts:
            ax.plot(r, M.fiducial_profile(t, cache_dir=run["cache_dir"]).h(r), label=f"t={t:g}")
        ax.set_xscale("log")
        ax.set_xlabel("r")
        ax.set_ylabel("h_t(r)")
        ax.legend()
    out.plots["fiducial_profiles"] = plot
    return out


def run_glue(p, run, tols):
    results, sups, slope = M.glue_sweep(p["t"], p["rc"], p["cutoff"], cache_dir=run["cache_dir"])
    rows = [{"t": r.t, "sup": r.report.sup(), "outside_sup": r.outside_sup} for r in results]
    out = Outcome({"rows": rows, "log_slope": slope})
    out.tables["glue"] = (rows, ["t", "sup", "outside_sup"])
    out.lines += [f"t={r['t']:g} sup {r['sup']:.3e} outside {r['outside_sup']:.3e}" for r in rows]
    out.lines.append(f"log-linear slope: {slope}")

    def plot(ax):
        ax.semilogy([r["t"] for r in rows], [r["sup"] for r in rows], "o-")
        ax.set_xlabel("t")
        ax.set_ylabel("sup residual")
    out.plots["glue_decay"] = plot
    return out


def run_cohomology(p, run, tols):
    signs = "trivial" if p["signs"] == "trivial" else None
    rows = [S.cohomology_row(g, p["punctures"], signs) for g in p["genus"]]
    out = Outcome({"rows": rows}, all(r["euler_ok"] for r in rows))
    out.lines.append("(genus, k, h0, h1, h2, chi, expected 6(g-1), match)")
    for r in rows:
        out.lines.append(f"({r['genus']}, {r['punctures']}, {r['h0']}, {r['h1']}, {r['h2']}, "
                         f"{r['chi']}, {r['expected']}, {'MATCH' if r['match'] else 'DIFFER'})")
    out.tables["cohomology"] = (rows, ["genus", "punctures", "h0", "h1", "h2", "chi",
                                       "expected", "match"])
    return out


def run_metric(p, run, tols):
    grid = LogPolarGrid.annulus(p["rho"], 1.0, p["nr"], p["ntheta"])
    form = S.NeckLineBundleForm(grid, p["u"])
    G = S.metric_pairing(form, form)
    exact = 16 * np.pi * math.log(1 / p["rho"]) * abs(p["u"]) ** 2
    out = Outcome({"G": G, "closed_form": exact}, abs(G - exact) <= 1e-6 * max(1.0, exact))
    out.lines.append(f"G = {G:.10g}; closed form 16 pi log(1/rho)|u|^2 = {exact:.10g}")
    return out


def run_spectrum(p, run, tols):
    rows, counts = [], {}
    for R in p["r"]:
        fam = L.assemble_b_family(R, p["t_trunc"], p["n"], p["m"], cap=p["cap"],
                                  node=p["node"], measure=p["measure"])
        spectrum = L.small_singular_values(fam, p["count"])
        rows += list(spectrum.rows())
        counts[R] = {"count": spectrum.count, "oracle": L.analytic_kernel_count(fam),
                     "threshold": spectrum.threshold, "gap_ratio": spectrum.gap_ratio}
    ok = all(c["count"] == c["oracle"] for c in counts.values())
    out = Outcome({"counts": {str(k): v for k, v in counts.items()}}, ok)
    out.tables["spectrum"] = (rows, ["R", "mode", "index", "sigma"])
    for R, c in counts.items():
        out.lines.append(f"R={R:g}: near-kernel count {c['count']} (oracle {c['oracle']}), "
                         f"threshold {c['threshold']:.2e}, gap ratio {c['gap_ratio']:.2e}")

    def plot(ax):
        for R in p["r"]:
            sel = [r for r in rows if r["R"] == R and r["index"] == 0]
            ax.semilogy([r["mode"] for r in sel], [max(r["sigma"], 1e-18) for r in sel], "o",
                        label=f"R={R:g}")
        ax.set_xlabel("mode")
        ax.set_ylabel("smallest singular value")
        ax.legend()
    out.plots["spectrum"] = plot
    return out


def run_graphcont(p, run, tols):
    rows = L.graph_continuity_experiment(p["r"], p["window"], p["t_trunc"], p["n"], p["h"])
    half = L.graph_continuity_experiment(p["r"], 0.5 * p["window"], p["t_trunc"], p["n"], p["h"])
    d = [r["distance"] for r in rows]
    decreasing = all(a > b for a, b in zip(d, d[1:]))
    out = Outcome({"rows": rows, "half_window": half, "decreasing": decreasing})
    out.tables["graphcont"] = (rows + half, ["R", "distance", "window"])
    out.lines += [f"R={r['R']:g} window {r['window']:g}: distance {r['distance']:.4e}"
                  for r in rows + half]
    out.lines.append(f"distances decrease toward R=0: {decreasing} (reported, not asserted)")
    return out


def run_divergence(p, run, tols):
    eps = p["eps"]
    if len(eps) == 1:
        k = max(1, int(round(-math.log10(eps[0]))))
        eps = list(np.geomspace(1e-1, eps[0], k)) if k > 1 else eps
    scan = L.l2_divergence_scan(p["ustar"], eps)
    rel = (abs(scan.slope - scan.expected_slope) / scan.expected_slope
           if scan.expected_slope else abs(scan.slope))
    out = Outcome({"eps": scan.eps, "norms": scan.norms, "slope": scan.slope,
                   "expected_slope": scan.expected_slope}, rel <= C._tol(tols, "divergence_rel"))
    out.tables["divergence"] = (list(scan.rows()), ["eps", "log_inv_eps", "norm"])
    out.lines.append(f"fitted slope {scan.slope:.4f} (2 pi |u*|^2 = {scan.expected_slope:.4f})")
    return out


def run_verify_all(p, run, tols):
    unknown = set(p["only"] or ()) - set(C.CHECKS)
    if unknown:
        raise ConfigError(f"unknown criteria {sorted(unknown)}; choose from {list(C.CHECKS)}")
    results = []
    for key, fn in C.CHECKS.items():
        if p["only"] and key not in p["only"]:
            continue
        res = fn(tols, cache_dir=run["cache_dir"]) if key == "fiducial" else fn(tols)
        results.append(res)
        print(res.line(), flush=True)
    ok = all(r.passed for r in results)
    out = Outcome({"criteria": [r.as_dict() for r in results], "tolerances":
                   dict(C.DEFAULT_TOLERANCES, **tols)}, ok)
    failed = [r.key for r in results if not r.passed]
    out.lines.append("all criteria passed" if ok else f"failed: {', '.join(failed)}")
    return out


RUNNERS = {"residual": run_residual, "model": run_model, "fiducial": run_fiducial,
           "glue": run_glue, "cohomology": run_cohomology, "metric": run_metric,
           "spectrum": run_spectrum, "graphcont": run_graphcont, "divergence": run_divergence,
           "verify-all": run_verify_all}


SWEEP_METRICS = {
    "fiducial": ("sup_h", lambda pl: pl["rows"][0]["sup_h"]),
    "glue": ("sup", lambda pl: pl["rows"][0]["sup"]),
    "spectrum": ("count", lambda pl: next(iter(pl["counts"].values()))["count"]),
    "divergence": ("slope", lambda pl: pl["slope"]),
    "model": ("residual_sup", lambda pl: pl["residual_sup"]),
}


def run_sweep(p, run, tols, args):
    exp = p["experiment"]
    if not p["param"] or not p["values"]:
        raise ConfigError("sweep needs --param and a non-empty --values range")
    schema = SCHEMAS[exp]
    if p["param"] not in schema:
        raise ConfigError(f"{exp} has no parameter {p['param']!r}")
    kind = schema[p["param"]][0]
    metric, pick = SWEEP_METRICS[exp]
    base_kind = kind[:-1] if kind in ("floats", "ints", "strs") else kind
    points = [coerce(base_kind, v, p["param"]) for v in p["values"]]

    def one(value):
        sub = argparse.Namespace(config=args.config, **{k: None for k in RUN_KEYS})
        for key in schema:
            setattr(sub, key, None)
        setattr(sub, p["param"], [value] if kind in ("floats", "ints", "strs") else value)
        params, _, _ = resolve(sub, exp)
        res = RUNNERS[exp](params, run, tols)
        rec = RunRecord(exp, {"params": params, "run": run, "tolerances": tols}).finish(
            res.payload, res.passed)
        path = rec.write(run["out"])
        return {"value": value, metric: pick(res.payload), "passed": res.passed,
                "record": str(path),
                "summary": res.lines[-1] if res.lines else ""}

    workers = max(1, min(len(points), os.cpu_count() or 1))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        summary = list(pool.map(one, points))
    out = Outcome({"experiment": exp, "param": p["param"], "points": summary},
                  all(s["passed"] for s in summary))
    out.lines += [f"{p['param']}={s['value']}: {s['summary']}" for s in summary]
    out.tables["sweep"] = (summary, ["value", metric, "passed", "record", "summary"])
    return out


# -- driver ---------------------------------------------------------------------------------

def _flag_type(kind):
    if kind in ("floats", "ints", "strs", "assign"):
        return dict(nargs="+")
    return {}


FLAG_ALIASES = {"r": ["--R", "--r"], "n": ["--N", "--n"], "m": ["--M", "--m"],
                "t_trunc": ["--T", "--t-trunc"], "c": ["--C", "--c"]}


def build_parser():
    ap = argparse.ArgumentParser(prog="higgsneck", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    subs = ap.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        sp = subs.add_parser(name, help=HELP[name])
        sp.add_argument("--config", default=None, help="INI config file")
        sp.add_argument("--out", default=None, help="output directory for records")
        sp.add_argument("--cache-dir", dest="cache_dir", default=None)
        sp.add_argument("--seed", default=None)
        sp.add_argument("--no-plots", dest="plots", action="store_const", const=False,
                        default=None)
        for key, (kind, default) in schema.items():
            flags = FLAG_ALIASES.get(key, ["--" + key.replace("_", "-")])
            sp.add_argument(*flags, dest=key, default=None, help=f"{kind} (default {default})",
                            **_flag_type(kind))
    return ap


def _emit_plots(out, run, rec):
    if not run["plots"] or not out.plots:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    for name, draw in out.plots.items():
        fig, ax = plt.subplots(figsize=(5, 3.5))
        draw(ax)
        fig.tight_layout()
        path = Path(run["out"]) / f"{rec.stem()}-{name}.svg"
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path)
        plt.close(fig)
        rec.artifacts[name] = str(path)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        params, run, tols = resolve(args, args.command)
        if run["cache_dir"]:
            os.environ[M.CACHE_ENV] = run["cache_dir"]
        t0 = time.perf_counter()
        if args.command == "sweep":
            out = run_sweep(params, run, tols, args)
        else:
            out = RUNNERS[args.command](params, run, tols)
        rec = RunRecord(args.command, {"params": params, "run": run, "tolerances": tols})
        for name, (rows, header) in out.tables.items():
            path = Path(run["out"]) / f"{rec.stem()}-{name}.csv"
            write_csv(path, rows, header)
            rec.artifacts[name] = str(path)
        _emit_plots(out, run, rec)
        rec.finish(out.payload, out.passed)
        path = rec.write(run["out"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"numerical failure: {exc}\n{dumps(exc.diagnostics)}", file=sys.stderr)
        return EXIT_NUMERIC
    except HiggsNeckError as exc:
        numeric = exc.code in ("resolution-error", "inconclusive-classification")
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if numeric else EXIT_CONFIG
    for line in out.lines:
        print(line)
    print(f"record: {path} ({time.perf_counter() - t0:.1f}s)")
    return EXIT_OK if out.passed else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

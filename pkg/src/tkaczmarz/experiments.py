"""Named experiment protocols: seeded trial batches with median/IQR summaries.

Each protocol expands into a list of runs ``(label, trial)``.  Runs are
independent and deterministic given the trial seed, so they can be farmed out
to worker processes (``TKACZMARZ_WORKERS``, default 1); results are merged in
run order, which makes the output independent of the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .generators import CASES, gen_case, gen_consistent, gen_inconsistent
from .io import write_json
from .sampling import make_all_of_size, make_equal_partition, make_variable_partition
from .solvers import SolverConfig, factbrek, factbrk, matricized_equivalents, scale_blocks

__all__ = ["PROTOCOLS", "ExperimentOptions", "run_protocol", "summarize", "default_workers"]

WORKERS_ENV = "TKACZMARZ_WORKERS"
FIG_DIMS = (40, 10, 5, 5, 7)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


@dataclass
class ExperimentOptions:
    trials: int = 10
    seed: int = 0
    iters: int | None = None
    trace_every: int = 10
    eps: float = 1e-4
    workers: int | None = None
    full_menu: bool = False
    cases: tuple[str, ...] | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class _Run:
    label: str
    trial: int
    system: tuple          # ("fig", consistent?, seed, eps) or ("case", id, seed)
    algorithm: str
    outer: tuple           # ("size", k) | ("equal", k) | ("variable", k, spread)
    inner: tuple
    iters: int
    trace_every: int
    reference: str = "X_dag"
    matricized: bool = False


def _family(spec, rows, seed):
    kind = spec[0]
    if kind == "size":
        return make_all_of_size(rows, spec[1])
    if kind == "equal":
        return make_equal_partition(rows, spec[1], seed)
    if kind == "variable":
        return make_variable_partition(rows, spec[1], spec[2], seed)
    raise ConfigError(f"unknown block family spec {spec!r}")


def _build_system(spec):
    if spec[0] == "fig":
        _, consistent, seed, eps = spec
        if consistent:
            return gen_consistent(*FIG_DIMS, seed)
        return gen_inconsistent(*FIG_DIMS, seed, eps)
    if spec[0] == "case":
        return gen_case(spec[1], spec[2])
    raise ConfigError(f"unknown system spec {spec!r}")


def _execute(run: _Run) -> dict:
    sys = _build_system(run.system)
    seed = run.system[2]
    bu = _family(run.outer, sys.U.shape[0], seed)
    bv = _family(run.inner, sys.V.shape[0], seed)
    if run.matricized:
        p = sys.U.shape[2]
        sys = matricized_equivalents(sys)
        bu, bv = scale_blocks(bu, p), scale_blocks(bv, p)
    cfg = SolverConfig(max_iters=run.iters, seed=seed, trace_every=run.trace_every,
                       reference=getattr(sys, run.reference))
    fn = {"factbrk": factbrk, "factbrek": factbrek}[run.algorithm]
    tr = fn(sys, bu, bv, cfg)
    return {"label": run.label, "trial": run.trial, "seed": seed, "records": tr.records,
            "metric": tr.metric, "residual_final": tr.residual_final}


def _seeds(opts):
    return [opts.seed + i for i in range(opts.trials)]


def _fig1(opts):
    iters = opts.iters or 2000
    runs = []
    for consistent in (True, False):
        for alg in ("factbrk", "factbrek"):
            for mu in (1, 5, 10):
                label = f"{alg}_{'consistent' if consistent else 'inconsistent'}_mu{mu}_nu1"
                for i, s in enumerate(_seeds(opts)):
                    runs.append(_Run(label, i, ("fig", consistent, s, opts.eps), alg,
                                     ("size", mu), ("size", 1), iters, opts.trace_every))
    return runs


def _fig2(opts):
    iters = opts.iters or 2000
    runs = []
    combos = [("factbrk", True), ("factbrek", False), ("factbrek", True)]
    for alg, consistent in combos:
        for mu in (1, 5, 10):
            label = f"{alg}_{'consistent' if consistent else 'inconsistent'}_mu{mu}_nu1"
            for i, s in enumerate(_seeds(opts)):
                runs.append(_Run(label, i, ("fig", consistent, s, opts.eps), alg,
                                 ("size", mu), ("size", 1), iters, opts.trace_every))
    return runs


def _fig3(opts):
    iters = opts.iters or 2000
    runs = []
    for consistent, alg in ((True, "factbrk"), (False, "factbrek")):
        for mu in (1, 5, 10):
            fams = [("all", ("size", mu)), ("equal", ("equal", mu))]
            if mu > 1:
                fams.append(("variable", ("variable", mu, max(1, mu // 2))))
            for name, fam in fams:
                label = f"{alg}_{'consistent' if consistent else 'inconsistent'}_{name}_mu{mu}_nu1"
                for i, s in enumerate(_seeds(opts)):
                    runs.append(_Run(label, i, ("fig", consistent, s, opts.eps), alg,
                                     fam, ("size", 1), iters, opts.trace_every))
    return runs


def _fig4(opts):
    iters = opts.iters or 2000
    runs = []
    for consistent, alg in ((True, "factbrk"), (False, "factbrek")):
        for mu in (1, 5, 10):
            for matricized in (False, True):
                tag = "matricized" if matricized else "tensor"
                label = f"{alg}_{'consistent' if consistent else 'inconsistent'}_{tag}_mu{mu}_nu1"
                for i, s in enumerate(_seeds(opts)):
                    runs.append(_Run(label, i, ("fig", consistent, s, opts.eps), alg,
                                     ("size", mu), ("size", 1), iters, opts.trace_every,
                                     matricized=matricized))
    return runs


def _case_runs(opts, case_ids, reference):
    iters = opts.iters or 1000
    runs = []
    for cid in case_ids:
        spec = CASES[cid]
        pairs = ([(mu, nu) for mu in spec.mu_sizes for nu in spec.nu_sizes]
                 if opts.full_menu else [(spec.mu_sizes[0], spec.nu_sizes[0])])
        for alg in ("factbrk", "factbrek"):
            for mu, nu in pairs:
                label = f"{alg}_case{cid}_mu{mu}_nu{nu}"
                for i, s in enumerate(_seeds(opts)):
                    runs.append(_Run(label, i, ("case", cid, s), alg, ("size", mu), ("size", nu),
                                     iters, opts.trace_every, reference=reference))
    return runs


def _table1(opts):
    return _case_runs(opts, opts.cases or tuple(CASES), "X_min")


def _appendix(opts):
    ids = opts.cases or tuple(c for c, s in CASES.items() if not s.theory_holds)
    return _case_runs(opts, ids, "X_min")


PROTOCOLS = {
    "fig1": _fig1,
    "fig2": _fig2,
    "fig3-blocks": _fig3,
    "fig4-matricized": _fig4,
    "table1": _table1,
    "appendix-divergence": _appendix,
}


def summarize(results: list[dict]) -> dict:
    """Per-label median and interquartile band of the traced values."""
    by_label: dict[str, list[dict]] = {}
    for r in results:
        by_label.setdefault(r["label"], []).append(r)
    out = {}
    for label, rs in by_label.items():
        ts = [t for t, _ in rs[0]["records"]]
        vals = np.array([[v for _, v in r["records"]] for r in rs])
        q25, med, q75 = np.quantile(vals, [0.25, 0.5, 0.75], axis=0)
        entry = {
            "metric": rs[0]["metric"],
            "trials": len(rs),
            "seeds": [r["seed"] for r in rs],
            "t": ts,
            "median": med.tolist(),
            "q25": q25.tolist(),
            "q75": q75.tolist(),
            "median_final": float(med[-1]),
        }
        if 10 in ts:
            i10 = ts.index(10)
            entry["median_t10"] = float(med[i10])
            entry["diverging"] = bool(med[-1] > med[i10])
        out[label] = entry
    return out


def run_protocol(name: str, opts: ExperimentOptions | None = None, out_dir=None) -> dict:
    """Run protocol ``name``; writes per-trial CSV traces and ``summary.json`` if ``out_dir`` is set."""
    if name not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {name!r}; expected one of {sorted(PROTOCOLS)}")
    opts = opts or ExperimentOptions()
    if opts.trials < 1:
        raise ConfigError("trials must be >= 1")
    if opts.cases:
        bad = [c for c in opts.cases if c not in CASES]
        if bad:
            raise ConfigError(f"unknown case ids {bad}")
    runs = PROTOCOLS[name](opts)
    workers = opts.workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute, runs))
    else:
        results = [_execute(r) for r in runs]
    summary = {
        "protocol": name,
        "options": {"trials": opts.trials, "seed": opts.seed, "iters": opts.iters,
                    "trace_every": opts.trace_every, "eps": opts.eps, "full_menu": opts.full_menu,
                    "cases": list(opts.cases) if opts.cases else None},
        "labels": summarize(results),
    }
    if out_dir is not None:
        out = Path(out_dir)
        for r in results:
            d = out / "traces" / r["label"]
            d.mkdir(parents=True, exist_ok=True)
            with open(d / f"seed_{r['seed']}.csv", "w") as fh:
                fh.write(f"t,{r['metric']}\n")
                for t, v in r["records"]:
                    fh.write(f"{t},{float(v)!r}\n")
        write_json(out / "summary.json", summary)
    return summary

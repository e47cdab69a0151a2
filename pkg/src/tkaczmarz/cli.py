"""Command-line entry point: ``tkaczmarz <command> [options]``.

Exit codes: 0 success, 2 configuration or usage error, 3 assumption
violation (a singular gram somewhere), 1 anything else.

Every command accepts ``--config FILE`` (YAML).  Keys are the long option
names with dashes or underscores, either at the top level or nested under the
command name; explicit flags override the file.  The ``run_manifest.json``
each command writes is itself a valid config, so any run can be repeated with
``tkaczmarz <command> --config <out>/run_manifest.json``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .deblur import (
    BlurKernel,
    averaging_kernel,
    blur_video,
    custom_kernel,
    deblur_factorized,
    gaussian_kernel,
    smooth_video,
)
from .errors import AssumptionViolation, ConfigError, GenerationError, ShapeError
from .experiments import PROTOCOLS, ExperimentOptions, run_protocol
from .generators import CASES, gen_case, gen_consistent, gen_inconsistent
from .io import load_config, read_csv_slice, read_frames, read_system, write_frames, write_json, write_system, write_t3d1
from .sampling import (
    BlockSet,
    make_all_of_size,
    make_equal_partition,
    make_variable_partition,
)
from .solvers import SolverConfig, factbrek, factbrk, matricized_equivalents, scale_blocks, tbrek, tbrk, trk
from .tensor import fro_norm
from .theory import bound_curve, check_unique_minimizer, compute_constants

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_ASSUMPTION = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# helpers


def _family(kind: str, rows: int, size: int, seed: int, spread: int | None) -> BlockSet:
    if kind == "all":
        return make_all_of_size(rows, size)
    if kind == "equal":
        return make_equal_partition(rows, size, seed)
    if kind == "variable":
        return make_variable_partition(rows, size, spread if spread is not None else max(1, size // 2), seed)
    raise ConfigError(f"unknown block family {kind!r}")


def _blocks(args, sys):
    bu = _family(args.mu_family, sys.U.shape[0], args.mu_size, args.seed, args.mu_spread)
    bv = _family("all", sys.V.shape[0], args.nu_size, args.seed, None)
    if getattr(args, "sigma_weighted", False):
        bu = bu.with_sigma_weights(sys.U)
        bv = bv.with_sigma_weights(sys.V)
    return bu, bv


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _kernel(spec: str) -> BlurKernel:
    """``gaussian[:size[:sigma]]``, ``averaging[:size]``, ``delta`` or ``csv:PATH``."""
    parts = spec.split(":")
    kind = parts[0]
    try:
        if kind == "gaussian":
            size = int(parts[1]) if len(parts) > 1 else 5
            sigma = float(parts[2]) if len(parts) > 2 else 1.0
            return gaussian_kernel(size, sigma)
        if kind == "averaging":
            return averaging_kernel(int(parts[1]) if len(parts) > 1 else 5)
        if kind == "delta":
            return custom_kernel([[1.0]])
        if kind == "csv":
            return custom_kernel(read_csv_slice(":".join(parts[1:])))
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad kernel spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown kernel {spec!r}; use gaussian[:size[:sigma]], averaging[:size], delta or csv:PATH")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, out: Path, extra: dict | None = None) -> None:
    doc = {"command": args.command, "version": __version__,
           "args": {k: v for k, v in vars(args).items() if k not in ("func", "config")}}
    if extra:
        doc.update(extra)
    write_json(out / "run_manifest.json", doc)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    if args.case:
        sys_ = gen_case(args.case, args.seed, 0.0 if args.consistent else args.eps)
    else:
        missing = [k for k in ("m", "m1", "n", "l", "p") if getattr(args, k) is None]
        if missing:
            raise ConfigError(f"missing dimensions: {', '.join('--' + k for k in missing)} (or pass --case)")
        dims = (args.m, args.m1, args.n, args.l, args.p)
        if args.consistent or args.eps == 0:
            sys_ = gen_consistent(*dims, args.seed)
        else:
            sys_ = gen_inconsistent(*dims, args.seed, args.eps)
    out = _out_dir(args)
    write_system(out, sys_, {"uniqueness": vars(check_unique_minimizer(sys_.U))})
    _manifest(args, out)
    print(f"wrote system {sys_.dims} to {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    sys_ = read_system(args.system)
    cfg_kw = dict(max_iters=args.iters, seed=args.seed, trace_every=args.trace_every, stop_tol=args.stop_tol)
    alg = args.alg
    if alg in ("trk", "tbrk", "tbrek"):
        U, Y = sys_.U, sys_.Y
        ref = sys_.Z_dag if args.reference != "none" else None
        cfg = SolverConfig(reference=ref, **cfg_kw)
        if alg == "trk":
            tr = trk(U, Y, cfg)
        else:
            bu = _family(args.mu_family, U.shape[0], args.mu_size, args.seed, args.mu_spread)
            tr = (tbrk if alg == "tbrk" else tbrek)(U, Y, bu, cfg)
    else:
        bu, bv = _blocks(args, sys_)
        if args.matricized:
            p = sys_.U.shape[2]
            sys_ = matricized_equivalents(sys_)
            bu, bv = scale_blocks(bu, p), scale_blocks(bv, p)
        ref = None if args.reference == "none" else getattr(sys_, args.reference)
        cfg = SolverConfig(reference=ref, **cfg_kw)
        tr = (factbrk if alg == "factbrk" else factbrek)(sys_, bu, bv, cfg)
    out = _out_dir(args)
    tr.to_csv(out / "trace.csv")
    tr.meta["reference"] = args.reference
    tr.to_json(out / "trace.json")
    write_t3d1(out / "X_final.t3d1", tr.final_iterate)
    _manifest(args, out)
    print(f"{alg}: {tr.metric} {tr.final_value:.3e} after {tr.records[-1][0]} iterations")
    return EXIT_OK


def _constants(args, sys_):
    bu, bv = _blocks(args, sys_)
    return compute_constants(sys_.U, sys_.V, bu, bv, floor=args.floor,
                             monte_carlo=args.monte_carlo, seed=args.seed)


def _emit(args, doc):
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)


def cmd_constants(args) -> int:
    sys_ = read_system(args.system)
    k = _constants(args, sys_)
    _emit(args, {"constants": k.to_dict(), "uniqueness": vars(check_unique_minimizer(sys_.U))})
    return EXIT_OK


def cmd_bounds(args) -> int:
    sys_ = read_system(args.system).with_references()
    k = _constants(args, sys_)
    ts = _ints(args.t_grid)
    norm = fro_norm(sys_.X_dag)
    doc = {"constants": k.to_dict(), "t": ts, "norm_X_dag": norm, "curves": {}}
    for kind in ("factbrk", "factbrek"):
        try:
            doc["curves"][kind] = bound_curve(kind, ts, k, norm)
        except ConfigError as exc:
            doc["curves"][kind] = None
            doc.setdefault("notes", []).append(f"{kind}: {exc}")
    # TBREK on the outer system alone: its reference is Z_dag
    k1 = compute_constants(sys_.U, None, _blocks(args, sys_)[0], floor=args.floor,
                           monte_carlo=args.monte_carlo, seed=args.seed)
    doc["curves"]["tbrek"] = bound_curve("tbrek", ts, k1, fro_norm(sys_.Z_dag))
    doc["constants_outer_only"] = k1.to_dict()
    _emit(args, doc)
    return EXIT_OK


def cmd_experiment(args) -> int:
    opts = ExperimentOptions(trials=args.trials, seed=args.seed, iters=args.iters, trace_every=args.trace_every,
                             eps=args.eps, workers=args.workers, full_menu=args.full_menu,
                             cases=tuple(args.cases.split(",")) if args.cases else None)
    out = _out_dir(args)
    summary = run_protocol(args.protocol, opts, out)
    _manifest(args, out)
    for label, e in summary["labels"].items():
        flag = " diverging" if e.get("diverging") else ""
        print(f"{label}: median final {e['metric']} {e['median_final']:.3e}{flag}")
    return EXIT_OK


def cmd_deblur(args) -> int:
    k1, k2 = _kernel(args.kernel1), _kernel(args.kernel2)
    out = _out_dir(args)
    truth = None
    if args.frames:
        frames = read_frames(args.frames)
        blurred = blur_video(frames, k1, k2) if args.blur_input else frames
        if args.blur_input:
            truth = frames
    else:
        m, n, p = (128, 128, 128) if args.full else tuple(_ints(args.fixture))
        truth = smooth_video(m, n, p, seed=args.seed)
        blurred = blur_video(truth, k1, k2)
    cfg = SolverConfig(max_iters=args.iters, seed=args.seed, trace_every=args.trace_every, stop_tol=args.stop_tol)
    rec, tr = deblur_factorized(blurred, k1, k2, args.alg, cfg=cfg)
    tr.to_csv(out / "trace.csv")
    tr.to_json(out / "trace.json")
    write_frames(out / "recovered", rec)
    write_frames(out / "blurred", blurred)
    extra = {"residual_final": tr.residual_final}
    if truth is not None:
        extra["max_pixel_error"] = float(np.abs(rec - truth).max())
    _manifest(args, out, extra)
    msg = f"deblur: residual {tr.residual_final:.3e} after {tr.records[-1][0]} iterations"
    if truth is not None:
        msg += f", max pixel error {extra['max_pixel_error']:.3e}"
    print(msg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--config", help="YAML file with option values")
    p.add_argument("--seed", type=int, default=0)


def _add_blocks(p):
    p.add_argument("--mu-size", type=int, default=1, help="outer block size")
    p.add_argument("--nu-size", type=int, default=1, help="inner block size")
    p.add_argument("--mu-family", choices=("all", "equal", "variable"), default="all",
                   help="outer family: all blocks of the size, an equal partition, or a variable partition")
    p.add_argument("--mu-spread", type=int, default=None, help="size spread of a variable partition")
    p.add_argument("--sigma-weighted", action="store_true", help="sample blocks proportionally to sigma_min+^2")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tkaczmarz", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic factorized system")
    _add_common(g)
    for k in ("m", "m1", "n", "l", "p"):
        g.add_argument(f"--{k}", type=int)
    g.add_argument("--case", choices=sorted(CASES))
    g.add_argument("--eps", type=float, default=1e-4, help="perturbation size of the inconsistent system")
    g.add_argument("--consistent", action="store_true")
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run a solver on a stored system")
    _add_common(s)
    s.add_argument("--system", required=True)
    s.add_argument("--alg", required=True, choices=("trk", "tbrk", "tbrek", "factbrk", "factbrek"))
    _add_blocks(s)
    s.add_argument("--iters", type=int, default=1000)
    s.add_argument("--trace-every", type=int, default=1)
    s.add_argument("--stop-tol", type=float)
    s.add_argument("--matricized", action="store_true", help="solve the bcirc/unfold system with p-scaled blocks")
    s.add_argument("--reference", choices=("X_dag", "X_min", "none"), default="X_dag")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_solve)

    for name, fn, helptext in (("constants", cmd_constants, "convergence constants as JSON"),
                               ("bounds", cmd_bounds, "bound curves over a t grid as JSON")):
        c = sub.add_parser(name, help=helptext)
        _add_common(c)
        c.add_argument("--system", required=True)
        _add_blocks(c)
        c.add_argument("--floor", choices=("sigma_min", "range"), default="sigma_min")
        c.add_argument("--monte-carlo", type=int, help="sample count for families too large to enumerate")
        c.add_argument("--out", help="write JSON here instead of stdout")
        if name == "bounds":
            c.add_argument("--t-grid", default="0,1,5,10,20,50,100")
        c.set_defaults(func=fn)

    e = sub.add_parser("experiment", help="run a named experiment protocol")
    _add_common(e)
    e.add_argument("--protocol", required=True, choices=sorted(PROTOCOLS))
    e.add_argument("--trials", type=int, default=10)
    e.add_argument("--iters", type=int)
    e.add_argument("--trace-every", type=int, default=10)
    e.add_argument("--eps", type=float, default=1e-4)
    e.add_argument("--workers", type=int, help="worker processes (default: $TKACZMARZ_WORKERS or 1)")
    e.add_argument("--full-menu", action="store_true", help="sweep every block-size pair of each case")
    e.add_argument("--cases", help="comma-separated case ids")
    e.add_argument("--out-dir", required=True)
    e.set_defaults(func=cmd_experiment)

    d = sub.add_parser("deblur", help="deblur a twice-blurred video")
    _add_common(d)
    d.add_argument("--frames", help="directory of PGM frames or a T3D1 video (height x width x frames)")
    d.add_argument("--blur-input", action="store_true", help="treat --frames as clean and blur them first")
    d.add_argument("--fixture", default="32,32,4", help="size of the synthetic video when --frames is absent")
    d.add_argument("--full", action="store_true", help="use a 128x128x128 synthetic video")
    d.add_argument("--kernel1", default="gaussian:5:1.0", help="first blur (the outer factor U)")
    d.add_argument("--kernel2", default="averaging:5", help="second blur (the inner factor V)")
    d.add_argument("--alg", choices=("factbrk", "factbrek"), default="factbrk")
    d.add_argument("--iters", type=int, default=20000)
    d.add_argument("--trace-every", type=int, default=100)
    d.add_argument("--stop-tol", type=float)
    d.add_argument("--out-dir", required=True)
    d.set_defaults(func=cmd_deblur)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subs = parser._subparsers._group_actions[0].choices
    if known.config and known.command in subs:
        doc = load_config(known.config)
        if isinstance(doc.get("args"), dict) and "command" in doc:
            # a run_manifest.json written by a previous invocation
            flat = {k: v for k, v in doc["args"].items() if k != "command"}
        else:
            flat = {k: v for k, v in doc.items() if not isinstance(v, dict)}
            flat.update(doc.get(known.command, {}) or {})
        sub = subs[known.command]
        dests = {a.dest: a for a in sub._actions}
        values = {}
        for k, v in flat.items():
            key = str(k).replace("-", "_")
            if key not in dests or key in ("help", "config"):
                raise ConfigError(f"config key {k!r} is not an option of {known.command!r}")
            values[key] = v
            # the file satisfies required options; explicit flags still win
            dests[key].required = False
        sub.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (ConfigError, ShapeError, GenerationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

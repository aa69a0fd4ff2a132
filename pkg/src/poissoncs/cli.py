"""Command-line entry point: ``poissoncs <command> [options]``.

Exit codes: 0 on success, 1 when ``verify`` finds a failing check, 2 on a
configuration error.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .basis import KINDS, build_basis
from .errors import ConfigurationError, PoissonCSError
from .harness import (
    DESK_PARAMS,
    PRESETS,
    TRIAL_FIELDS,
    SweepConfig,
    load_weights,
    preset,
    run_sweep,
    run_verification_suite,
)
from .model import sample_observation
from .sensing import RawEnsemble, embed_physical, sample_bernoulli_ensemble, sample_uniform_ensemble
from .signal import SignalSpec, generate_signal
from .solver import (
    ReducedProblem,
    fit_lasso,
    fit_poisson_mle_l1,
    fit_weighted_lasso,
    poisson_lambda_scale,
    theoretical_lambda,
)
from .theory import (
    RateParams,
    effective_sparsity,
    minimax_lower_rate,
    regime_flags,
    upper_rate,
    wlasso_rate_comparison,
)


def _load_config(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    return doc


def _opt(args, cfg, name, default):
    """Command-line value, else config value, else default."""
    val = getattr(args, name, None)
    if val is not None:
        return val
    return cfg.get(name, default)


def _emit_text(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _emit_doc(doc, out):
    _emit_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n", out)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def _need_out(args):
    if args.out is None:
        raise ConfigurationError(f"{args.command} needs --out")
    return args.out


def cmd_gen_matrix(args, cfg):
    n = int(_opt(args, cfg, "n", 400))
    p = int(_opt(args, cfg, "p", 256))
    a_lo = float(_opt(args, cfg, "a_lo", -1.0))
    a_hi = float(_opt(args, cfg, "a_hi", 1.0))
    seed = int(_opt(args, cfg, "seed", 0))
    if (a_lo, a_hi) == (-1.0, 1.0) and _opt(args, cfg, "ensemble", "bernoulli") == "bernoulli":
        raw = sample_bernoulli_ensemble(n, p, seed)
    else:
        raw = sample_uniform_ensemble(n, p, a_lo, a_hi, seed)
    M = raw.entries if args.raw else embed_physical(raw).entries
    out = _need_out(args)
    if args.format == "json":
        _emit_doc({"n": n, "p": p, "a_lo": a_lo, "a_hi": a_hi, "seed": seed, "raw": bool(args.raw),
                   "entries": M.tolist()}, out)
    else:
        io.save_matrix(out, M, a_lo, a_hi, seed, fmt="binary" if args.binary else "csv")
    return 0


def _load_A(path):
    X, meta = io.load_matrix(path)
    if X.min() < 0:
        # a raw ensemble was supplied; embed it
        X = embed_physical(RawEnsemble(X, meta["a_lo"], meta["a_hi"], meta.get("seed"))).entries
    return X, meta


def cmd_gen_signal(args, cfg):
    p = int(_opt(args, cfg, "p", 256))
    q = float(_opt(args, cfg, "q", 0.5))
    R_q = float(_opt(args, cfg, "R_q", 2.0))
    kind = _opt(args, cfg, "basis", "dct")
    seed = int(_opt(args, cfg, "seed", 0))
    truth = generate_signal(SignalSpec(p, q, R_q, build_basis(kind, p), seed))
    out = _need_out(args)
    if args.format == "json":
        _emit_doc({"p": p, "q": q, "R_q": R_q, "basis": kind, "seed": seed,
                   "theta": truth.theta.tolist(), "f": truth.f.tolist()}, out)
    else:
        io.save_signal(out, truth.theta, truth.f, p, q, R_q, kind, seed)
    return 0


def cmd_simulate(args, cfg):
    A, _ = _load_A(args.matrix)
    _, f, _ = io.load_signal(args.signal)
    T = float(_opt(args, cfg, "T", 1e7))
    seed = int(_opt(args, cfg, "seed", 0))
    obs = sample_observation(A, f, T, seed)
    out = _need_out(args)
    if args.format == "json":
        _emit_doc({"n": obs.n, "T": T, "seed": seed, "y": obs.y.tolist()}, out)
    else:
        io.save_observation(out, obs.y, T, seed)
    return 0


def cmd_fit(args, cfg):
    A, meta = _load_A(args.matrix)
    y, ometa = io.load_observation(args.observation)
    kind = _opt(args, cfg, "basis", "dct")
    basis = build_basis(kind, A.shape[1])
    T = ometa["T"]
    problem = ReducedProblem(y, A, basis, T)
    solver = _opt(args, cfg, "solver", "lasso")
    lam_arg = _opt(args, cfg, "lam", "theoretical")
    if str(lam_arg) == "theoretical":
        delta = _opt(args, cfg, "delta", None)
        if delta is None:
            raise ConfigurationError("the theoretical lambda needs --delta (an upper-RIP estimate)")
        lam = theoretical_lambda(T, basis.p, float(delta), meta["a_lo"], meta["a_hi"])
    else:
        try:
            lam = float(lam_arg)
        except ValueError:
            raise ConfigurationError(f"--lam must be a number or 'theoretical', got {lam_arg!r}") from None
    weights = None
    if args.weights:
        weights = load_weights(args.weights, basis.p - 1)
    if solver == "lasso":
        res = fit_lasso(problem, lam)
    elif solver == "wlasso":
        res = fit_weighted_lasso(problem, lam, weights, solver_name="wlasso")
    elif solver == "poisson_like":
        res = fit_poisson_mle_l1(problem, lam * poisson_lambda_scale(problem), weights=weights)
    else:
        raise ConfigurationError(f"unknown solver {solver!r}")
    out = _need_out(args)
    io.save_estimate(out, res, fmt=args.format)
    return 0


def cmd_sweep(args, cfg):
    if args.preset:
        config = preset(args.preset)
    elif cfg:
        config = SweepConfig.from_dict(cfg)
    else:
        raise ConfigurationError("sweep needs --config or --preset")
    if args.seed is not None:
        config = SweepConfig.from_dict({**config.to_dict(), "seed": args.seed})
    records, trials = run_sweep(config, workers=args.workers, return_trials=True)
    if args.format == "json":
        if args.out is None:
            _emit_doc({"config": config.to_dict(), "records": [r.to_dict() for r in records]}, None)
        else:
            io.emit_json(records, args.out, config)
    else:
        _emit_text(io.records_to_csv(records), args.out)
    if args.trials_out:
        Path(args.trials_out).write_text(io.table_to_csv(TRIAL_FIELDS, trials))
    return 0


def cmd_verify(args, cfg):
    params = dict(DESK_PARAMS)
    params.update({k: v for k, v in cfg.items() if k in DESK_PARAMS})
    seed = int(_opt(args, cfg, "seed", 0))
    report = run_verification_suite(params, seed=seed, quick=args.quick)
    if args.format == "json":
        _emit_doc(report.to_dict(), args.out)
    else:
        lines = ["check,passed,measured"]
        for it in report.items:
            lines.append(f"{it.name},{it.passed},\"{json.dumps(it.measured, default=_json_default)}\"")
        _emit_text("\n".join(lines) + "\n", args.out)
    for it in report.items:
        print(f"{'PASS' if it.passed else 'FAIL'} {it.name}", file=sys.stderr)
    return 0 if report.passed else 1


def cmd_rates(args, cfg):
    P = RateParams(
        p=int(_opt(args, cfg, "p", 1024)),
        n=int(_opt(args, cfg, "n", 1000)),
        T=float(_opt(args, cfg, "T", 1e8)),
        q=float(_opt(args, cfg, "q", 0.5)),
        R_q=float(_opt(args, cfg, "R_q", 7.0)),
        delta=float(_opt(args, cfg, "delta", 0.0)),
        a_lo=float(_opt(args, cfg, "a_lo", -1.0)),
        a_hi=float(_opt(args, cfg, "a_hi", 1.0)),
        basis_kind=_opt(args, cfg, "basis", "dct"),
    )
    lasso, wl, ratio = wlasso_rate_comparison(P)
    doc = {
        "params": P.__dict__,
        "K_tilde": effective_sparsity(P.R_q, P.q, P.p, P.T),
        "upper_rate": upper_rate(P),
        "lower_rate": minimax_lower_rate(P),
        "lambda_n": theoretical_lambda(P.T, P.p, P.delta, P.a_lo, P.a_hi),
        "regime": regime_flags(P).to_dict(),
        "wlasso_rate": wl,
        "wlasso_ratio": ratio,
    }
    if args.format == "csv":
        rows = ["quantity,value"] + [f"{k},{doc[k]!r}" for k in ("K_tilde", "upper_rate", "lower_rate", "lambda_n",
                                                                  "wlasso_rate", "wlasso_ratio")]
        _emit_text("\n".join(rows) + "\n", args.out)
    else:
        _emit_doc(doc, args.out)
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--config", default=None, help="JSON document with option values")
    common.add_argument("--out", default=None, help="output path (stdout where supported)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="poissoncs", description="Flux-constrained Poisson compressed sensing.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-matrix", parents=[common], help="sample and embed a sensing matrix")
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--ensemble", choices=("bernoulli", "uniform"))
    g.add_argument("--a-lo", dest="a_lo", type=float)
    g.add_argument("--a-hi", dest="a_hi", type=float)
    g.add_argument("--raw", action="store_true", help="write the raw ensemble instead of the embedded matrix")
    g.add_argument("--binary", action="store_true", help="flat binary instead of CSV")
    g.set_defaults(func=cmd_gen_matrix)

    g = sub.add_parser("gen-signal", parents=[common], help="draw a ground-truth signal")
    g.add_argument("--p", type=int)
    g.add_argument("--q", type=float)
    g.add_argument("--R-q", dest="R_q", type=float)
    g.add_argument("--basis", choices=KINDS)
    g.set_defaults(func=cmd_gen_signal)

    g = sub.add_parser("simulate", parents=[common], help="draw Poisson counts y ~ Poisson(T A f)")
    g.add_argument("--matrix", required=True)
    g.add_argument("--signal", required=True)
    g.add_argument("--T", type=float)
    g.set_defaults(func=cmd_simulate)

    g = sub.add_parser("fit", parents=[common], help="fit one estimator")
    g.add_argument("--matrix", required=True)
    g.add_argument("--observation", required=True)
    g.add_argument("--basis", choices=KINDS)
    g.add_argument("--solver", choices=("lasso", "wlasso", "poisson_like"))
    g.add_argument("--lam", help="regularisation value or 'theoretical'")
    g.add_argument("--delta", type=float, help="upper-RIP constant for the theoretical lambda")
    g.add_argument("--weights", default=None, help="weights file for wlasso / poisson_like")
    g.set_defaults(func=cmd_fit)

    g = sub.add_parser("sweep", parents=[common], help="run a Monte Carlo sweep")
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--trials-out", default=None, help="also write per-trial records as CSV")
    g.set_defaults(func=cmd_sweep)

    g = sub.add_parser("verify", parents=[common], help="run the verification suite")
    g.add_argument("--quick", action="store_true", help="skip the slow Monte Carlo parts")
    g.set_defaults(func=cmd_verify)

    g = sub.add_parser("rates", parents=[common], help="evaluate rate formulas and regime flags")
    g.add_argument("--p", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--T", type=float)
    g.add_argument("--q", type=float)
    g.add_argument("--R-q", dest="R_q", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--basis", choices=KINDS)
    g.set_defaults(func=cmd_rates)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (PoissonCSError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

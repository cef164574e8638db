"""Command-line entry point.

Every subcommand prints ``key: value`` lines, one metric per line, with
floats at 12 significant digits. Exit status is 0 on success, 1 on invalid
input (including bad flags) and 2 on numerical failure.

``--flip-sign`` is for endpoints where larger is better: location inputs
(eta, estimates, thresholds) are negated on the way in and location outputs
on the way out, so the smaller-is-better formulas apply unchanged.
Variances, standard errors and probabilities are never negated.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .conjugate import (
    NormalPrior,
    StudyEstimate,
    adjust_estimate,
    conditional_prediction,
    pos_large,
    shrink_weight,
)
from .dataio import (
    emit_plot_data,
    parse_estimates,
    parse_portfolio,
    pool_fixed_effect,
    write_plot_table,
)
from .errors import NumericalError, ValidationError
from .fit import HyperPriors, Portfolio, fit_gibbs, fit_gibbs_nested, fit_mle, prior_from_fit
from .fit.portfolio import CompoundRecord
from .sim import SimConfig, simulate

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _finite_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"must be finite: {text!r}")
    return value


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    if value is None:
        return "none"
    if isinstance(value, (list, tuple)):
        return ",".join(fmt(v) for v in value)
    return str(value)


def emit(out, pairs) -> None:
    for key, value in pairs:
        out.write(f"{key}: {fmt(value)}\n")


def flip(sign: float, value: float) -> float:
    """Apply the sign convention; ``flip(s, flip(s, x)) == x`` for ``s`` in {1, -1}."""
    return -value if sign < 0 else value


# ---------------------------------------------------------------------------
# subcommands


def _prior_from_args(args, sign):
    if args.fit is not None:
        if args.eta is not None or args.sigma2 is not None:
            raise ValidationError("give either --fit or --eta/--sigma2, not both")
        try:
            report = json.loads(Path(args.fit).read_text(encoding="utf-8"))
            stored = report["prior_" + args.prior_mode]
        except (OSError, ValueError, KeyError) as exc:
            raise ValidationError(f"cannot read prior from fit report {args.fit}: {exc}") from exc
        if stored is None:
            raise ValidationError(f"fit report has no {args.prior_mode} prior (sigma2 estimated as 0)")
        return NormalPrior(flip(sign, stored["eta"]), stored["sigma2"])
    if args.eta is None or args.sigma2 is None:
        raise ValidationError("a prior is required: --eta and --sigma2, or --fit")
    return NormalPrior(flip(sign, args.eta), args.sigma2)


def cmd_adjust(args, out, sign):
    prior = _prior_from_args(args, sign)
    small = StudyEstimate(flip(sign, args.estimate), args.stderr)
    adjusted = adjust_estimate(prior, small)
    pairs = [
        ("eta", flip(sign, prior.eta)),
        ("sigma2", prior.sigma2),
        ("estimate", args.estimate),
        ("stderr", args.stderr),
        ("shrink_weight", shrink_weight(prior, small.std_error)),
        ("adjusted", flip(sign, adjusted)),
        ("bias", flip(sign, adjusted - small.estimate)),
    ]
    if args.sigma_l is not None:
        cp = conditional_prediction(prior, small.std_error, args.sigma_l, small.estimate)
        pairs.append(("cond_var", cp.cond_var))
    pairs += [("flip_sign", sign < 0), ("seed", args.seed)]
    emit(out, pairs)


def cmd_pos(args, out, sign):
    prior = _prior_from_args(args, sign)
    s = flip(sign, args.estimate)
    delta = flip(sign, args.delta)
    cp = conditional_prediction(prior, args.stderr, args.sigma_l, s)
    emit(out, [
        ("eta", flip(sign, prior.eta)),
        ("sigma2", prior.sigma2),
        ("estimate", args.estimate),
        ("stderr", args.stderr),
        ("sigma_l", args.sigma_l),
        ("delta", args.delta),
        ("cond_mean", flip(sign, cp.cond_mean)),
        ("cond_var", cp.cond_var),
        ("bias", flip(sign, cp.bias)),
        ("pos", pos_large(prior, args.stderr, args.sigma_l, s, delta)),
        ("flip_sign", sign < 0),
        ("seed", args.seed),
    ])


def _flip_portfolio(portfolio: Portfolio, sign) -> Portfolio:
    if sign > 0:
        return portfolio
    return Portfolio(tuple(
        CompoundRecord(rec.compound_id, tuple(
            StudyEstimate(-st.estimate, st.std_error, st.label, st.phase) for st in rec.studies))
        for rec in portfolio.compounds
    ))


def cmd_fit(args, out, sign):
    portfolio = _flip_portfolio(parse_portfolio(args.input), sign)
    hyper = HyperPriors(args.eta_mean, args.eta_var, args.sigma2_shape, args.sigma2_rate)
    if args.method == "gibbs":
        res = fit_gibbs(portfolio, hyper, args.chains, args.iters, args.burn_in, args.seed)
    elif args.method == "gibbs-nested":
        res = fit_gibbs_nested(portfolio, hyper, (args.sigma_i2_shape, args.sigma_i2_rate),
                               args.chains, args.iters, args.burn_in, args.seed)
    else:
        res = fit_mle(portfolio)

    priors = {}
    for mode in ("plugin", "predictive"):
        try:
            p = prior_from_fit(res, mode)
            priors[mode] = {"eta": flip(sign, p.eta), "sigma2": p.sigma2}
        except ValidationError:
            priors[mode] = None

    pairs = [
        ("method", args.method),
        ("n_compounds", portfolio.n_compounds),
        ("n_studies", portfolio.n_studies),
        ("eta", flip(sign, res.eta_hat)),
        ("eta_se", res.se["eta"]),
        ("sigma2", res.sigma2_hat),
        ("sigma2_se", res.se["sigma2"]),
    ]
    for mode, p in priors.items():
        pairs.append((f"prior_{mode}_eta", None if p is None else p["eta"]))
        pairs.append((f"prior_{mode}_sigma2", None if p is None else p["sigma2"]))
    report = {
        "method": args.method,
        "seed": args.seed,
        "flip_sign": sign < 0,
        "n_compounds": portfolio.n_compounds,
        "n_studies": portfolio.n_studies,
        "eta": flip(sign, res.eta_hat),
        "eta_se": res.se["eta"],
        "sigma2": res.sigma2_hat,
        "sigma2_se": res.se["sigma2"],
        "prior_plugin": priors["plugin"],
        "prior_predictive": priors["predictive"],
        "warnings": list(res.warnings),
    }
    if res.is_sampled:
        d = res.diagnostics
        lo, hi = res.interval("eta", 0.9)
        lo, hi = sorted((flip(sign, lo), flip(sign, hi)))
        s_lo, s_hi = res.interval("sigma2", 0.9)
        pairs += [
            ("eta_ci90_lower", lo), ("eta_ci90_upper", hi),
            ("sigma2_ci90_lower", s_lo), ("sigma2_ci90_upper", s_hi),
            ("chains", args.chains), ("iters", args.iters), ("burn_in", args.burn_in),
            ("max_rhat", d.max_rhat() if d.rhat is not None else None),
            ("min_ess", d.min_ess()),
            ("converged", d.converged),
            ("n_flags", len(d.flags)),
        ]
        report.update({
            "chains": args.chains, "iters": args.iters, "burn_in": args.burn_in,
            "eta_ci90": [lo, hi], "sigma2_ci90": [s_lo, s_hi],
            "diagnostics": {
                "flags": list(d.flags),
                "notices": list(d.notices),
                "rhat": None if d.rhat is None else dict(zip(d.names, map(float, d.rhat))),
                "ess": dict(zip(d.names, map(float, d.ess))),
            },
        })
    else:
        pairs.append(("boundary", res.boundary))
        pairs.append(("log_likelihood", res.log_likelihood))
        report.update({"boundary": res.boundary, "log_likelihood": res.log_likelihood})
    pairs += [("n_warnings", len(res.warnings)), ("flip_sign", sign < 0), ("seed", args.seed)]
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        pairs.append(("report", args.out))
    emit(out, pairs)


def cmd_simulate(args, out, sign):
    delta = None if args.delta is None else flip(sign, args.delta)
    cfg = SimConfig(NormalPrior(flip(sign, args.eta), args.sigma2), args.sigma_s, args.sigma_l,
                    args.n, delta=delta, seed=args.seed)
    summ = simulate(cfg, raw_out=args.raw_out)
    se = summ.mc_se
    pairs = [
        ("n_draws", summ.n_draws),
        ("mean_theta", flip(sign, summ.mean_theta)), ("mean_theta_se", se["mean_theta"]),
        ("var_theta", summ.var_theta),
        ("mean_s_hat", flip(sign, summ.mean_s_hat)), ("mean_s_hat_se", se["mean_s_hat"]),
        ("var_s_hat", summ.var_s_hat),
        ("mean_l_hat", flip(sign, summ.mean_l_hat)), ("mean_l_hat_se", se["mean_l_hat"]),
        ("var_l_hat", summ.var_l_hat),
        ("corr_s_l", summ.corr_s_l),
        ("mean_adjusted", flip(sign, summ.mean_adjusted)),
    ]
    if delta is not None:
        pairs.append(("selected_fraction", summ.selected_fraction))
        sel = summ.selected
        if sel is not None:
            pairs += [
                ("selected_n", sel.n),
                ("selected_mean_s_hat", flip(sign, sel.s_hat)),
                ("selected_mean_theta", flip(sign, sel.theta)),
                ("selected_mean_l_hat", flip(sign, sel.l_hat)),
                ("selected_mean_adjusted", flip(sign, sel.adjusted)),
            ]
    pairs += [("flip_sign", sign < 0), ("seed", args.seed)]
    emit(out, pairs)


def cmd_pool(args, out, sign):
    ests = [StudyEstimate(flip(sign, e.estimate), e.std_error, e.label)
            for e in parse_estimates(args.input)]
    pooled = pool_fixed_effect(ests)
    emit(out, [
        ("n", len(ests)),
        ("estimate", flip(sign, pooled.estimate)),
        ("std_error", pooled.std_error),
        ("flip_sign", sign < 0),
        ("seed", args.seed),
    ])


def _parse_param(text):
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ValidationError(f"--param expects key=value, got {text!r}")
    parts = raw.split(",")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        return key, raw
    return key, nums if len(nums) > 1 or key.endswith("_grid") else nums[0]


def cmd_plot_data(args, out, sign):
    params = {}
    if args.params_file:
        try:
            params.update(json.loads(Path(args.params_file).read_text(encoding="utf-8")))
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot read params file {args.params_file}: {exc}") from exc
    for item in args.param or []:
        k, v = _parse_param(item)
        params[k] = v
    if sign < 0:
        raise ValidationError("plot-data does not support --flip-sign; negate the parameters instead")
    table = emit_plot_data(args.figure, params)
    if args.out:
        write_plot_table(table, args.out)
    else:
        write_plot_table(table, out)
        return
    emit(out, [
        ("figure", args.figure),
        ("rows", table.n_rows),
        ("columns", len(table.columns)),
        ("out", args.out),
        ("seed", args.seed),
    ])


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    common.add_argument("--flip-sign", action="store_true",
                        help="treat larger effects as better by negating locations")

    parser = _Parser(prog="selbias", description="Selection-bias adjustment of early-study effects.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    prior = _Parser(add_help=False)
    prior.add_argument("--eta", type=_finite_float)
    prior.add_argument("--sigma2", type=_finite_float)
    prior.add_argument("--fit", help="fit report JSON written by 'fit --out'")
    prior.add_argument("--prior-mode", choices=("plugin", "predictive"), default="plugin")
    prior.add_argument("--estimate", type=_finite_float, required=True)
    prior.add_argument("--stderr", type=_finite_float, required=True)

    p = sub.add_parser("adjust", parents=[common, prior], help="adjust a Small Study estimate")
    p.add_argument("--sigma-l", type=_finite_float)
    p.set_defaults(func=cmd_adjust)

    p = sub.add_parser("pos", parents=[common, prior], help="Large Study success probability")
    p.add_argument("--sigma-l", type=_finite_float, required=True)
    p.add_argument("--delta", type=_finite_float, required=True)
    p.set_defaults(func=cmd_pos)

    p = sub.add_parser("fit", parents=[common], help="fit the portfolio prior from a CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=("gibbs", "mle", "gibbs-nested"), default="gibbs")
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--burn-in", type=int, default=2500)
    p.add_argument("--out", help="write a JSON report here")
    p.add_argument("--eta-mean", type=_finite_float, default=0.0)
    p.add_argument("--eta-var", type=_finite_float, default=1000.0)
    p.add_argument("--sigma2-shape", type=_finite_float, default=0.001)
    p.add_argument("--sigma2-rate", type=_finite_float, default=0.001)
    p.add_argument("--sigma-i2-shape", type=_finite_float, default=2.0)
    p.add_argument("--sigma-i2-rate", type=_finite_float, default=0.01)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo summary of the model")
    p.add_argument("--eta", type=_finite_float, required=True)
    p.add_argument("--sigma2", type=_finite_float, required=True)
    p.add_argument("--sigma-s", type=_finite_float, required=True)
    p.add_argument("--sigma-l", type=_finite_float, required=True)
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--delta", type=_finite_float)
    p.add_argument("--raw-out", help="write raw triples as CSV theta,s_hat,l_hat")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pool", parents=[common], help="fixed-effect pooling of estimates")
    p.add_argument("--input", required=True, help="CSV with estimate,std_error columns")
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("plot-data", parents=[common], help="emit a figure's data table (TSV)")
    p.add_argument("--figure", required=True)
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="figure parameter; comma-separated values form a list")
    p.add_argument("--params-file", help="JSON object of figure parameters")
    p.add_argument("--out", help="TSV destination (default: standard output)")
    p.set_defaults(func=cmd_plot_data)
    return parser


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    sign = -1.0 if args.flip_sign else 1.0
    try:
        args.func(args, out, sign)
    except ValidationError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INVALID
    except NumericalError as exc:
        err.write(f"numerical error: {exc}\n")
        return EXIT_NUMERICAL
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INVALID
    return EXIT_OK


def main() -> None:
    sys.exit(run())

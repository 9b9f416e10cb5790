"""Command-line interface.

Subcommands: ``estimate`` (one-shot estimate plus confidence interval),
``simulate`` (replication study), ``compare`` (difference of two risks),
``systemic`` (component estimation plus aggregation), ``check-identity``
(bandwidth schedule validity), ``optimize`` (optimal-value study).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .asymptotics import (AsymptoticReport, asymptotic_report,
                          exact_limit_variance)
from .core import eval_exact_chain
from .errors import ConfigError, EvaluationError
from .estimators import (BandwidthSchedule, KernelSpec, Sample, SmoothingPlan,
                         estimate_empirical, estimate_mixed)
from .harness import (Reference, ReplicationTable, SamplerConfig, dumps_json,
                      law_dimension, parse_law, run_replications, sample,
                      summarize_distribution, summary_json)
from .measures import (MeasureConfig, parse_measure, systemic_limit,
                       systemic_value, SystemicSpec, OuterAggregation)
from .optimize import (ScalarProblem, default_bracket, minimize_scalar,
                       optimal_value_clt_variance)

_KERNELS = ("uniform", "gaussian", "epanechnikov")


def _add_common(p: argparse.ArgumentParser, *, law2: bool = False) -> None:
    p.add_argument("--measure", required=True,
                   help="path to (or inline text of) a measure JSON document")
    p.add_argument("--law", required=True,
                   help="law spec, e.g. normal:10,1.7320508075688772; "
                        "'*' joins coordinates into a product law")
    if law2:
        p.add_argument("--measure2", default=None,
                       help="second measure (defaults to --measure)")
        p.add_argument("--law2", required=True, help="law of the second sample")
    p.add_argument("--n", type=int, default=200, help="sample size")
    p.add_argument("--seed", type=int, default=0, help="64-bit stream seed")
    p.add_argument("--kernel", choices=_KERNELS, default=None,
                   help="smooth with this kernel (omit for pure empirical)")
    p.add_argument("--bandwidth", default="silverman",
                   help="bandwidth schedule: 'silverman' or 'power:a,gamma'")
    p.add_argument("--smooth-layers", default="2",
                   help="comma list of layer indices to smooth (with --kernel)")
    p.add_argument("--level", type=float, default=0.95, help="confidence level")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="json",
                   dest="fmt", help="csv: estimates table; json: summary")


def _add_replication(p: argparse.ArgumentParser) -> None:
    p.add_argument("--replications", type=int, default=1000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--bins", type=int, default=None, help="histogram bin count")
    p.add_argument("--hist-out", default=None,
                   help="also write the histogram CSV to this path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nestedrisk",
        description="Nested composite risk functionals: estimation, "
                    "asymptotics, and seeded simulation studies.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="one-shot estimate with CI")
    _add_common(p)

    p = sub.add_parser("simulate", help="replication study for one measure")
    _add_common(p)
    _add_replication(p)

    p = sub.add_parser("compare", help="difference of two risks")
    _add_common(p, law2=True)
    _add_replication(p)

    p = sub.add_parser("systemic", help="systemic aggregation study")
    _add_common(p)
    _add_replication(p)
    p.add_argument("--limit-samples", type=int, default=100_000,
                   help="draws for the sampled limit distribution")

    p = sub.add_parser("check-identity", help="bandwidth schedule validity")
    p.add_argument("--kernel", choices=_KERNELS, required=True)
    p.add_argument("--bandwidth", required=True,
                   help="'silverman' or 'power:a,gamma'")
    p.add_argument("--order", type=float, default=2.0,
                   help="moment order p of the composition")
    p.add_argument("--dimension", type=int, default=1)
    p.add_argument("--out", default="-")

    p = sub.add_parser("optimize", help="optimal-value study (two-level measures)")
    _add_common(p)
    _add_replication(p)

    return ap


def _parse_bandwidth(text: str) -> BandwidthSchedule:
    if text == "silverman":
        return BandwidthSchedule("silverman")
    if text.startswith("power:"):
        try:
            a, gamma = (float(v) for v in text[len("power:"):].split(","))
        except ValueError as exc:
            raise ConfigError(f"bad power bandwidth {text!r}") from exc
        return BandwidthSchedule("power", scale=a, exponent=gamma)
    raise ConfigError(f"unknown bandwidth schedule {text!r}")


def _plan_from_args(args, m: int) -> SmoothingPlan | None:
    if args.kernel is None:
        return None
    try:
        layers = frozenset(int(v) for v in args.smooth_layers.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --smooth-layers {args.smooth_layers!r}") from exc
    kernel = KernelSpec(args.kernel, m, moment_order=2.0)
    return SmoothingPlan(layers, kernel, _parse_bandwidth(args.bandwidth))


def _write(args, text: str) -> None:
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _chain_estimator(spec, plan):
    def run(s: Sample) -> np.ndarray:
        report = estimate_mixed(spec, s, plan) if plan is not None \
            else estimate_empirical(spec, s)
        return report.value
    return run


def _optimal_value_estimator(family, c: float, plan):
    def run(s: Sample) -> float:
        bracket = default_bracket(s, c)
        if plan is not None:
            prob = ScalarProblem(family, bracket, "mixed-plan", sample=s, plan=plan)
        else:
            prob = ScalarProblem(family, bracket, "empirical-sample", sample=s)
        return minimize_scalar(prob, flat_check_grid=0).theta
    return run


def _exact_bracket(law) -> tuple[float, float]:
    mean, var = law.moments()
    sd = np.sqrt(var)
    return float(mean - 6 * sd), float(mean + 12 * sd)


def _exact_optimal(mcfg: MeasureConfig, law):
    family = mcfg.build()
    oracle = law.oracle()
    prob = ScalarProblem(family, _exact_bracket(law), "exact-oracle", oracle=oracle)
    rep = minimize_scalar(prob)
    v = optimal_value_clt_variance(prob, None, rep.u_hat)
    return rep, v


def _measure_pipeline(mcfg: MeasureConfig, law, plan):
    """(estimator, exact value, exact limit variance, spec at the exact
    decision) for scalar pipelines."""
    built = mcfg.build()
    if mcfg.kind == "higher_order":
        rep, v = _exact_optimal(mcfg, law)
        return (_optimal_value_estimator(built, mcfg.params.c, plan),
                rep.theta, v, built(rep.u_hat))
    if mcfg.kind in ("mean_semideviation", "portfolio_semideviation"):
        spec = built
        if mcfg.kind == "portfolio_semideviation":
            if mcfg.u is None:
                raise ConfigError("portfolio measure needs an allocation 'u'")
        oracle = law.oracle()
        value = float(eval_exact_chain(spec, oracle).value[0])
        v = float(exact_limit_variance(spec, oracle)[0, 0])
        return _chain_estimator(spec, plan), value, v, spec
    raise ConfigError(f"measure kind {mcfg.kind!r} is not a scalar pipeline")


def _systemic_pieces(mcfg: MeasureConfig, law):
    if mcfg.kind != "systemic":
        raise ConfigError("the systemic command needs a systemic measure")
    comps = mcfg.components
    ell = len(comps)
    if law_dimension(law) != ell:
        raise ConfigError(
            f"systemic law must have one coordinate per component ({ell})")
    laws = law.laws
    weights = np.asarray(mcfg.params.weights, dtype=float)
    outer = mcfg.outer
    return comps, laws, weights, outer


def cmd_estimate(args) -> int:
    mcfg = parse_measure(args.measure)
    law = parse_law(args.law)
    plan = _plan_from_args(args, law_dimension(law))
    cfg = SamplerConfig(law, args.seed)
    s = sample(cfg, args.n)
    if mcfg.kind == "higher_order":
        family = mcfg.build()
        bracket = default_bracket(s, mcfg.params.c)
        if plan is not None:
            prob = ScalarProblem(family, bracket, "mixed-plan", sample=s, plan=plan)
        else:
            prob = ScalarProblem(family, bracket, "empirical-sample", sample=s)
        rep = minimize_scalar(prob)
        v = optimal_value_clt_variance(prob, s, rep.u_hat)
        from scipy.special import ndtri
        half = float(ndtri(0.5 + args.level / 2.0)) * np.sqrt(v / s.n)
        doc = {"value": rep.theta, "u_hat": rep.u_hat,
               "limit_variance": v, "level": args.level,
               "interval": [rep.theta - half, rep.theta + half],
               "boundary": rep.boundary,
               "config": {"measure": mcfg.to_json(), "law": repr(law),
                          "n": s.n, "seed": args.seed}}
    elif mcfg.kind == "systemic":
        comps, laws, weights, outer = _systemic_pieces(mcfg, law)
        values, comp_specs = [], []
        for i, (c, l) in enumerate(zip(comps, laws)):
            col = Sample(s.data[:, i])
            est, _, _, spec_at = _measure_pipeline(c, l, _plan_from_args(args, 1))
            values.append(float(np.asarray(est(col)).reshape(-1)[0]))
            comp_specs.append(spec_at)
        spec = SystemicSpec(tuple(comp_specs),
                            tuple(float(w) for w in weights), outer)
        doc = {"value": systemic_value(values, spec),
               "components": values,
               "config": {"measure": mcfg.to_json(), "law": repr(law),
                          "n": s.n, "seed": args.seed}}
    else:
        spec = mcfg.build()
        report = estimate_mixed(spec, s, plan) if plan is not None \
            else estimate_empirical(spec, s)
        arep = asymptotic_report(spec, s, report, level=args.level)
        doc = {"value": report.value.tolist(),
               "limit_covariance": arep.limit_cov.tolist(),
               "level": args.level,
               "interval": [list(iv) for iv in arep.intervals],
               "config": {"measure": mcfg.to_json(), "law": repr(law),
                          "n": s.n, "seed": args.seed}}
    _write(args, dumps_json(doc))
    return 0


def _emit_table(args, table: ReplicationTable, reference: Reference,
                extra: dict) -> None:
    if args.fmt == "csv":
        text = table.to_csv()
    else:
        summary = summarize_distribution(table, reference, args.bins)
        doc = summary_json(summary, table.config)
        doc.update(extra)
        text = dumps_json(doc)
    _write(args, text)
    if args.hist_out:
        summary = summarize_distribution(table, reference, args.bins)
        if summary.histogram is not None:
            summary.histogram.to_csv(args.hist_out)


def cmd_simulate(args) -> int:
    mcfg = parse_measure(args.measure)
    law = parse_law(args.law)
    plan = _plan_from_args(args, law_dimension(law))
    estimator, exact, v, _ = _measure_pipeline(mcfg, law, plan)
    reference = Reference(exact, v / args.n)
    cfg = SamplerConfig(law, args.seed)
    table = run_replications(estimator, cfg, args.n, args.replications,
                             reference=reference, workers=args.workers,
                             label={"measure": mcfg.kind})
    _emit_table(args, table, reference,
                {"exact_value": exact, "limit_variance": v})
    return 0


def cmd_optimize(args) -> int:
    mcfg = parse_measure(args.measure)
    if mcfg.kind != "higher_order":
        raise ConfigError("the optimize command needs a higher_order measure")
    return cmd_simulate(args)


def cmd_compare(args) -> int:
    m1 = parse_measure(args.measure)
    m2 = parse_measure(args.measure2) if args.measure2 else m1
    l1, l2 = parse_law(args.law), parse_law(args.law2)
    if law_dimension(l1) != 1 or law_dimension(l2) != 1:
        raise ConfigError("compare expects scalar laws")
    plan = _plan_from_args(args, 1)
    est1, exact1, v1, _ = _measure_pipeline(m1, l1, plan)
    est2, exact2, v2, _ = _measure_pipeline(m2, l2, plan)

    def diff(s: Sample) -> float:
        a = float(np.asarray(est1(Sample(s.data[:, 0]))).reshape(-1)[0])
        b = float(np.asarray(est2(Sample(s.data[:, 1]))).reshape(-1)[0])
        return a - b

    from .harness import ProductLaw
    joint = ProductLaw((l1, l2))
    reference = Reference(exact1 - exact2, (v1 + v2) / args.n)
    table = run_replications(diff, SamplerConfig(joint, args.seed), args.n,
                             args.replications, reference=reference,
                             workers=args.workers, label={"measure": "difference"})
    _emit_table(args, table, reference,
                {"exact_difference": exact1 - exact2,
                 "limit_variance": v1 + v2})
    return 0


def cmd_systemic(args) -> int:
    mcfg = parse_measure(args.measure)
    law = parse_law(args.law)
    comps, laws, weights, outer = _systemic_pieces(mcfg, law)
    plan = _plan_from_args(args, 1)

    pieces = [_measure_pipeline(c, l, plan) for c, l in zip(comps, laws)]
    exact_components = np.array([p[1] for p in pieces])
    component_vars = np.array([p[2] for p in pieces])
    spec = SystemicSpec(tuple(p[3] for p in pieces),
                        tuple(float(w) for w in weights), outer)
    exact_sys = systemic_value(exact_components, spec)

    # delta-method reference variance through the aggregation's directional
    # derivative at the exact component vector (independent components)
    limit_cov = np.diag(component_vars)
    report = AsymptoticReport.from_limit_cov(limit_cov, args.n,
                                             value=exact_components)
    lim = systemic_limit(spec, report, args.limit_samples, args.seed + 1)

    estimators_ = [p[0] for p in pieces]

    def sys_est(s: Sample) -> float:
        vals = [float(np.asarray(est(Sample(s.data[:, i]))).reshape(-1)[0])
                for i, est in enumerate(estimators_)]
        return systemic_value(vals, spec)

    reference = Reference(exact_sys, lim.variance / args.n)
    table = run_replications(sys_est, SamplerConfig(law, args.seed), args.n,
                             args.replications, reference=reference,
                             workers=args.workers, label={"measure": "systemic"})
    _emit_table(args, table, reference,
                {"exact_value": exact_sys,
                 "exact_components": exact_components.tolist(),
                 "limit_quantiles": {str(k): v for k, v in lim.quantiles.items()},
                 "limit_variance": lim.variance})
    return 0


def cmd_check_identity(args) -> int:
    from .estimators import check_strong_identity
    kernel = KernelSpec(args.kernel, args.dimension, moment_order=args.order)
    schedule = _parse_bandwidth(args.bandwidth)
    check = check_strong_identity(schedule, kernel, args.order)
    doc = {"passes": check.passes, "s2b_ok": check.s2b_ok, "rule": check.rule,
           "gamma": check.gamma, "exponent_identity": check.exponent_identity,
           "exponent_s2b": check.exponent_s2b, "detail": check.detail,
           "kernel": {"family": kernel.family, "dimension": kernel.dimension,
                      "m1": kernel.m1, "mp": kernel.mp}}
    _write(args, dumps_json(doc))
    return 0


_COMMANDS = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "systemic": cmd_systemic,
    "check-identity": cmd_check_identity,
    "optimize": cmd_optimize,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except EvaluationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: ``dims`` (dimension report), ``construct`` (instance family
generators), ``learn`` (run a learner on an instance), ``bounds``
(generalization-bound tabulation), and ``experiment`` (harness runs).
Experiment subcommands exit 0 on completion regardless of the scientific
outcome; assertions live in the test suite.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bench, constructions
from .compress import bernstein_bound, graepel_bound
from .core import (
    PACParams,
    Predictor,
    load_instance,
    sample,
    sample_marginal,
    save_instance,
)
from .dims import compute_report
from .partial import partial_realizable_learn, to_partial
from .robust import grass, learn_known_support, robust_agnostic_learn, robust_realizable_learn


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _dump(doc, path: str | None) -> None:
    text = json.dumps(doc, indent=1, default=_jsonable)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _predictor_doc(pred: Predictor) -> dict:
    return {"outputs": pred.outputs.tolist(), "provenance": dict(pred.provenance)}


def _load_sample(path: str) -> tuple:
    doc = json.loads(Path(path).read_text())
    return tuple((int(x), int(y)) for x, y in doc)


def _cmd_dims(args) -> int:
    instance = load_instance(args.input)
    report = compute_report(instance, override=args.override)
    if args.json:
        _dump(report.as_dict(include_witnesses=args.witnesses), None)
        return 0
    print(f"vc      {report.vc}")
    print(f"dual_vc {report.dual_vc}")
    print(f"vc_u    {report.vc_u}")
    print(f"rs_u    {report.rs_u}")
    if args.witnesses:
        for k, v in report.witnesses.items():
            print(f"witness[{k}] {v}")
    return 0


def _cmd_construct(args) -> int:
    family = args.family
    if family == "gap":
        instance, meta = constructions.gen_gap(args.n)
    elif family == "allfns":
        instance, meta = constructions.gen_allfns_overlap(args.m)
    elif family == "three-halves":
        instance, meta = constructions.gen_three_halves(args.n)
    elif family == "improper":
        instance, dists, meta = constructions.gen_improper(args.m)
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        names = []
        for i, d in enumerate(dists):
            member = type(instance)(
                instance.space, instance.perturbation, instance.hypotheses, d
            )
            name = f"member_{i:03d}.json"
            save_instance(member, out / name)
            names.append(name)
        _dump(
            {"family": "improper", "m": args.m, "members": names, "meta": meta.extras},
            str(out / "manifest.json"),
        )
        return 0
    elif family == "sigma":
        members = constructions.gen_agnostic_sigma(args.k, args.alpha)
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        names = []
        for i, (member, mmeta) in enumerate(members):
            name = f"member_{i:03d}.json"
            save_instance(member, out / name)
            names.append(name)
        _dump(
            {
                "family": "agnostic-sigma",
                "k": args.k,
                "alpha": args.alpha,
                "eta": members[0][1].eta,
                "members": names,
            },
            str(out / "manifest.json"),
        )
        return 0
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(family)
    save_instance(instance, args.output)
    print(f"wrote {args.output} ({meta.family})")
    return 0


def _split_budget_seed(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    return tuple(rng.spawn(3))


def _cmd_learn(args) -> int:
    instance = load_instance(args.input)
    params = PACParams(args.epsilon, args.delta)
    s_sample, s_marginal, s_learn = _split_budget_seed(args.seed)

    if args.sample:
        labeled = _load_sample(args.sample)
    elif args.ml is not None:
        if instance.distribution is None:
            print("instance has no distribution to sample from", file=sys.stderr)
            return 2
        labeled = sample(instance.distribution, args.ml, s_sample)
    else:
        print("provide --sample or --ml", file=sys.stderr)
        return 2

    if args.learner == "partial-realizable":
        table = to_partial(instance.hypotheses, instance.perturbation)
        pred, _ = partial_realizable_learn(table, labeled, params, s_learn)
    elif args.learner == "grass":
        unlabeled = sample_marginal(instance.distribution, args.mu, s_marginal)
        pred = grass(
            instance.hypotheses, instance.perturbation, labeled, unlabeled, params, s_learn
        )
    elif args.learner == "robust-supervised":
        learnfn = robust_agnostic_learn if args.agnostic else robust_realizable_learn
        pred, _ = learnfn(instance.hypotheses, instance.perturbation, labeled, params, s_learn)
    elif args.learner == "known-support":
        support = [int(x) for x in args.support.split(",")]
        pred = learn_known_support(instance.hypotheses, instance.perturbation, support, labeled)
    else:  # pragma: no cover
        raise ValueError(args.learner)

    doc = _predictor_doc(pred)
    if args.emit_provenance:
        _dump(doc["provenance"], args.emit_provenance)
    if not args.full_provenance:
        doc["provenance"] = {
            k: v
            for k, v in doc["provenance"].items()
            if k not in ("self_labeled", "h1_outputs", "compression_supports")
        }
    _dump(doc, args.output)
    return 0


def _cmd_bounds(args) -> int:
    ms = [int(v) for v in args.m.split(",")]
    print("m,graepel,bernstein")
    for m in ms:
        g = graepel_bound(args.ell, m, args.delta)
        b = bernstein_bound(args.ell, m, args.delta, args.risk)
        print(f"{m},{g:.6f},{b:.6f}")
    return 0


def _cmd_experiment_run(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    if "input" in doc:
        instance = load_instance(doc["input"])
        family, n = doc.get("family", "custom"), doc.get("n", 0)
        hints = doc.get("hints", {})
    else:
        spec = doc["construction"]
        if spec["family"] == "gap":
            instance, meta = constructions.gen_gap(spec["n"])
        elif spec["family"] == "allfns":
            instance, meta = constructions.gen_allfns_overlap(spec["m"])
        elif spec["family"] == "three-halves":
            instance, meta = constructions.gen_three_halves(spec["n"])
        else:
            print(f"unknown construction family {spec['family']}", file=sys.stderr)
            return 2
        family, n = meta.family, spec.get("n", spec.get("m", 0))
        hints = doc.get(
            "hints",
            {
                "vc_hint": meta.expected_vc,
                "k_target": 8 * meta.expected_dual_vc if meta.expected_dual_vc else None,
            },
        )
    config = bench.ExperimentConfig(
        instance=instance,
        learner=doc["learner"],
        params=PACParams(doc["epsilon"], doc["delta"]),
        trials=doc["trials"],
        seed=doc["seed"],
        axis=doc.get("axis", "m_l"),
        fixed_m_l=doc.get("fixed_m_l", 0),
        fixed_m_u=doc.get("fixed_m_u", 0),
        start=doc.get("start", 1),
        max_budget=doc.get("max_budget", 4096),
        alpha=doc.get("alpha", 1.0),
        hints=hints,
        family=family,
        n=n,
        workers=doc.get("workers", 1),
    )
    complexity = bench.estimate_complexity(config)
    rows = bench._rows_from(config, complexity)
    out = doc.get("output", args.output)
    if out:
        bench.write_csv(rows, out, config.describe())
        print(f"wrote {out}")
    print(f"minimal {config.axis} = {complexity.minimal}")
    return 0


def _cmd_experiment_separation(args) -> int:
    n_values = [int(v) for v in args.n.split(",")]
    params = PACParams(args.epsilon, args.delta)
    result = bench.separation_experiment(
        n_values, params, args.trials, args.seed, workers=args.workers
    )
    doc = {
        "n": n_values,
        "epsilon": args.epsilon,
        "delta": args.delta,
        "trials": args.trials,
        "seed": args.seed,
    }
    if args.output:
        bench.write_csv(result["rows"], args.output, doc)
        print(f"wrote {args.output}")
    for (n, learner), minimal in sorted(result["minimal"].items()):
        print(f"n={n} learner={learner} minimal_m_l={minimal}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dims", help="compute the dimension report of an instance")
    p.add_argument("--input", required=True)
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--table", action="store_true")
    p.add_argument("--witnesses", action="store_true")
    p.add_argument("--override", action="store_true", help="bypass the size guard")
    p.set_defaults(func=_cmd_dims)

    p = sub.add_parser("construct", help="generate a lower-bound instance family")
    fam = p.add_subparsers(dest="family", required=True)
    g = fam.add_parser("gap")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("-o", "--output", required=True)
    g = fam.add_parser("allfns")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("-o", "--output", required=True)
    g = fam.add_parser("three-halves")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("-o", "--output", required=True)
    g = fam.add_parser("improper")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("-o", "--output", required=True, help="output directory")
    g = fam.add_parser("sigma")
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--alpha", type=float, required=True)
    g.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=_cmd_construct)

    p = sub.add_parser("learn", help="run a learner on an instance")
    learners = p.add_subparsers(dest="learner", required=True)
    for name in ("partial-realizable", "grass", "robust-supervised", "known-support"):
        q = learners.add_parser(name)
        q.add_argument("--input", required=True)
        q.add_argument("--sample", help="labeled sample JSON: [[x, y], ...]")
        q.add_argument("--ml", type=int, help="labeled draws from the instance distribution")
        q.add_argument("--epsilon", type=float, default=0.1)
        q.add_argument("--delta", type=float, default=0.1)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("-o", "--output")
        q.add_argument("--emit-provenance")
        q.add_argument("--full-provenance", action="store_true")
        if name == "grass":
            q.add_argument("--mu", type=int, default=0, help="unlabeled draws")
        if name == "robust-supervised":
            q.add_argument("--agnostic", action="store_true")
        if name == "known-support":
            q.add_argument("--support", required=True, help="comma-separated indices")
    p.set_defaults(func=_cmd_learn)

    p = sub.add_parser("bounds", help="tabulate the generalization bounds")
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--m", required=True, help="comma-separated sample sizes")
    p.add_argument("--risk", type=float, default=0.0)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("experiment", help="run the experiment harness")
    exp = p.add_subparsers(dest="experiment", required=True)
    q = exp.add_parser("run")
    q.add_argument("--config", required=True)
    q.add_argument("-o", "--output")
    q.set_defaults(func=_cmd_experiment_run)
    q = exp.add_parser("separation")
    q.add_argument("--n", required=True, help="comma-separated block counts")
    q.add_argument("--epsilon", type=float, default=0.1)
    q.add_argument("--delta", type=float, default=0.1)
    q.add_argument("--trials", type=int, default=200)
    q.add_argument("--seed", type=int, default=7)
    q.add_argument("--workers", type=int, default=1)
    q.add_argument("-o", "--output")
    q.set_defaults(func=_cmd_experiment_separation)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())

"""Command-line surface.

Subcommands: attribute, baseline, axioms, eval-insdel, eval-sensn,
oracle, train-toy.  Exit codes: 0 success, 1 usage error, 2 runtime
error.  All randomness is derived from --seed (per-image child seeds for
directory inputs), every output lands under --out, and each attribution
meta record carries the exact flag set that reproduces it.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import axioms as axioms_mod
from .baselines import BaselineSpec, compute_baseline, fixed_baseline, gaussian_blur
from .fileio import (
    atomic_write_text,
    file_sha256,
    load_document,
    scores_to_text,
    write_attribution,
)
from .hashing import sha256_digest
from .metrics import EvalReport, insertion_deletion_score, sensitivity_n
from .model import Model, load_model
from .netpbm import read_image, write_image
from .paths import AttributionMap, LogitFunction, RiemannConfig, expected_gradients, riemann_ig
from .pwl import PwlModel, builtin_pwl, exact_path_attribution, segment_path
from .seeding import derive_seed
from .tensor import TensorF, as_tensor
from .train import blob_net_spec, blob_dataset, cnn16_spec, shapes16_dataset, train_toy
from .valid_path import ProposedConfig, attribute_proposed

METHODS = ("ig", "ig_gauss", "ig_avg", "eg", "proposed", "proposed_igbase", "proposed_single")
IMAGE_SUFFIXES = (".pgm", ".ppm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Attribution dispatch
# ---------------------------------------------------------------------------


def compute_map(model: Model, x: TensorF, method: str, steps: int, seed: int, *,
                baseline_kind: str | None = None, sigma: float | None = None,
                eta: float | None = None, eps: float | None = None,
                delta: float | None = None, max_iter: int = 500,
                num_baselines: int = 3) -> AttributionMap:
    """Run one attribution method; --steps maps to m (single path) or K (total)."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    fn = LogitFunction.for_input(model, x.data)

    if method in ("ig", "ig_gauss", "ig_avg"):
        kind = baseline_kind or {"ig": "black", "ig_gauss": "gaussian_noise", "ig_avg": "input_mean"}[method]
        spec = BaselineSpec(kind=kind, sigma=sigma or 2.0, seed=derive_seed(seed, 101))
        x_prime = gaussian_blur(x, spec.sigma) if kind == "blur" else fixed_baseline(x, spec)
        amap = riemann_ig(fn, x.data, x_prime.data, RiemannConfig(steps, "midpoint", seed))
        amap.meta.update(method=method, baseline_kind=kind,
                         baseline_digest=sha256_digest(spec.digest_fields()),
                         class_index=fn.class_index)
        return amap

    if method == "eg":
        kind = baseline_kind or "gaussian_noise"
        baselines = []
        for b in range(num_baselines):
            spec = BaselineSpec(kind=kind, sigma=sigma or 2.0, seed=derive_seed(seed, 500 + b))
            baselines.append((gaussian_blur(x, spec.sigma) if kind == "blur"
                              else fixed_baseline(x, spec)).data)
        amap = expected_gradients(fn, x.data, baselines, steps, seed)
        amap.meta.update(method=method, baseline_kind=kind, class_index=fn.class_index)
        return amap

    b_count = 1 if method == "proposed_single" else num_baselines
    sigma0 = sigma or 1.5
    cfg = ProposedConfig(
        B=b_count, K=steps,
        sigmas=tuple(sigma0 * (b + 1) for b in range(b_count)),
        eta=eta, eps=eps, delta=delta, max_iter=max_iter, seed=seed,
        baseline_kind="black" if method == "proposed_igbase" else "optimized")
    amap = attribute_proposed(model, x, cfg)
    amap.meta["method"] = method
    return amap


def _list_inputs(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise FileNotFoundError(f"no .pgm/.ppm images under {path}")
        return files
    if not path.exists():
        raise FileNotFoundError(f"input {path} does not exist")
    return [path]


def _method_kwargs(args) -> dict:
    return dict(baseline_kind=args.baseline_kind, sigma=args.sigma, eta=args.eta,
                eps=args.eps, delta=args.delta, max_iter=args.max_iter,
                num_baselines=args.num_baselines)


def _attribute_task(payload: dict) -> str:
    """One image end to end; top-level so worker processes can pickle it."""
    model = load_model(payload["model"])
    x = read_image(payload["input"])
    amap = compute_map(model, x, payload["method"], payload["steps"], payload["seed"],
                       **payload["kwargs"])
    amap.meta["model_sha256"] = file_sha256(payload["model"])
    amap.meta["input_sha256"] = file_sha256(payload["input"])
    amap.meta["args"] = {
        "method": payload["method"], "model": payload["model"], "input": payload["input"],
        "steps": payload["steps"], "seed": payload["seed"], **payload["kwargs"],
    }
    paths = write_attribution(amap, payload["out"], Path(payload["input"]).stem)
    return paths["meta"]


def cmd_attribute(args) -> int:
    inputs = _list_inputs(Path(args.input))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payloads = []
    for idx, img in enumerate(inputs):
        seed = args.seed if len(inputs) == 1 else derive_seed(args.seed, idx)
        payloads.append({
            "model": args.model, "input": str(img), "method": args.method,
            "steps": args.steps, "seed": seed, "kwargs": _method_kwargs(args),
            "out": str(out),
        })
    if args.workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            metas = list(pool.map(_attribute_task, payloads))
    else:
        metas = [_attribute_task(p) for p in payloads]
    for meta in metas:
        print(meta)
    return 0


# ---------------------------------------------------------------------------
# Baseline search
# ---------------------------------------------------------------------------


def cmd_baseline(args) -> int:
    model = load_model(args.model)
    x = read_image(args.input)
    spec = BaselineSpec(kind="optimized", sigma=args.sigma or 2.0, eta=args.eta,
                        eps=args.eps, delta=args.delta, max_iter=args.max_iter)
    result = compute_baseline(model, x, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    write_image(result.x_prime, out / f"{stem}.baseline.pgm")
    atomic_write_text(out / f"{stem}.baseline.values.txt", scores_to_text(result.x_prime.data))
    diag = {
        "achieved_eps": result.achieved_eps,
        "achieved_delta": result.achieved_delta,
        "iterations": result.iterations,
        "converged": result.converged,
        "clipped_conflicts": result.clipped_conflicts,
        "eps_target": result.eps_target,
        "delta_target": result.delta_target,
        "args": {"model": args.model, "input": args.input, "sigma": args.sigma,
                 "eta": args.eta, "eps": args.eps, "delta": args.delta,
                 "max_iter": args.max_iter, "seed": args.seed},
    }
    atomic_write_text(out / f"{stem}.baseline.meta.json", json.dumps(diag, indent=2) + "\n")
    print(f"achieved_eps={result.achieved_eps:.6g} achieved_delta={result.achieved_delta:.6g} "
          f"iterations={result.iterations} converged={result.converged} "
          f"clipped_conflicts={result.clipped_conflicts}")
    return 0


# ---------------------------------------------------------------------------
# Axiom demonstrations
# ---------------------------------------------------------------------------


def _print_demo_zero(demo: dict) -> None:
    print("zero-baseline demonstration (built-in 'example1'):")
    for case in demo["cases"]:
        mark = "PASS" if np.allclose(case["oracle"], case["expected_oracle"], atol=1e-9) else "FAIL"
        print(f"  [{mark}] x={case['input']}  oracle={case['oracle']}  "
              f"riemann={['%.6f' % v for v in case['riemann']]} (rel err {case['riemann_rel_err']:.2e})")
        print(f"         active weights={case['active_weights']}  "
              f"counter-intuitive ranking={case['counter_intuitive_ranking']}  "
              f"completeness residual={case['completeness_residual']:.6g}")
    print(f"  note: {demo['quoted_values_note']}")


def _print_demo_consistent(demo: dict) -> None:
    print("same-region-baseline demonstration (built-in 'example1', x'=[3,3]):")
    for case in demo["cases"]:
        mark = "PASS" if case["oracle_ok"] and case["riemann_ok"] else "FAIL"
        print(f"  [{mark}] x={case['input']}  oracle={case['oracle']}  riemann(m=1)={case['riemann_m1']}  "
              f"|A1/A2|={case['abs_ratio']:.6g}  completeness residual={case['completeness_residual']:.3g}")


def cmd_axioms(args) -> int:
    reports = []
    demos = {}
    if args.demo in (None, "pair", "example2"):
        demos["consistent_baseline"] = axioms_mod.demo_consistent_baseline()
        _print_demo_consistent(demos["consistent_baseline"])
    if args.demo in (None, "pair", "example1"):
        demos["zero_baseline"] = axioms_mod.demo_zero_baseline()
        _print_demo_zero(demos["zero_baseline"])
    if args.demo is None:
        base = builtin_pwl("example1")
        reports.append(axioms_mod.probe_weak_dependence(
            base, axioms_mod.X_B, axioms_mod.SAME_REGION_BASELINE, seed=args.seed))
        reports.append(axioms_mod.probe_weak_dependence(
            base, axioms_mod.X_B, axioms_mod.ZERO_BASELINE, seed=args.seed))
        reports.append(axioms_mod.check_same_region_consistency(base, region=1, seed=args.seed))
        reports.append(axioms_mod.check_same_region_consistency(base, region=0, seed=args.seed))
        for report in reports:
            print(report.summary())
    ok = all(d["all_pass"] for d in demos.values()) and all(r.passed for r in reports)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {"demos": demos,
                   "reports": [vars(r) for r in reports],
                   "all_pass": ok, "seed": args.seed}
        atomic_write_text(out / "axioms.json", json.dumps(payload, indent=2, default=str) + "\n")
    print(f"axioms: {'all checks passed' if ok else 'FAILURES present'}")
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.split(",")], dtype=np.float64)
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}; expected comma-separated reals") from None


def cmd_oracle(args) -> int:
    if args.builtin:
        m = builtin_pwl(args.builtin)
    elif args.model:
        m = load_document(args.model)
        if not isinstance(m, PwlModel):
            raise ValueError(f"{args.model} is not a pwl document")
    else:
        raise UsageError("oracle needs --builtin or --model")
    x = _parse_point(args.input)
    x_prime = _parse_point(args.baseline)
    attr = exact_path_attribution(m, x, x_prime)
    seg = segment_path(m, x, x_prime)
    region = m.active_piece(x)
    print(f"input x = {x.tolist()}  (region {region if region is not None else 'outside'})")
    region_b = m.active_piece(x_prime)
    print(f"baseline x' = {x_prime.tolist()}  (region {region_b if region_b is not None else 'outside'})")
    print(f"boundary crossings at alpha = {seg.crossings}")
    print(f"exact attribution = {attr.tolist()}")
    print(f"completeness: sum = {attr.sum():.12g}, F(x) - F(x') = {m.value(x) - m.value(x_prime):.12g}")
    if args.builtin == "example1" and np.array_equal(x_prime, [0.0, 0.0]):
        demo = axioms_mod.demo_zero_baseline(riemann_m=1)
        print(f"note: {demo['quoted_values_note']}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "oracle.json", json.dumps({
            "x": x.tolist(), "x_prime": x_prime.tolist(),
            "attribution": attr.tolist(), "crossings": seg.crossings,
        }, indent=2) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Evaluation protocols
# ---------------------------------------------------------------------------


def _reference_for(x: TensorF, kind: str, sigma: float) -> TensorF:
    if kind == "black":
        return x.with_data(np.zeros(x.shape))
    if kind == "input_mean":
        return x.with_data(np.full(x.shape, x.data.mean()))
    if kind == "blur":
        return gaussian_blur(x, sigma)
    raise ValueError(f"unknown reference kind {kind!r}")


def _insdel_task(payload: dict) -> dict:
    model = load_model(payload["model"])
    x = read_image(payload["input"])
    amap = compute_map(model, x, payload["method"], payload["steps"], payload["seed"],
                       **payload["kwargs"])
    reference = _reference_for(x, payload["reference"], payload["kwargs"]["sigma"] or 2.0)
    result = insertion_deletion_score(model, x.data, amap, reference.data,
                                      group_size=payload["group_size"])
    stem = Path(payload["input"]).stem
    out = Path(payload["out"])
    for label, curve in (("insertion", result.insertion), ("deletion", result.deletion)):
        dump = "\n".join(f"{f:.8f} {s:.12g}" for f, s in zip(curve.fractions, curve.scores))
        atomic_write_text(out / f"{stem}.{label}.txt", dump + "\n")
    return {"image": stem, "insertion_auc": result.insertion_auc,
            "deletion_auc": result.deletion_auc, "difference": result.difference}


def cmd_eval_insdel(args) -> int:
    inputs = _list_inputs(Path(args.input))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payloads = []
    for idx, img in enumerate(inputs):
        seed = args.seed if len(inputs) == 1 else derive_seed(args.seed, idx)
        payloads.append({
            "model": args.model, "input": str(img), "method": args.method,
            "steps": args.steps, "seed": seed, "kwargs": _method_kwargs(args),
            "reference": args.reference, "group_size": args.group_size, "out": str(out),
        })
    if args.workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_insdel_task, payloads))
    else:
        rows = [_insdel_task(p) for p in payloads]
    report = EvalReport(rows=rows, config={
        "method": args.method, "model": args.model, "steps": args.steps,
        "reference": args.reference, "group_size": args.group_size, "seed": args.seed,
        "score": "softmax probability of the originally predicted class",
    })
    report.config["digest"] = sha256_digest(report.config)
    summary = {"config": report.config, "rows": report.rows,
               "mean_difference": report.mean_difference()}
    atomic_write_text(out / "eval_insdel.json", json.dumps(summary, indent=2) + "\n")
    print(f"images={len(rows)} mean insertion-deletion AUC difference={report.mean_difference():.6f}")
    return 0


def cmd_eval_sensn(args) -> int:
    fractions = [float(tok) for tok in args.fractions.split(",")]
    inputs = _list_inputs(Path(args.input))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(args.model)
    all_rows = []
    for idx, img in enumerate(inputs):
        seed = args.seed if len(inputs) == 1 else derive_seed(args.seed, idx)
        x = read_image(img)
        amap = compute_map(model, x, args.method, args.steps, seed, **_method_kwargs(args))
        results = sensitivity_n(model, x.data, amap, fractions,
                                samples_per_fraction=args.samples, seed=derive_seed(seed, 7))
        stem = img.stem
        dump = "\n".join(
            f"{r.fraction:.4f} {'nan' if r.correlation is None else '%.12g' % r.correlation}"
            for r in results)
        atomic_write_text(out / f"{stem}.sensn.txt", dump + "\n")
        all_rows.append({"image": stem, "results": [vars(r) for r in results]})
    per_fraction = {}
    for frac in fractions:
        vals = [r["correlation"] for row in all_rows for r in row["results"]
                if r["fraction"] == frac and r["correlation"] is not None]
        per_fraction[str(frac)] = float(np.mean(vals)) if vals else None
    summary = {
        "config": {"method": args.method, "model": args.model, "steps": args.steps,
                   "fractions": fractions, "samples": args.samples, "seed": args.seed},
        "rows": all_rows,
        "mean_correlation_per_fraction": per_fraction,
    }
    atomic_write_text(out / "eval_sensn.json", json.dumps(summary, indent=2) + "\n")
    for frac, val in per_fraction.items():
        print(f"fraction={frac} mean PCC={'undefined' if val is None else '%.4f' % val}")
    return 0


# ---------------------------------------------------------------------------
# Toy training
# ---------------------------------------------------------------------------


def cmd_train_toy(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.dataset == "blobs":
        spec = blob_net_spec()
        X, y = blob_dataset(args.train_size, args.seed)
    elif args.dataset == "shapes16":
        spec = cnn16_spec()
        X, y = shapes16_dataset(args.train_size, args.seed)
    else:
        raise UsageError(f"unknown dataset {args.dataset!r}")
    result = train_toy(spec, (X, y), args.epochs, args.lr, args.seed)
    result.model.save(out / "model.json")
    report = {"dataset": args.dataset, "train_size": args.train_size,
              "epochs": args.epochs, "lr": args.lr, "seed": args.seed,
              "final_loss": result.final_loss, "accuracy": result.accuracy}
    atomic_write_text(out / "train_report.json", json.dumps(report, indent=2) + "\n")
    if args.emit_images:
        if args.dataset != "shapes16":
            raise UsageError("--emit-images requires --dataset shapes16")
        img_dir = out / "images"
        img_dir.mkdir(exist_ok=True)
        Xe, ye = shapes16_dataset(args.emit_images, derive_seed(args.seed, 999))
        labels = []
        for i in range(args.emit_images):
            name = f"img{i:04d}.pgm"
            write_image(Xe[i], img_dir / name)
            labels.append(f"{name} {int(ye[i])}")
        atomic_write_text(img_dir / "labels.txt", "\n".join(labels) + "\n")
    print(f"accuracy={result.accuracy:.4f} final_loss={result.final_loss:.6f} -> {out / 'model.json'}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_method_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="image file or directory of images")
    p.add_argument("--steps", type=int, default=150, help="m for single-path methods, K for multi-baseline")
    p.add_argument("--baseline-kind", choices=("black", "gaussian_noise", "input_mean", "blur"))
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--num-baselines", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> _Parser:
    parser = _Parser(prog="pathattr", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("attribute", help="compute an attribution map")
    _add_method_flags(p)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("baseline", help="search for an optimized feature-absence baseline")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("axioms", help="axiom checks and the demonstration pair")
    p.add_argument("--demo", choices=("example1", "example2", "pair"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_axioms)

    p = sub.add_parser("oracle", help="closed-form attribution on a piecewise-linear model")
    p.add_argument("--builtin")
    p.add_argument("--model")
    p.add_argument("--input", required=True, help="comma-separated point")
    p.add_argument("--baseline", required=True, help="comma-separated point")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval-insdel", help="insertion/deletion AUC difference")
    _add_method_flags(p)
    p.add_argument("--reference", choices=("black", "input_mean", "blur"), default="black")
    p.add_argument("--group-size", type=int, default=1)
    p.set_defaults(func=cmd_eval_insdel)

    p = sub.add_parser("eval-sensn", help="Sensitivity-N correlation")
    _add_method_flags(p)
    p.add_argument("--fractions", default="0.1,0.25,0.5,0.75,0.9")
    p.add_argument("--samples", type=int, default=16)
    p.set_defaults(func=cmd_eval_sensn)

    p = sub.add_parser("train-toy", help="train a toy model on a synthetic dataset")
    p.add_argument("--dataset", choices=("blobs", "shapes16"), default="blobs")
    p.add_argument("--train-size", type=int, default=400)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emit-images", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    return parser


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()

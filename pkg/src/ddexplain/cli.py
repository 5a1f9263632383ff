"""Command-line front end: explain, verify, evaluate, demo.

Exit codes are a stable contract: 0 success, 1 property violation (failed
verification, oracle nondeterminism), 2 usage or IO error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fixtures, metrics
from .ddmin import (
    MAX_BRUTE_FORCE_UNITS,
    OracleNondeterminismError,
    PredictionOracle,
    UnitSet,
    brute_force_minimal_sets,
    find_minimal_general,
    find_minimal_onepass,
    is_one_minimal,
    is_sufficient,
)
from .heads import Head, ManifestError, ModelBundle, load_manifest, predict, softmax, toy_extract
from .saliency import ExplanationResult, compose_cnn_map, compose_vit_map, compute_unit_weights, infer_grid_side
from .tensor import TensorFormatError, load_tensor, save_tensor, write_pgm


@dataclass
class RunConfig:
    """Search and output settings shared by explain and evaluate."""

    mode: str = "auto"  # general | onepass | auto
    n_init: int = 2
    repair: bool = True
    tau: float = 0.5
    seed: int = 0
    parallel: bool = False
    out_dir: Path | None = None
    baseline: str = "masked"
    vit_token_norms: bool = False

    def resolve_mode(self, kind: str) -> str:
        if self.mode != "auto":
            return self.mode
        return "onepass" if kind == "linear" else "general"


def make_oracle(head: Head, activations: np.ndarray, m: int) -> PredictionOracle:
    """Prediction oracle composing unit masking, the head forward, and argmax."""
    def classify(s: UnitSet) -> int:
        return predict(head.masked_logits(activations, s.indices(), m))

    return PredictionOracle(classify, m)


def explain_activations(
    head: Head,
    activations: np.ndarray,
    m: int,
    kind: str,
    out_hw: tuple[int, int],
    config: RunConfig,
) -> ExplanationResult:
    """Full pipeline on one activation stack: search, weights, saliency map."""
    oracle = make_oracle(head, activations, m)
    mode = config.resolve_mode(kind)
    if mode == "onepass":
        selected, stats = find_minimal_onepass(oracle, m, repair=config.repair)
    elif mode == "general":
        selected, stats = find_minimal_general(oracle, m, n_init=config.n_init, parallel=config.parallel)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    def forward(active):
        return head.masked_logits(activations, active, m)

    delta, weights = compute_unit_weights(forward, selected, oracle.target_class, baseline=config.baseline)
    if kind == "vit":
        norms = None
        if config.vit_token_norms:
            norms = np.sqrt((activations.astype(np.float64) ** 2).sum(axis=1))
        saliency = compose_vit_map(weights, selected, infer_grid_side(m), out_hw[0], out_hw[1], token_norms=norms)
    else:
        saliency = compose_cnn_map(activations, selected, weights, out_hw[0], out_hw[1])
    return ExplanationResult(
        target_class=oracle.target_class,
        selected=selected,
        delta=delta,
        weights=weights,
        map=saliency,
        stats=stats,
    )


def explain_bundle(bundle: ModelBundle, config: RunConfig) -> ExplanationResult:
    return explain_activations(
        bundle.head,
        bundle.activations,
        bundle.units,
        bundle.kind,
        bundle.manifest.input_hw,
        config,
    )


def _write_result(result: ExplanationResult, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_tensor(result.map, out_dir / "map.npy")
    write_pgm(result.map, out_dir / "map.pgm")
    payload = result.to_json_dict("map.npy", "map.pgm")
    result_path = out_dir / "result.json"
    result_path.write_text(json.dumps(payload, indent=2) + "\n")
    return result_path


def cmd_explain(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    bundle = load_manifest(args.manifest)
    t0 = time.perf_counter()
    result = explain_bundle(bundle, config)
    elapsed = time.perf_counter() - t0
    out_dir = config.out_dir if config.out_dir is not None else Path(args.manifest).parent
    result_path = _write_result(result, out_dir)
    if len(result.selected) == 0:
        print("warning: minimal sufficient set is empty (bias-dominated prediction); map is all zeros", file=sys.stderr)
    print(f"target_class: {result.target_class}")
    print(f"selected_units: {list(result.selected.indices())}")
    print(f"selected_count: {len(result.selected)}")
    print(f"forward_evaluations: {result.stats.forward_evaluations}")
    print(f"wall_time_s: {elapsed:.4f}")
    print(f"result: {result_path}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    bundle = load_manifest(args.manifest)
    try:
        payload = json.loads(Path(args.result).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read result {args.result}: {exc}") from exc

    m = bundle.units
    oracle = make_oracle(bundle.head, bundle.activations, m)
    selected = UnitSet.from_indices(m, payload["selected_units"])

    if int(payload["target_class"]) != oracle.target_class:
        print(f"FAIL: result target class {payload['target_class']} != bundle prediction {oracle.target_class}")
        return 1
    if not is_sufficient(oracle, selected):
        print(f"FAIL: {selected} is not sufficient")
        return 1
    print(f"ok: {selected} is sufficient for class {oracle.target_class}")
    if not is_one_minimal(oracle, selected):
        print(f"FAIL: {selected} is not 1-minimal")
        return 1
    print(f"ok: {selected} is 1-minimal")
    if m <= MAX_BRUTE_FORCE_UNITS:
        family = brute_force_minimal_sets(oracle, m)
        if selected not in family:
            print(f"FAIL: {selected} is not among the {len(family)} brute-force 1-minimal sets")
            return 1
        print(f"ok: member of the brute-force 1-minimal family ({len(family)} sets)")
    return 0


def _toy_confidence(head: Head, image: np.ndarray, seed: int, k: int, target: int) -> float:
    stack = toy_extract(image, seed, k)
    return float(softmax(head.forward(stack))[target])


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    out_dir = config.out_dir if config.out_dir is not None else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.records is not None:
        raw = json.loads(Path(args.records).read_text())
        records = [
            {field: rec.get(field) for field in metrics.RECORD_FIELDS}
            for rec in raw
        ]
        report = metrics.build_report(records)
        return _emit_report(report, out_dir)

    bundle = load_manifest(args.manifest)
    if bundle.kind not in ("linear", "mlp"):
        raise ManifestError(f"toy evaluation needs a linear or mlp bundle, got kind={bundle.kind!r}")
    if not args.images:
        raise ManifestError("toy evaluation needs at least one --images path")
    boxes = None
    if args.boxes is not None:
        boxes = json.loads(Path(args.boxes).read_text())["boxes"]

    h, w = bundle.manifest.input_hw
    k = bundle.units
    records = []
    for image_path in args.images:
        image = load_tensor(image_path)
        if image.ndim != 3 or image.shape[1:] != (h, w):
            raise ManifestError(
                f"image {image_path} has shape {image.shape}, expected (L, {h}, {w}) per manifest input_hw"
            )
        stack = toy_extract(image, config.seed, k)
        logits = bundle.head.forward(stack)
        target = predict(logits)
        y = float(softmax(logits)[target])

        result = explain_activations(bundle.head, stack, k, bundle.kind, (h, w), config)
        fmap = result.map.astype(np.float32)

        o = _toy_confidence(bundle.head, image * fmap[None, :, :], config.seed, k, target)
        d = _toy_confidence(bundle.head, image * (1.0 - fmap)[None, :, :], config.seed, k, target)

        masked_stack = toy_extract(image * fmap[None, :, :], config.seed, k)
        masked_result = explain_activations(bundle.head, masked_stack, k, bundle.kind, (h, w), config)

        record = {
            "y": y,
            "o": o,
            "d": d,
            "complexity": metrics.complexity(fmap),
            "coherency": metrics.coherency(fmap, masked_result.map),
            "iou": None,
            "precision": None,
            "recall": None,
            "regions": None,
            "pct_highlighted": None,
        }
        if boxes is not None:
            binary = metrics.binarize(fmap, config.tau)
            iou, precision, recall = metrics.localization_scores(binary, boxes)
            record.update(
                iou=iou,
                precision=precision,
                recall=recall,
                regions=float(metrics.count_regions(binary)),
                pct_highlighted=metrics.pct_highlighted(binary),
            )
        records.append(record)

    report = metrics.build_report(records)
    return _emit_report(report, out_dir)


def _emit_report(report: dict, out_dir: Path) -> int:
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    metrics.write_report_csv(report, out_dir / "report.csv")
    for name, value in report["aggregates"].items():
        if value is not None:
            print(f"{name}: {value:.6f}")
    print(f"report: {report_path}")
    return 0


def cmd_demo(args: argparse.Namespace) -> int:
    out_dir = Path(args.out) if args.out else Path(f"demo-{args.kind}-seed{args.seed}")
    if args.toy:
        if args.kind not in ("linear", "mlp"):
            raise ManifestError("--toy supports linear or mlp kinds")
        manifest, images, boxes = fixtures.write_toy_eval_fixture(
            out_dir,
            args.seed,
            kind=args.kind,
            k=args.units if args.units is not None else 6,
            c=args.classes,
            num_images=args.num_images,
        )
        print(f"manifest: {manifest}")
        for p in images:
            print(f"image: {p}")
        print(f"boxes: {boxes}")
        return 0
    if args.kind == "linear":
        m = args.units if args.units is not None else 10
        manifest = fixtures.write_linear_bundle(out_dir, args.seed, m=m, c=args.classes, bias_only=args.bias_only)
    elif args.kind == "mlp":
        m = args.units if args.units is not None else 8
        manifest = fixtures.write_mlp_bundle(out_dir, args.seed, m=m, c=args.classes)
    else:
        n = args.units if args.units is not None else 16
        manifest = fixtures.write_vit_bundle(out_dir, args.seed, n=n, c=args.classes)
    print(f"manifest: {manifest}")
    return 0


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        mode=getattr(args, "mode", "auto"),
        n_init=getattr(args, "n_init", 2),
        repair=not getattr(args, "no_repair", False),
        tau=getattr(args, "tau", 0.5),
        seed=getattr(args, "seed", 0),
        parallel=getattr(args, "parallel", False),
        out_dir=Path(args.out) if getattr(args, "out", None) else None,
        baseline=getattr(args, "baseline", "masked"),
        vit_token_norms=getattr(args, "vit_token_norms", False),
    )


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("general", "onepass", "auto"), default="auto")
    p.add_argument("--n-init", type=int, default=2, dest="n_init")
    p.add_argument("--no-repair", action="store_true", dest="no_repair")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--out", default=None)
    p.add_argument("--baseline", choices=("masked", "full"), default="masked")
    p.add_argument("--vit-token-norms", action="store_true", dest="vit_token_norms")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddexplain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="search a bundle for a minimal sufficient set and emit its saliency map")
    p.add_argument("manifest")
    _add_search_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("verify", help="recheck sufficiency and 1-minimality of an explain result")
    p.add_argument("manifest")
    p.add_argument("result")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evaluate", help="run the toy end-to-end metric harness")
    p.add_argument("manifest")
    p.add_argument("--images", nargs="*", default=[])
    p.add_argument("--boxes", default=None)
    p.add_argument("--records", default=None, help="precomputed confidence records JSON instead of the toy pipeline")
    _add_search_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("demo", help="generate a seeded demo bundle")
    p.add_argument("--kind", choices=("linear", "mlp", "vit"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--units", type=int, default=None)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--out", default=None)
    p.add_argument("--toy", action="store_true", help="emit a toy evaluation fixture (images + boxes)")
    p.add_argument("--num-images", type=int, default=1, dest="num_images")
    p.add_argument("--bias-only", action="store_true", dest="bias_only")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OracleNondeterminismError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ManifestError, TensorFormatError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

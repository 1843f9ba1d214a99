"""Command-line surface: synth, clean, eval, bench, stats.

Every command reads an optional flat config file (flags override it),
takes all randomness from seeds, writes machine-readable JSON to stdout or
--out, and exits nonzero with a one-line diagnostic on stderr on failure.
Paths are resolved against --workdir when relative.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import schemas
from .cast import StageStats, run_cast, validate_stage_stats
from .dataset import Dataset, read_manifest, write_manifest
from .embfile import read_embeddings, write_embeddings
from .fruits import (
    CosineMatcher,
    PairSpec,
    STANDARD_SLICES,
    TestFace,
    classify_track,
    measure_pipeline,
    verify_report,
)
from .inter import write_actions
from .synth import ReferenceEmbedder, generate, load_truth, save_truth, score_cleaning
from .cast import StaticEmbedder


def _resolve(workdir: str, path: str | None) -> str | None:
    if path is None:
        return None
    p = Path(path)
    return str(p if p.is_absolute() else Path(workdir) / p)


def _emit(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_values(args) -> dict:
    values = {}
    if getattr(args, "config", None):
        values = cfgmod.load_config(_resolve(args.workdir, args.config))
    return values


def _cmd_synth(args) -> int:
    values = cfgmod.merge(_load_values(args), {
        "synth.identity_count": args.identities,
        "synth.dimension": args.dimension,
        "synth.cluster_concentration": args.concentration,
        "synth.outlier_rate": args.outlier_rate,
        "synth.overlap_rate": args.overlap_rate,
        "synth.duplicate_rate": args.duplicate_rate,
        "synth.seed": args.seed,
        "synth.faces_lo": args.faces[0] if args.faces else None,
        "synth.faces_hi": args.faces[1] if args.faces else None,
    })
    cfg = cfgmod.synth_config(values)
    dataset, embeddings, truth = generate(cfg)
    write_manifest(dataset, _resolve(args.workdir, args.out_manifest))
    ordered = sorted(dataset.records, key=lambda r: (r.subject_id, r.face_id))
    write_embeddings(
        _resolve(args.workdir, args.out_embeddings),
        embeddings[[r.embedding_row for r in ordered]],
    )
    if args.out_truth:
        save_truth(truth, _resolve(args.workdir, args.out_truth))
    _emit(
        {
            "faces": dataset.face_count,
            "identities": dataset.subject_count,
            "dimension": cfg.dimension,
            "planted_merges": len(truth.true_merges),
            "planted_duplicates": len(truth.planted_duplicates),
            "seed": cfg.seed,
        },
        args.out,
    )
    return 0


def _static_embedder(dataset: Dataset, emb_paths: list[str]) -> StaticEmbedder:
    matrices = [read_embeddings(p) for p in emb_paths]
    rows = matrices[0].shape[0]
    ids = [f"__unused_{i}" for i in range(rows)]
    for rec in dataset.records:
        ids[rec.embedding_row] = rec.face_id
    return StaticEmbedder(ids, matrices)


def _cmd_clean(args) -> int:
    values = cfgmod.merge(_load_values(args), {
        "cast.iterations": args.iterations,
        "cast.seed": args.seed,
    })
    cast_cfg = cfgmod.cast_config(values)
    manifest_path = _resolve(args.workdir, args.manifest)
    dataset = read_manifest(manifest_path)
    if args.truth:
        truth = load_truth(_resolve(args.workdir, args.truth))
        embedder = ReferenceEmbedder(truth)
    else:
        if not args.embeddings:
            raise SystemExit("clean: need --embeddings or --truth")
        emb_paths = [_resolve(args.workdir, p) for p in args.embeddings]
        first = read_embeddings(emb_paths[0])
        dataset = read_manifest(manifest_path, embedding_count=first.shape[0])
        embedder = _static_embedder(dataset, emb_paths)
        truth = None

    test_centroids = None
    if args.test_embeddings:
        test_centroids = read_embeddings(_resolve(args.workdir, args.test_embeddings))

    result = run_cast(dataset, embedder, cast_cfg, test_centroids=test_centroids)

    out_dir = Path(_resolve(args.workdir, args.out_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(result.cleaned, out_dir / "cleaned_manifest.jsonl")
    write_embeddings(out_dir / "cleaned_embeddings.emb", result.embeddings)
    stage_rows = [s.to_dict() for s in result.stats]
    stats_obj = {"stages": stage_rows}
    schemas.validate_report("stage_stats", stats_obj)
    (out_dir / "stage_stats.json").write_text(
        json.dumps(stats_obj, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    hist_obj = {
        "iterations": [
            {"iteration": i + 1, "overlap": result.overlaps[i], **h.to_dict()}
            for i, h in enumerate(result.histograms)
        ]
    }
    schemas.validate_report("histograms", hist_obj)
    (out_dir / "histograms.json").write_text(
        json.dumps(hist_obj, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    for i, actions in enumerate(result.actions, start=1):
        write_actions(actions, out_dir / f"actions_iter{i}.jsonl")
    for i, iter_ds in enumerate(result.iteration_outputs, start=1):
        write_manifest(iter_ds, out_dir / f"cleaned_iter{i}.jsonl")

    summary = {
        "input_faces": dataset.face_count,
        "input_identities": dataset.subject_count,
        "output_faces": result.cleaned.face_count,
        "output_identities": result.cleaned.subject_count,
        "iterations": cast_cfg.iterations,
        "overlaps": result.overlaps,
        "stages": stage_rows,
        "seed": cast_cfg.seed,
        "scores": score_cleaning(result.cleaned, truth) if truth is not None else None,
    }
    schemas.validate_report("clean_summary", summary)
    _emit(summary, args.out)
    return 0


def _faces_from_manifest(dataset: Dataset) -> list[TestFace]:
    faces = []
    for rec in dataset.records:
        if rec.attributes is None:
            raise SystemExit(f"eval: face {rec.face_id} has no attributes")
        a = rec.attributes
        faces.append(
            TestFace(rec.face_id, rec.subject_id, a.age, a.gender, a.race, a.scenario)
        )
    return faces


def _cmd_eval(args) -> int:
    values = cfgmod.merge(_load_values(args), {
        "eval.max_impostor_pairs": args.max_impostor_pairs,
        "eval.seed": args.seed,
    })
    manifest_path = _resolve(args.workdir, args.manifest)
    emb_path = _resolve(args.workdir, args.embeddings)
    matrix = read_embeddings(emb_path)
    dataset = read_manifest(manifest_path, embedding_count=matrix.shape[0])
    faces = _faces_from_manifest(dataset)
    embeddings = {rec.face_id: matrix[rec.embedding_row] for rec in dataset.records}
    matcher = CosineMatcher(embeddings)
    if args.slices == "standard":
        specs = list(STANDARD_SLICES)
    else:
        specs = [PairSpec.parse(s) for s in args.slices.split(",")]
    targets = args.fmr_targets or values.get("eval.fmr_targets") or [1e-3, 1e-4]
    report = verify_report(
        matcher,
        faces,
        specs,
        [float(t) for t in targets],
        max_impostor_pairs=values.get("eval.max_impostor_pairs"),
        seed=values.get("eval.seed", 0),
    )
    schemas.validate_report("verify_report", report)
    _emit(report, args.out)
    return 0


def _cmd_bench(args) -> int:
    if args.stub_ms is not None:
        delay = args.stub_ms / 1000.0
        stages = [("stub_matcher", lambda: time.sleep(delay))]
    else:
        if not (args.manifest and args.embeddings):
            raise SystemExit("bench: need --stub-ms or --manifest with --embeddings")
        manifest_path = _resolve(args.workdir, args.manifest)
        emb_path = _resolve(args.workdir, args.embeddings)

        state: dict = {}

        def load():
            matrix = read_embeddings(emb_path)
            dataset = read_manifest(manifest_path, embedding_count=matrix.shape[0])
            state["matrix"] = matrix
            state["dataset"] = dataset

        def score():
            matrix = state["matrix"]
            n = min(512, matrix.shape[0])
            block = matrix[:n].astype(np.float64)
            state["scores"] = block @ block.T

        def metrics():
            scores = state["scores"]
            iu = np.triu_indices(scores.shape[0], k=1)
            vals = scores[iu]
            np.partition(vals, max(0, vals.size // 100))

        load()
        stages = [("load", load), ("score", score), ("metrics", metrics)]
    report = measure_pipeline(stages, repetitions=args.repetitions, warmup=args.warmup)
    budget = classify_track(report["total_ms"])
    report["track"] = budget.track
    report["track_limit_ms"] = budget.limit_ms
    schemas.validate_report("bench_report", report)
    _emit(report, args.out)
    return 0


def _cmd_stats(args) -> int:
    path = _resolve(args.workdir, args.stage_stats)
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    schemas.validate_report("stage_stats", obj)
    rows = [
        StageStats(r["stage"], r["iteration"], r["identities"], r["faces"])
        for r in obj["stages"]
    ]
    validate_stage_stats(rows)
    _emit(obj, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="castfruits",
        description="Embedding-dataset cleaning pipeline and verification benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--workdir", default=".", help="base for relative paths")
        p.add_argument("--config", help="flat key-value JSON config file")
        p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    common(p)
    p.add_argument("--out-manifest", required=True)
    p.add_argument("--out-embeddings", required=True)
    p.add_argument("--out-truth")
    p.add_argument("--identities", type=int)
    p.add_argument("--faces", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--dimension", type=int)
    p.add_argument("--concentration", type=float)
    p.add_argument("--outlier-rate", type=float)
    p.add_argument("--overlap-rate", type=float)
    p.add_argument("--duplicate-rate", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("clean", help="run the iterative cleaning pipeline")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", nargs="+", help="EMB1 file(s), one per iteration")
    p.add_argument("--truth", help="ground-truth file; uses the reference embedder")
    p.add_argument("--test-embeddings", help="EMB1 file of test-set centroids")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_clean)

    p = sub.add_parser("eval", help="verification metrics over attribute slices")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--slices", default="all", help="'standard' or comma list")
    p.add_argument("--fmr-targets", type=float, nargs="+")
    p.add_argument("--max-impostor-pairs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="time pipeline stages and classify the track")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--embeddings")
    p.add_argument("--stub-ms", type=float, help="bench a stub stage of this duration")
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--warmup", type=int, default=3)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("stats", help="validate and echo a stage-stats report")
    common(p)
    p.add_argument("--stage-stats", required=True)
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"castfruits {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from milvse.cli.plots import plot_attention, plot_k_sweep, plot_loss_curve
from milvse.cli.run_config import RunConfig, resolve_config
from milvse.data.dataset import PairedDataset, describe_dataset, load_dataset
from milvse.data.manifest import PairRecord
from milvse.data.sentences import (
    featurize_sentence,
    fetch_embedding_table,
    load_embedding_table,
)
from milvse.data.synthetic import generate_synthetic, write_synthetic
from milvse.objective.check import ToyProblem, objective_gradchecks
from milvse.objective.similarity import best_instance
from milvse.retrieval.index import (
    build_index,
    embed_with_attention,
    evaluate_split,
    normalize_rows,
    query,
    rank_of,
    search,
    split_videos,
)
from milvse.retrieval.metrics import format_table, write_report, write_table_csv
from milvse.trainer.checkpoint import Checkpoint, load_checkpoint
from milvse.trainer.experiments import (
    ExperimentResult,
    grid_search,
    relative_improvement,
    run_ablation,
    sweep_k,
)
from milvse.trainer.train import train
from milvse.utils.errors import ConfigError, DatasetError
from milvse.utils.logger import logger


def main(argv: list[str] | None = None) -> int:
    argparser = build_parser()
    args = argparser.parse_args(argv)
    try:
        cfg = resolve_config(args.config, args.set, flags(args))
        return args.handler(args, cfg)
    except (ValueError, RuntimeError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        return 1


def build_parser() -> argparse.ArgumentParser:
    argparser = argparse.ArgumentParser(
        prog="milvse",
        description="Train and query multiple-instance visual-semantic embeddings.",
    )
    commands = argparser.add_subparsers(dest="command", required=True)

    def command(name: str, handler, help: str) -> argparse.ArgumentParser:
        parser = commands.add_parser(name, help=help)
        parser.add_argument("--config", type=Path, help="JSON file of dotted config keys.")
        parser.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="Override one config key (repeatable).",
        )
        parser.add_argument("--out-dir", type=Path, help="Directory for every output file.")
        parser.set_defaults(handler=handler)
        return parser

    command("synth", cmd_synth, "Generate a planted-concept dataset.")
    command("train", cmd_train, "Train a model on data.manifest.")
    for name, handler, help in (
        ("eval", cmd_eval, "Evaluate sentence-to-video retrieval on a split."),
        ("query", cmd_query, "Rank videos for one sentence."),
        ("export-attention", cmd_export_attention, "Write the attention maps of a pair."),
    ):
        parser = command(name, handler, help)
        parser.add_argument("--checkpoint", type=Path, help="Sets run.checkpoint.")
        parser.add_argument("--split", help="Restrict the video corpus to a split (eval.split).")
        if name == "query":
            sentence = parser.add_mutually_exclusive_group()
            sentence.add_argument("--sentence", help="Sentence text (needs data.embeddings).")
            sentence.add_argument("--sentence-id", help="Pair id of a stored sentence.")
            parser.add_argument("--top", type=int, help="Number of videos to return.")
        if name == "export-attention":
            parser.add_argument("--pair", help="Pair id to export (export.pair).")
    command("ablate", cmd_ablate, "Train and evaluate the feature ablation rows.")
    command("sweep-k", cmd_sweep_k, "Train and evaluate one model per K.")
    command("grid", cmd_grid, "Select d, K and alpha by validation nMR.")
    command("gradcheck", cmd_gradcheck, "Finite-difference check of the objective.")
    command("loss-curve", cmd_loss_curve, "Plot hinge vs pseudo-Huber over the gap.")
    fetch = command("fetch-embeddings", cmd_fetch_embeddings, "Download a word table.")
    fetch.add_argument("--url", help="Sets fetch.url.")
    fetch.add_argument("--member", help="Zip member to extract (fetch.member).")
    return argparser


def flags(args: argparse.Namespace) -> dict:
    """Dedicated flags as config keys, so resolved_config.json replays the run."""
    checkpoint = getattr(args, "checkpoint", None)
    values = {
        "run.out_dir": str(args.out_dir) if args.out_dir else None,
        "run.checkpoint": str(checkpoint) if checkpoint else None,
        "eval.split": getattr(args, "split", None),
        "query.top": getattr(args, "top", None),
        "export.pair": getattr(args, "pair", None),
        "fetch.url": getattr(args, "url", None),
        "fetch.member": getattr(args, "member", None),
    }
    # Either sentence flag replaces whichever one the config file carried
    if getattr(args, "sentence", None) is not None:
        values.update({"query.sentence": args.sentence, "query.sentence_id": ""})
    if getattr(args, "sentence_id", None) is not None:
        values.update({"query.sentence_id": args.sentence_id, "query.sentence": ""})
    return values


def required(cfg: RunConfig, key: str, flag: str) -> str:
    if not cfg[key]:
        raise ConfigError(f"Config key '{key}' is not set (pass {flag})")
    return cfg[key]


def load_run_checkpoint(cfg: RunConfig) -> Checkpoint:
    return load_checkpoint(Path(required(cfg, "run.checkpoint", "--checkpoint")))


def load_data(cfg: RunConfig) -> PairedDataset:
    if not cfg["data.manifest"]:
        raise ConfigError("Config key 'data.manifest' is not set")
    dataset = load_dataset(Path(cfg["data.manifest"]), embedding_table(cfg))
    logger.info(f"Dataset: {json.dumps(describe_dataset(dataset))}")
    return dataset


def find_record(dataset: PairedDataset, pair_id: str) -> PairRecord:
    record = next((r for r in dataset.manifest.records if r.pair_id == pair_id), None)
    if record is None or pair_id not in dataset.sentences:
        raise DatasetError(f"No pair with id '{pair_id}'")
    return record


def embedding_table(cfg: RunConfig):
    if not cfg["data.embeddings"]:
        return None
    return load_embedding_table(Path(cfg["data.embeddings"]), cfg["data.embeddings_limit"] or None)


def write_json(data, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as file:
        json.dump(data, file, indent=2, ensure_ascii=False)
    logger.info(f"Exported to {path}")
    return path


def cmd_synth(args, cfg: RunConfig) -> int:
    data = generate_synthetic(cfg.synthetic())
    manifest_path = write_synthetic(data, cfg.out_dir)
    cfg.update({"data.manifest": str(manifest_path)})
    cfg.write()
    summary = describe_dataset(PairedDataset(data.manifest, data.videos, data.sentences))
    logger.info(f"Dataset: {json.dumps(summary)}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    dataset = load_data(cfg)
    train_cfg = cfg.train_config(dataset.video_dim, dataset.sentence_dim)
    cfg.write()
    result = train(dataset, train_cfg, cfg.out_dir)
    if dataset.pairs("test"):
        report = evaluate_split(dataset, result.best, "test")
        write_report(report, cfg.out_dir / "report.json")
        print(format_table([("milvse", report)]))
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    checkpoint = load_run_checkpoint(cfg)
    dataset = load_data(cfg)
    cfg.write()
    report = evaluate_split(dataset, checkpoint, cfg["eval.split"] or "test")
    write_report(report, cfg.out_dir / "report.json")
    print(format_table([(Path(cfg["run.checkpoint"]).stem, report)]))
    return 0


def corpus(dataset: PairedDataset, split: str | None) -> dict:
    return split_videos(dataset, split) if split else dict(dataset.videos)


def cmd_query(args, cfg: RunConfig) -> int:
    text, pair_id = cfg["query.sentence"], cfg["query.sentence_id"]
    if bool(text) == bool(pair_id):
        raise ConfigError("Set exactly one of 'query.sentence' (--sentence) and 'query.sentence_id' (--sentence-id)")
    checkpoint = load_run_checkpoint(cfg)
    dataset = load_data(cfg)
    cfg.write()
    if text:
        table = embedding_table(cfg)
        if table is None:
            raise ConfigError("Querying with --sentence needs config key 'data.embeddings'")
        sentence = featurize_sentence(text, table)
        record = None
    else:
        record = find_record(dataset, pair_id)
        sentence = dataset.sentences[pair_id]

    index = build_index(corpus(dataset, cfg["eval.split"] or None), checkpoint)
    results = query(sentence, index, checkpoint, k=cfg["query.top"])
    for rank, (video_id, score) in enumerate(results, start=1):
        print(f"{rank}\t{video_id}\t{score:.6f}")

    export = {
        "sentence": text or pair_id,
        "results": [{"video_id": v, "score": s} for v, s in results],
    }
    if record is not None and record.video_id in index:
        truth_rank = rank_of(sentence, index, checkpoint, record.video_id)
        logger.info(f"Ground-truth video {record.video_id} ranked {truth_rank}/{len(index)}")
        export["truth"] = {"video_id": record.video_id, "rank": truth_rank}
    write_json(export, cfg.out_dir / "query.json")
    return 0


def cmd_export_attention(args, cfg: RunConfig) -> int:
    pair_id = required(cfg, "export.pair", "--pair")
    checkpoint = load_run_checkpoint(cfg)
    dataset = load_data(cfg)
    cfg.write()
    record = find_record(dataset, pair_id)

    phi, video_attention = embed_with_attention(dataset.videos[record.video_id], checkpoint, "video")
    psi, sentence_attention = embed_with_attention(dataset.sentences[record.pair_id], checkpoint, "sentence")
    index = build_index(corpus(dataset, cfg["eval.split"] or record.split or None), checkpoint)
    ((predicted_id, predicted_score),) = search(normalize_rows(psi), index, 1)
    predicted_phi, predicted_attention = embed_with_attention(
        dataset.videos[predicted_id], checkpoint, "video"
    )

    def instance(video_phi) -> dict:
        i, j, score = best_instance(video_phi, psi)
        return {"video_row": i, "sentence_row": j, "score": score}

    export = {
        "pair_id": record.pair_id,
        "sentence": record.sentence,
        "video": {"id": record.video_id, "attention": video_attention.tolist()},
        "sentence_attention": sentence_attention.tolist(),
        "best_instance": instance(phi),
        "predicted": {
            "id": predicted_id,
            "score": predicted_score,
            "attention": predicted_attention.tolist(),
            "best_instance": instance(predicted_phi),
        },
    }
    write_json(export, cfg.out_dir / f"attention_{record.pair_id}.json")
    plot_attention(
        {
            f"video {record.video_id}": video_attention,
            f"sentence {record.pair_id}": sentence_attention,
            f"predicted video {predicted_id}": predicted_attention,
        },
        cfg.out_dir / f"attention_{record.pair_id}.png",
    )
    return 0


def experiment_rows(results: list[ExperimentResult]) -> list[dict]:
    return [
        {
            "name": result.name,
            "config": result.config.to_dict(),
            "report": result.report.to_json(),
            "seeds": [report.to_json() for report in result.reports],
            "relative_improvement": change,
        }
        for result, change in zip(results, relative_improvement(results))
    ]


def cmd_ablate(args, cfg: RunConfig) -> int:
    dataset = load_data(cfg)
    base = cfg.train_config(dataset.video_dim, dataset.sentence_dim)
    cfg.write()
    results = run_ablation(dataset, base, cfg.ablation(), workers=base.workers)
    print(format_table([(r.name, r.report) for r in results]))
    for result, change in zip(results[1:], relative_improvement(results)[1:]):
        print(f"{result.name}: {change:+.2f}% relative nMR improvement over the row above")
    write_json(experiment_rows(results), cfg.out_dir / "ablation.json")
    rows = [(r.name, r.report) for r in results]
    write_table_csv(rows, cfg.out_dir / "ablation.csv", relative_improvement(results))
    return 0


def cmd_sweep_k(args, cfg: RunConfig) -> int:
    dataset = load_data(cfg)
    base = cfg.train_config(dataset.video_dim, dataset.sentence_dim)
    cfg.write()
    results = sweep_k(dataset, base, cfg["sweep.K"], workers=base.workers)
    print(format_table([(r.name, r.report) for r in results]))
    write_json(experiment_rows(results), cfg.out_dir / "sweep_k.json")
    write_table_csv([(r.name, r.report) for r in results], cfg.out_dir / "sweep_k.csv")
    plot_k_sweep([r.config.K for r in results], [r.nmr for r in results], cfg.out_dir / "sweep_k.png")
    return 0


def cmd_grid(args, cfg: RunConfig) -> int:
    dataset = load_data(cfg)
    base = cfg.train_config(dataset.video_dim, dataset.sentence_dim)
    cfg.write()
    result = grid_search(dataset, base, cfg.grid(), workers=base.workers)
    print(format_table([(r.name, r.report) for r in result.results]))
    write_json(
        {"best": result.best.to_dict(), "points": experiment_rows(result.results)},
        cfg.out_dir / "grid.json",
    )
    write_table_csv([(r.name, r.report) for r in result.results], cfg.out_dir / "grid.csv")
    print(f"Best grid point: d={result.best.d} K={result.best.K} alpha={result.best.loss.alpha:g}")
    return 0


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    problem = ToyProblem(
        triplets=cfg["gradcheck.triplets"],
        steps=cfg["gradcheck.steps"],
        input_dim=cfg["gradcheck.input_dim"],
        d=cfg["gradcheck.d"],
        K=cfg["gradcheck.K"],
        seed=cfg["gradcheck.seed"],
    )
    cfg.write()
    reports = objective_gradchecks(problem, cfg.loss())
    for name, report in reports.items():
        print(f"{name}: {report.summary()}")
    passed = all(report.passed for report in reports.values())
    worst = max(report.max_error for report in reports.values())
    print(f"{'PASS' if passed else 'FAIL'} max_rel_err={worst:.3e}")
    write_json(
        {"problem": asdict(problem), "reports": {n: asdict(r) for n, r in reports.items()}},
        cfg.out_dir / "gradcheck.json",
    )
    return 0 if passed else 1


def cmd_loss_curve(args, cfg: RunConfig) -> int:
    cfg.write()
    plot_loss_curve(cfg["loss.rho"], cfg["loss.delta"], cfg.out_dir / "loss_curve.png")
    return 0


def cmd_fetch_embeddings(args, cfg: RunConfig) -> int:
    path = fetch_embedding_table(cfg.out_dir, cfg["fetch.url"], cfg["fetch.member"] or None)
    cfg.update({"data.embeddings": str(path)})
    cfg.write()
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

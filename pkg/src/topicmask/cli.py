"""Batch pipeline front-end: ingest -> sweep -> wordlist -> pretrain ->
train -> eval -> report, with config hashing, artifact manifests, and
multi-seed aggregation.

Every stage records its inputs, outputs, and the effective config hash in
manifest.json; timestamps live only there, so repeated runs with the same
config and seed produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import copy
import statistics
import sys
import time
from pathlib import Path

from . import classifier, coherence, corpus as corpus_mod, encoder, lda, masking, mpl, wordlist
from .store import canonical_json, read_json, sha256_bytes, sha256_tree, write_json
from .synthetic import write_benchmark_jsonl

STAGES = ("ingest", "sweep", "wordlist", "pretrain", "train", "eval", "report")

DEFAULT_CONFIG: dict = {
    "corpus_path": None,
    "stopwords_path": None,
    "out_dir": "out",
    "preprocess": {"max_df_frac": 1.0, "min_count": 1},
    "split": {"n_gold_per_class": 10, "n_unlabeled": 500, "n_dev": 100, "seed": 0},
    "lda": {"n_topics": None, "alpha": None, "beta_lda": 0.01, "sweeps": 200, "burn_in": 100, "seed": 0},
    "sweep": {"k_steps": 3},
    "coherence": {"epsilon": 1e-12, "window": 110, "gamma": 1.0},
    "wordlist": {"method": "relevance", "lambda_rel": 0.2, "n_per_topic": 50},
    "masking": {"policy": "objective", "rate": 0.15},
    "encoder": {"dim": 16, "context": 5, "epochs": 3, "lr": 1e-3, "seed": 0},
    "trainer": {
        "temperature": 0.5,
        "conf_threshold": 0.9,
        "lambda_u_ramp_steps": 6000,
        "max_steps": 7000,
        "warmup_steps": 50,
        "eval_every": 500,
        "early_stop_delta": 0.005,
        "early_stop_patience": 4,
        "batch_gold": 4,
        "batch_unlabeled": 8,
        "lr_encoder": 1e-3,
        "lr_head": 1e-3,
        "smoothing": 0.15,
        "finetune_lr": 1e-3,
        "finetune_epochs": 10,
        "finetune_batch": 32,
        "augment_prob": 0.9,
        "augment_k": 5,
        "hidden": 32,
        "train_embeddings": False,
    },
    "seeds": [0],
}


class PipelineError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in out:
            raise ValueError(f"unknown config key: {key!r}")
        if isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | Path | None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        cfg = _merge(cfg, read_json(path))
    for key, val in (overrides or {}).items():
        section = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            section = section[p]
        section[leaf] = val
    if cfg.get("corpus_path") is None:
        raise ValueError("config is missing corpus_path")
    return cfg


def config_hash(cfg: dict) -> str:
    hashed = {k: v for k, v in cfg.items() if k != "out_dir"}
    return sha256_bytes(canonical_json(hashed).encode())


def trainer_config(cfg: dict, seed: int) -> mpl.TrainerConfig:
    return mpl.TrainerConfig(seed=seed, **cfg["trainer"])


# ---------------------------------------------------------------------------
# manifest bookkeeping


def _load_manifest(out: Path) -> dict:
    path = out / "manifest.json"
    if path.exists():
        return read_json(path)
    return {"entries": []}


def _record(out: Path, stage: str, cfg: dict, inputs: dict[str, str], outputs: list[str]) -> None:
    manifest = _load_manifest(out)
    manifest["entries"].append(
        {
            "stage": stage,
            "config_hash": config_hash(cfg),
            "inputs": inputs,
            "outputs": {rel: sha256_tree(out / rel) for rel in outputs},
            "seeds": cfg["seeds"],
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
    )
    write_json(out / "manifest.json", manifest)


def _require(out: Path, stage: str, producer: str, cfg: dict) -> dict[str, str]:
    """Check that `producer` ran with the same config and that its outputs
    are unmodified; return their hashes for the consumer's input record."""
    manifest = _load_manifest(out)
    entries = [e for e in manifest["entries"] if e["stage"] == producer]
    if not entries:
        raise PipelineError(stage, f"missing prerequisite artifacts; run '{producer}' first")
    entry = entries[-1]
    if entry["config_hash"] != config_hash(cfg):
        raise PipelineError(
            stage, f"config hash changed since '{producer}' ran; rerun '{producer}'"
        )
    for rel, recorded in entry["outputs"].items():
        path = out / rel
        if not path.exists() or sha256_tree(path) != recorded:
            raise PipelineError(stage, f"stale or missing artifact {rel!r}; rerun '{producer}'")
    return dict(entry["outputs"])


# ---------------------------------------------------------------------------
# stages


def _load_corpus_and_splits(out: Path):
    corpus = corpus_mod.load_corpus(out / "corpus.json")
    raw = read_json(out / "splits.json")
    by_id = {d.id: d for d in corpus.documents}
    gold = tuple(by_id[i] for i in raw["gold"])
    unlabeled = tuple(
        corpus_mod.Document(by_id[i].id, by_id[i].tokens, None) for i in raw["unlabeled"]
    )
    dev = tuple(by_id[i] for i in raw["dev"])
    test = tuple(by_id[i] for i in raw["test"])
    splits = corpus_mod.SplitSet(gold, unlabeled, dev, test, dict(raw["unlabeled_truth"]))
    return corpus, splits


def _train_corpus(corpus, splits):
    """Documents visible to unsupervised stages: gold plus unlabeled."""
    return corpus.with_documents(splits.gold + splits.unlabeled)


def stage_ingest(cfg: dict, out: Path) -> None:
    stopwords = (
        corpus_mod.load_stopwords(cfg["stopwords_path"]) if cfg["stopwords_path"] else frozenset()
    )
    raw = corpus_mod.ingest_jsonl(cfg["corpus_path"])
    pre = corpus_mod.preprocess(
        raw,
        stopwords=stopwords,
        max_df_frac=cfg["preprocess"]["max_df_frac"],
        min_count=cfg["preprocess"]["min_count"],
    )
    splits = corpus_mod.split(
        pre,
        n_gold_per_class=cfg["split"]["n_gold_per_class"],
        n_unlabeled=cfg["split"]["n_unlabeled"],
        n_dev=cfg["split"]["n_dev"],
        seed=cfg["split"]["seed"],
    )
    corpus_mod.save_corpus(out / "corpus.json", pre)
    write_json(
        out / "splits.json",
        {
            "gold": [d.id for d in splits.gold],
            "unlabeled": [d.id for d in splits.unlabeled],
            "dev": [d.id for d in splits.dev],
            "test": [d.id for d in splits.test],
            "unlabeled_truth": splits.unlabeled_truth,
        },
    )
    inputs = {"corpus_path": sha256_tree(cfg["corpus_path"])}
    _record(out, "ingest", cfg, inputs, ["corpus.json", "splits.json"])


def stage_sweep(cfg: dict, out: Path) -> None:
    inputs = _require(out, "sweep", "ingest", cfg)
    corpus, splits = _load_corpus_and_splits(out)
    train_docs = _train_corpus(corpus, splits)
    m = corpus.n_classes
    if m < 2:
        raise PipelineError("sweep", "need at least 2 classes to pick candidate topic counts")
    lda_cfg = wordlist.LdaConfig(
        alpha=cfg["lda"]["alpha"],
        beta_lda=cfg["lda"]["beta_lda"],
        sweeps=cfg["lda"]["sweeps"],
        burn_in=cfg["lda"]["burn_in"],
        seed=cfg["lda"]["seed"],
    )
    coh_cfg = coherence.CoherenceConfig(**cfg["coherence"])
    scores = wordlist.coherence_sweep(train_docs, m, cfg["sweep"]["k_steps"], lda_cfg, coh_cfg)
    lines = ["K,measure,score"] + [f"{k},c_v,{repr(s)}" for k, s in scores]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_json(
        out / "sweep.json",
        {"chosen_k": wordlist.select_k_elbow(scores), "scores": [[k, s] for k, s in scores]},
    )
    _record(out, "sweep", cfg, inputs, ["sweep.csv", "sweep.json"])


def stage_wordlist(cfg: dict, out: Path) -> None:
    inputs = _require(out, "wordlist", "ingest", cfg)
    corpus, splits = _load_corpus_and_splits(out)
    train_docs = _train_corpus(corpus, splits)
    n_topics = cfg["lda"]["n_topics"]
    if n_topics is None:
        inputs.update(_require(out, "wordlist", "sweep", cfg))
        n_topics = read_json(out / "sweep.json")["chosen_k"]
    method = cfg["wordlist"]["method"]
    if method == "relevance":
        model = lda.fit_lda(
            train_docs,
            n_topics=n_topics,
            alpha=cfg["lda"]["alpha"],
            beta_lda=cfg["lda"]["beta_lda"],
            sweeps=cfg["lda"]["sweeps"],
            burn_in=cfg["lda"]["burn_in"],
            seed=cfg["lda"]["seed"],
        )
        lda.save_model(out / "lda_model", model)
        twl = wordlist.build_relevance_list(
            model, cfg["wordlist"]["lambda_rel"], cfg["wordlist"]["n_per_topic"]
        )
        outputs = ["lda_model", "wordlist.txt"]
    elif method == "tfidf":
        twl = wordlist.build_tfidf_list(train_docs, cfg["wordlist"]["n_per_topic"])
        outputs = ["wordlist.txt"]
    else:
        raise PipelineError("wordlist", f"unknown word-list method {method!r}")
    wordlist.save_topic_word_list(out / "wordlist.txt", twl, corpus)
    _record(out, "wordlist", cfg, inputs, outputs)


def stage_pretrain(cfg: dict, out: Path) -> None:
    inputs = _require(out, "pretrain", "ingest", cfg)
    corpus, splits = _load_corpus_and_splits(out)
    train_docs = _train_corpus(corpus, splits)
    policy_name = cfg["masking"]["policy"]
    enc = cfg["encoder"]
    if policy_name == "none":
        emb = encoder.init_embeddings(
            len(corpus.vocab), enc["dim"], enc["seed"], corpus.vocab.hash()
        )
    else:
        if policy_name == "objective":
            inputs.update(_require(out, "pretrain", "wordlist", cfg))
            twl = wordlist.load_topic_word_list(out / "wordlist.txt", corpus)
            policy = masking.MaskingPolicy.objective(twl.words, cfg["masking"]["rate"])
        elif policy_name == "random":
            policy = masking.MaskingPolicy.random(cfg["masking"]["rate"])
        else:
            raise PipelineError("pretrain", f"unknown masking policy {policy_name!r}")
        emb = encoder.pretrain_mlm(
            train_docs,
            policy,
            d=enc["dim"],
            context=enc["context"],
            epochs=enc["epochs"],
            lr=enc["lr"],
            seed=enc["seed"],
        )
    encoder.save_embeddings(out / "embeddings", emb)
    _record(out, "pretrain", cfg, inputs, ["embeddings"])


def stage_train(cfg: dict, out: Path) -> None:
    inputs = _require(out, "train", "ingest", cfg)
    inputs.update(_require(out, "train", "pretrain", cfg))
    corpus, splits = _load_corpus_and_splits(out)
    emb = encoder.load_embeddings(out / "embeddings", corpus)
    outputs = []
    for seed in cfg["seeds"]:
        tcfg = trainer_config(cfg, seed)
        result = mpl.train(splits, emb, tcfg)
        student = mpl.finetune_student(result.student, splits.gold, tcfg)
        run_dir = out / "runs" / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        classifier.save_checkpoint(
            run_dir / "student_head", student.head,
            student.opt_head or classifier.AdamWState.init(student.head.to_dict()),
            config_hash(cfg),
        )
        mpl.write_history(run_dir / "history.csv", result.history)
        outputs.extend([f"runs/seed_{seed}/student_head", f"runs/seed_{seed}/history.csv"])
    _record(out, "train", cfg, inputs, outputs)


def stage_eval(cfg: dict, out: Path) -> None:
    inputs = _require(out, "eval", "ingest", cfg)
    inputs.update(_require(out, "eval", "train", cfg))
    corpus, splits = _load_corpus_and_splits(out)
    emb = encoder.load_embeddings(out / "embeddings", corpus)
    outputs = []
    for seed in cfg["seeds"]:
        run_dir = out / "runs" / f"seed_{seed}"
        head, _, _ = classifier.load_checkpoint(run_dir / "student_head")
        model = mpl.Classifier(emb=emb, head=head)
        test_res = mpl.evaluate(model, splits.test)
        dev_res = mpl.evaluate(model, splits.dev)
        write_json(
            run_dir / "result.json",
            {
                "seed": seed,
                "test_accuracy": test_res.accuracy,
                "dev_accuracy": dev_res.accuracy,
                "per_class_accuracy": {str(c): a for c, a in test_res.per_class.items()},
                "n_test": test_res.n,
            },
        )
        outputs.append(f"runs/seed_{seed}/result.json")
    _record(out, "eval", cfg, inputs, outputs)


def aggregate_accuracies(values: list[float]) -> dict:
    """Mean and sample standard deviation over per-seed accuracies."""
    mean = sum(values) / len(values)
    stdev = statistics.stdev(values) if len(values) > 1 else 0.0
    return {"n": len(values), "mean": mean, "stdev": stdev}


def stage_report(cfg: dict, out: Path) -> None:
    inputs = _require(out, "report", "eval", cfg)
    runs = []
    for seed in cfg["seeds"]:
        runs.append(read_json(out / "runs" / f"seed_{seed}" / "result.json"))
    report = {
        "config": {k: v for k, v in cfg.items() if k != "out_dir"},
        "config_hash": config_hash(cfg),
        "runs": runs,
        "aggregate": aggregate_accuracies([r["test_accuracy"] for r in runs]),
    }
    write_json(out / "report.json", report)
    _record(out, "report", cfg, inputs, ["report.json"])


def masking_comparison_table(results: dict[str, list[float]]) -> dict:
    """Side-by-side aggregate of per-policy accuracy lists, with per-seed
    deltas of the topic-word policy against the random policy."""
    table = {name: aggregate_accuracies(vals) for name, vals in results.items()}
    out = {"policies": table}
    if "objective" in results and "random" in results:
        deltas = [o - r for o, r in zip(results["objective"], results["random"])]
        out["objective_minus_random"] = {
            "per_seed": deltas,
            "mean": sum(deltas) / len(deltas),
        }
    return out


def run_subcommand(name: str, cfg: dict) -> None:
    """Run one pipeline stage; raises PipelineError on unmet prerequisites."""
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    stages = {
        "ingest": stage_ingest,
        "sweep": stage_sweep,
        "wordlist": stage_wordlist,
        "pretrain": stage_pretrain,
        "train": stage_train,
        "eval": stage_eval,
        "report": stage_report,
    }
    if name == "pipeline":
        for stage in STAGES:
            stages[stage](cfg, out)
        return
    if name not in stages:
        raise PipelineError(name, "unknown stage")
    stages[name](cfg, out)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="topicmask",
        description="Topic-word masking and semi-supervised classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("pipeline",):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--seed", type=int, action="append", help="replace the config seed list")
        p.add_argument("--corpus", help="corpus path override")
        p.add_argument("--masking", choices=["objective", "random", "none"], help="masking policy override")
    synth = sub.add_parser("synth", help="write a synthetic benchmark corpus")
    synth.add_argument("--out", required=True, help="JSONL output path")
    synth.add_argument("--classes", type=int, default=4)
    synth.add_argument("--vocab", type=int, default=200)
    synth.add_argument("--docs", type=int, default=1140)
    synth.add_argument("--doc-len", type=int, default=30)
    synth.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            write_benchmark_jsonl(
                args.out,
                n_classes=args.classes,
                vocab_size=args.vocab,
                n_docs=args.docs,
                doc_len=args.doc_len,
                seed=args.seed,
            )
            return 0
        overrides: dict = {}
        if args.out:
            overrides["out_dir"] = args.out
        if args.seed:
            overrides["seeds"] = args.seed
        if args.corpus:
            overrides["corpus_path"] = args.corpus
        if args.masking:
            overrides["masking.policy"] = args.masking
        cfg = load_config(args.config, overrides)
        run_subcommand(args.command, cfg)
        return 0
    except (PipelineError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

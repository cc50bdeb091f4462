import json
import statistics
from pathlib import Path

import pytest

from topicmask.cli import (
    PipelineError,
    aggregate_accuracies,
    config_hash,
    load_config,
    main,
    masking_comparison_table,
    run_subcommand,
)
from topicmask.store import read_json, write_json
from topicmask.synthetic import write_benchmark_jsonl


def small_config(tmp_path, **overrides):
    corpus_path = tmp_path / "corpus.jsonl"
    if not corpus_path.exists():
        write_benchmark_jsonl(corpus_path, n_classes=3, vocab_size=40, n_docs=150, doc_len=15, seed=1)
    cfg = {
        "corpus_path": str(corpus_path),
        "out_dir": str(tmp_path / "out"),
        "split": {"n_gold_per_class": 5, "n_unlabeled": 60, "n_dev": 30, "seed": 0},
        "lda": {"n_topics": None, "sweeps": 20, "burn_in": 5, "seed": 0},
        "sweep": {"k_steps": 2},
        "coherence": {"window": 10},
        "wordlist": {"method": "relevance", "lambda_rel": 0.3, "n_per_topic": 8},
        "encoder": {"dim": 8, "context": 4, "epochs": 1, "lr": 1e-3, "seed": 0},
        "trainer": {
            "max_steps": 24,
            "warmup_steps": 4,
            "eval_every": 8,
            "lambda_u_ramp_steps": 12,
            "batch_gold": 3,
            "batch_unlabeled": 6,
            "hidden": 8,
            "finetune_epochs": 1,
            "early_stop_patience": 50,
        },
        "seeds": [0, 1],
    }
    cfg_path = tmp_path / "cfg.json"
    write_json(cfg_path, cfg)
    return load_config(cfg_path, overrides)


def run_pipeline(cfg):
    for stage in ("ingest", "sweep", "wordlist", "pretrain", "train", "eval", "report"):
        run_subcommand(stage, cfg)


class TestPipeline:
    def test_full_pipeline_report_shape(self, tmp_path):
        cfg = small_config(tmp_path)
        run_pipeline(cfg)
        out = Path(cfg["out_dir"])
        report = read_json(out / "report.json")
        assert len(report["runs"]) == 2
        assert {r["seed"] for r in report["runs"]} == {0, 1}
        agg = report["aggregate"]
        accs = [r["test_accuracy"] for r in report["runs"]]
        assert agg["mean"] == pytest.approx(sum(accs) / 2, abs=1e-12)
        assert agg["stdev"] == pytest.approx(statistics.stdev(accs), abs=1e-12)
        assert agg["n"] == 2

    def test_sweep_csv_rows(self, tmp_path):
        cfg = small_config(tmp_path)
        run_subcommand("ingest", cfg)
        run_subcommand("sweep", cfg)
        lines = (Path(cfg["out_dir"]) / "sweep.csv").read_text().splitlines()
        assert lines[0] == "K,measure,score"
        assert len(lines) == 3  # two candidates
        assert lines[1].startswith("3,c_v,") and lines[2].startswith("6,c_v,")

    def test_missing_prerequisite_names_stage(self, tmp_path):
        cfg = small_config(tmp_path)
        with pytest.raises(PipelineError, match="ingest"):
            run_subcommand("sweep", cfg)

    def test_config_change_detected(self, tmp_path):
        cfg = small_config(tmp_path)
        run_subcommand("ingest", cfg)
        changed = json.loads(json.dumps(cfg))
        changed["trainer"]["max_steps"] = 999
        with pytest.raises(PipelineError, match="config"):
            run_subcommand("sweep", changed)

    def test_stale_artifact_detected(self, tmp_path):
        cfg = small_config(tmp_path)
        run_subcommand("ingest", cfg)
        out = Path(cfg["out_dir"])
        (out / "corpus.json").write_text('{"tampered": true}')
        with pytest.raises(PipelineError, match="stale"):
            run_subcommand("sweep", cfg)

    def test_random_masking_skips_wordlist(self, tmp_path):
        cfg = small_config(tmp_path, **{"masking.policy": "random"})
        run_subcommand("ingest", cfg)
        run_subcommand("pretrain", cfg)
        assert (Path(cfg["out_dir"]) / "embeddings" / "meta.json").exists()

    def test_none_policy_writes_untrained_embeddings(self, tmp_path):
        cfg = small_config(tmp_path, **{"masking.policy": "none"})
        run_subcommand("ingest", cfg)
        run_subcommand("pretrain", cfg)
        assert (Path(cfg["out_dir"]) / "embeddings" / "E.npy").exists()


class TestDeterminism:
    def test_reruns_byte_identical_excluding_manifest(self, tmp_path):
        cfg1 = small_config(tmp_path, out_dir=str(tmp_path / "o1"))
        run_pipeline(cfg1)
        cfg2 = json.loads(json.dumps(cfg1))
        cfg2["out_dir"] = str(tmp_path / "o2")
        run_pipeline(cfg2)
        o1, o2 = Path(cfg1["out_dir"]), Path(cfg2["out_dir"])
        files1 = sorted(p.relative_to(o1) for p in o1.rglob("*") if p.is_file())
        files2 = sorted(p.relative_to(o2) for p in o2.rglob("*") if p.is_file())
        assert files1 == files2
        for rel in files1:
            if rel.name == "manifest.json":
                continue
            assert (o1 / rel).read_bytes() == (o2 / rel).read_bytes(), rel


class TestConfig:
    def test_defaults_cover_everything_but_corpus(self, tmp_path):
        with pytest.raises(ValueError, match="corpus_path"):
            load_config(None)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        write_json(p, {"corpus_path": "x", "bogus_section": 1})
        with pytest.raises(ValueError, match="bogus_section"):
            load_config(p)

    def test_hash_ignores_out_dir(self, tmp_path):
        cfg = small_config(tmp_path)
        other = json.loads(json.dumps(cfg))
        other["out_dir"] = "elsewhere"
        assert config_hash(cfg) == config_hash(other)
        other["seeds"] = [5]
        assert config_hash(cfg) != config_hash(other)


class TestAggregation:
    def test_matches_reference_formulas(self):
        vals = [0.61, 0.64, 0.59, 0.66, 0.62]
        agg = aggregate_accuracies(vals)
        assert agg["mean"] == pytest.approx(sum(vals) / len(vals), abs=1e-12)
        assert agg["stdev"] == pytest.approx(statistics.stdev(vals), abs=1e-12)

    def test_single_seed_stdev_zero(self):
        assert aggregate_accuracies([0.5])["stdev"] == 0.0

    def test_comparison_table_deltas(self):
        table = masking_comparison_table(
            {
                "none": [0.5, 0.52],
                "random": [0.6, 0.62],
                "objective": [0.63, 0.64],
                "tfidf": [0.61, 0.6],
            }
        )
        assert table["policies"]["objective"]["mean"] == pytest.approx(0.635)
        deltas = table["objective_minus_random"]["per_seed"]
        assert deltas == pytest.approx([0.03, 0.02])


class TestCliEntry:
    def test_synth_and_exit_codes(self, tmp_path, capsys):
        corpus = tmp_path / "c.jsonl"
        assert main(["synth", "--out", str(corpus), "--docs", "60", "--classes", "2", "--vocab", "30"]) == 0
        assert corpus.exists()
        cfg = {
            "corpus_path": str(corpus),
            "out_dir": str(tmp_path / "out"),
            "split": {"n_gold_per_class": 3, "n_unlabeled": 20, "n_dev": 10, "seed": 0},
        }
        cfg_path = tmp_path / "cfg.json"
        write_json(cfg_path, cfg)
        assert main(["ingest", "--config", str(cfg_path)]) == 0
        # sweep before wordlist is fine; train before pretrain is not
        code = main(["train", "--config", str(cfg_path)])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error:") and "pretrain" in err

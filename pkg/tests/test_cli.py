from __future__ import annotations

import json

import pytest

from dialcart.cli import main
from dialcart.reporting import read_table


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    code = main(
        [
            "synth",
            "--out",
            str(out),
            "--sessions",
            "8",
            "--min-sentences",
            "12",
            "--max-sentences",
            "16",
            "--imbalance",
            "uniform",
            "--classes",
            "4",
            "--gen-seed",
            "1",
        ]
    )
    assert code == 0
    return out


class TestSynthAndIngest:
    def test_synth_writes_corpus_scheme_config(self, synth_dir):
        assert (synth_dir / "corpus.jsonl").exists()
        assert (synth_dir / "scheme.json").exists()
        resolved = json.loads((synth_dir / "resolved_config.json").read_text())
        assert resolved["sessions"] == 8

    def test_ingest_round_trip(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "ingest"
        code = main(
            [
                "ingest",
                "--corpus",
                str(synth_dir / "corpus.jsonl"),
                "--scheme",
                str(synth_dir / "scheme.json"),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert "sessions=8" in capsys.readouterr().out
        assert (out / "corpus.jsonl").read_text() == (synth_dir / "corpus.jsonl").read_text()

    def test_missing_required_flag_exits(self, synth_dir):
        with pytest.raises(SystemExit):
            main(["ingest", "--corpus", str(synth_dir / "corpus.jsonl")])

    def test_bad_input_returns_nonzero(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("not json\n")
        scheme = tmp_path / "scheme.json"
        scheme.write_text(json.dumps({"version": "v", "tags": [{"name": "A", "role": "both"}]}))
        code = main(["ingest", "--corpus", str(bad), "--scheme", str(scheme)])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestSplit:
    def test_split_partition(self, synth_dir, tmp_path):
        out = tmp_path / "split"
        code = main(
            [
                "split",
                "--corpus",
                str(synth_dir / "corpus.jsonl"),
                "--scheme",
                str(synth_dir / "scheme.json"),
                "--test-fraction",
                "0.25",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        spec = json.loads((out / "split.json").read_text())
        assert len(spec["test_sessions"]) == 2
        assert len(spec["train_sessions"]) == 6
        assert not set(spec["test_sessions"]) & set(spec["train_sessions"])


class TestCartographyCommand:
    def test_emits_csv_svg_and_manifest(self, synth_dir, tmp_path):
        out = tmp_path / "carto"
        code = main(
            [
                "cartography",
                "--corpus",
                str(synth_dir / "corpus.jsonl"),
                "--scheme",
                str(synth_dir / "scheme.json"),
                "--epochs",
                "5",
                "--dim",
                "128",
                "--ngram-max",
                "1",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        header, rows, cfg_hash = read_table(out / "data_map.csv")
        assert header == ["id", "tag", "role", "confidence", "variability", "correctness", "bucket"]
        assert cfg_hash
        assert rows
        assert (out / "data_map.svg").exists()
        assert (out / "bucket_distribution.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert any(f["path"] == "data_map.csv" for f in manifest["files"])


class TestSimulateAndReport:
    def test_simulate_emits_cells_curves_and_config(self, synth_dir, tmp_path):
        out = tmp_path / "sim"
        code = main(
            [
                "simulate",
                "--corpus",
                str(synth_dir / "corpus.jsonl"),
                "--scheme",
                str(synth_dir / "scheme.json"),
                "--strategy",
                "random",
                "--strategy",
                "entropy",
                "--seeds",
                "2",
                "--initial",
                "10",
                "--batch",
                "10",
                "--rounds",
                "2",
                "--epochs",
                "4",
                "--dim",
                "128",
                "--ngram-max",
                "1",
                "--test-fraction",
                "0.25",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        for kind in ("random", "entropy"):
            for seed in (0, 1):
                assert (out / f"rounds_{kind}_seed{seed}.csv").exists()
                assert (out / f"sampling_{kind}_seed{seed}.csv").exists()
        header, rows, _ = read_table(out / "curve_macro_f1.csv")
        assert header == ["strategy", "labeled_count", "mean", "std"]
        strategies = {r[0] for r in rows}
        assert strategies == {"random", "entropy"}
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["batch"] == 10

    def test_rounds_table_conservation(self, synth_dir, tmp_path):
        out = tmp_path / "sim2"
        main(
            [
                "simulate",
                "--corpus",
                str(synth_dir / "corpus.jsonl"),
                "--scheme",
                str(synth_dir / "scheme.json"),
                "--strategy",
                "least_confidence",
                "--seeds",
                "1",
                "--initial",
                "10",
                "--batch",
                "10",
                "--rounds",
                "2",
                "--epochs",
                "3",
                "--dim",
                "128",
                "--test-fraction",
                "0.25",
                "--out",
                str(out),
            ]
        )
        header, rows, _ = read_table(out / "sampling_least_confidence_seed0.csv")
        for row in rows:
            round_no = int(row[0])
            assert sum(int(v) for v in row[1:]) == round_no * 10

    def test_parallel_jobs_match_sequential(self, synth_dir, tmp_path):
        outs = {}
        for jobs in ("1", "2"):
            out = tmp_path / f"jobs{jobs}"
            code = main(
                [
                    "simulate",
                    "--corpus",
                    str(synth_dir / "corpus.jsonl"),
                    "--scheme",
                    str(synth_dir / "scheme.json"),
                    "--strategy",
                    "entropy",
                    "--strategy",
                    "random",
                    "--seeds",
                    "2",
                    "--initial",
                    "10",
                    "--batch",
                    "10",
                    "--rounds",
                    "2",
                    "--epochs",
                    "3",
                    "--dim",
                    "128",
                    "--test-fraction",
                    "0.25",
                    "--jobs",
                    jobs,
                    "--out",
                    str(out),
                ]
            )
            assert code == 0
            outs[jobs] = out
        for name in ("curve_macro_f1.csv", "rounds_entropy_seed1.csv"):
            header1, rows1, _ = read_table(outs["1"] / name)
            header2, rows2, _ = read_table(outs["2"] / name)
            assert (header1, rows1) == (header2, rows2)

    def test_report_rerenders_plots(self, synth_dir, tmp_path):
        sim_out = tmp_path / "sim3"
        main(
            [
                "simulate",
                "--corpus",
                str(synth_dir / "corpus.jsonl"),
                "--scheme",
                str(synth_dir / "scheme.json"),
                "--strategy",
                "random",
                "--seeds",
                "1",
                "--initial",
                "10",
                "--batch",
                "10",
                "--rounds",
                "1",
                "--epochs",
                "3",
                "--dim",
                "128",
                "--test-fraction",
                "0.25",
                "--out",
                str(sim_out),
            ]
        )
        report_out = tmp_path / "report"
        code = main(["report", "--results", str(sim_out), "--out", str(report_out)])
        assert code == 0
        rendered = (report_out / "curve_macro_f1.svg").read_text()
        original = (sim_out / "curve_macro_f1.svg").read_text()
        assert rendered == original


class TestKappaCommand:
    def test_kappa_from_label_files(self, tmp_path, capsys):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("id,tag\nx1,P\nx2,Q\nx3,P\n")
        b.write_text("id,tag\nx1,P\nx2,Q\nx3,P\n")
        assert main(["kappa", "--a", str(a), "--b", str(b)]) == 0
        assert "kappa=1.0000" in capsys.readouterr().out

    def test_no_overlap_errors(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("id,tag\nx1,P\n")
        b.write_text("id,tag\ny1,P\n")
        assert main(["kappa", "--a", str(a), "--b", str(b)]) == 1


class TestConfigFile:
    def test_config_supplies_defaults_flags_override(self, synth_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "corpus": str(synth_dir / "corpus.jsonl"),
                    "scheme": str(synth_dir / "scheme.json"),
                    "test_fraction": 0.25,
                    "split_seed": 3,
                }
            )
        )
        out = tmp_path / "split-cfg"
        code = main(["split", "--config", str(cfg), "--out", str(out), "--split-seed", "5"])
        assert code == 0
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["split_seed"] == 5  # flag wins
        assert resolved["test_fraction"] == 0.25  # config wins

    def test_rerun_from_resolved_config(self, synth_dir, tmp_path):
        out1 = tmp_path / "s1"
        main(
            [
                "split",
                "--corpus",
                str(synth_dir / "corpus.jsonl"),
                "--scheme",
                str(synth_dir / "scheme.json"),
                "--out",
                str(out1),
                "--split-seed",
                "4",
            ]
        )
        out2 = tmp_path / "s2"
        code = main(
            ["split", "--config", str(out1 / "resolved_config.json"), "--out", str(out2)]
        )
        assert code == 0
        assert (out1 / "split.json").read_text() == (out2 / "split.json").read_text()

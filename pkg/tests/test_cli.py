import json
from pathlib import Path

import pytest

from promptner.cli import main


def test_unknown_subcommand_exit_1(capsys):
    assert main(["frobnicate"]) == 1


def test_missing_required_flag_exit_1():
    assert main(["predict", "--text", "x"]) == 1  # no --types


def test_train_without_config_usage_error():
    assert main(["train", "--out", "/tmp/nowhere"]) == 1


def test_synth_deterministic(tmp_path, capsys):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["synth", "--out", str(out_a), "--seed", "7",
                 "--sizes", "synth_news=20,synth_shop=20,synth_work=10"]) == 0
    assert main(["synth", "--out", str(out_b), "--seed", "7",
                 "--sizes", "synth_news=20,synth_shop=20,synth_work=10"]) == 0
    for name in ("synth_news.train.jsonl", "synth_work.test.jsonl"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_ingest_conll(tmp_path, capsys):
    src = tmp_path / "raw.conll"
    src.write_text("Tom B-name\nvisits O\nParis B-location\n\n", encoding="utf-8")
    out = tmp_path / "out.jsonl"
    code = main(["ingest", "--format", "conll", "--dataset", "synth_news",
                 "--registry", "bundled:synth", "--input", str(src),
                 "--output", str(out), "--joiner", "space"])
    assert code == 0
    obj = json.loads(out.read_text().splitlines()[0])
    assert obj["text"] == "Tom visits Paris"
    assert {e["type"] for e in obj["entities"]} == {"name", "location"}


def test_ingest_unknown_tag_exit_2(tmp_path):
    src = tmp_path / "raw.conll"
    src.write_text("x B-XYZ\n", encoding="utf-8")
    code = main(["ingest", "--format", "conll", "--dataset", "synth_news",
                 "--registry", "bundled:synth", "--input", str(src),
                 "--output", str(tmp_path / "o.jsonl")])
    assert code == 2


class TestPredict(object):
    def test_raw_target_printed(self, trained, capsys):
        code = main(["predict", "--model", str(trained["path"]),
                     "--text", "Tom will go to the zoo tomorrow.",
                     "--types", "time,location", "--mode", "greedy"])
        assert code == 0
        out = capsys.readouterr().out.strip()
        assert out.startswith("(") or out == ""  # raw generated target string

    def test_json_output_shape(self, trained, capsys):
        code = main(["predict", "--model", str(trained["path"]),
                     "--text", "Anna visited Berlin today.",
                     "--types", "name,location,time", "--json"])
        assert code == 0
        body = json.loads(capsys.readouterr().out)
        assert set(body) == {"mentions", "null_types", "raw_target", "parse_valid"}
        for m in body["mentions"]:
            assert m["type"] in {"name", "location", "time"}

    def test_rerun_identical(self, trained, capsys):
        argv = ["predict", "--model", str(trained["path"]),
                "--text", "Tom bought a kettle in Paris today.",
                "--types", "name,product", "--json"]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert main(argv) == 0
        second = capsys.readouterr().out
        assert first == second

    def test_unknown_type_exit_2(self, trained, capsys):
        code = main(["predict", "--model", str(trained["path"]),
                     "--text", "x", "--types", "martian"])
        assert code == 2

    def test_matches_service_output(self, trained, capsys):
        from fastapi.testclient import TestClient

        from promptner.service import ModelHolder, create_app
        from promptner.service.app import ModelBundle

        text = "Wei ordered a drone tonight."
        argv = ["predict", "--model", str(trained["path"]), "--text", text,
                "--types", "name,product,time", "--mode", "beam",
                "--width", "5", "--json"]
        assert main(argv) == 0
        cli_body = json.loads(capsys.readouterr().out)

        holder = ModelHolder()
        holder.reload(trained["path"], "bundled:synth")
        client = TestClient(create_app(holder))
        resp = client.post("/api/ner", json={
            "text": text, "entity_types": ["name", "product", "time"],
            "decode_mode": "beam", "beam_width": 5,
        })
        assert resp.status_code == 200
        assert resp.json() == cli_body


class TestEval:
    def test_eval_beam1_rerun_identical_reports(self, trained, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "registry": "bundled:synth",
            "corpora": {"kind": "synthetic",
                        "sizes": {"synth_news": 60, "synth_shop": 60, "synth_work": 48},
                        "seed": 3},
            "eval_max_len": 76,
        }), encoding="utf-8")
        reports = []
        for name in ("r1.json", "r2.json"):
            out = tmp_path / name
            code = main(["eval", "--model", str(trained["path"]), "--config",
                         str(cfg), "--split", "dev", "--beam", "1",
                         "--out", str(out)])
            assert code == 0
            reports.append(out.read_bytes())
        assert reports[0] == reports[1]

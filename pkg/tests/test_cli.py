import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from hlsdse.cli import main
from hlsdse.docio import dump_document

MODEL_DOC = {
    "kernel_id": "flat",
    "loops": [{"id": "L0", "trip": 64,
               "ops": {"add": 2, "load": 1, "mul": 1, "store": 1}}],
    "base": {"lut": 120, "dsp": 2, "ff": 90, "bram": 6},
    "capacities": {"lut": 3000, "dsp": 32, "ff": 2500, "bram": 32},
}

SPACE_DOC = {
    "directives": [
        {"name": "unroll@L0", "kind": "unroll", "target": "L0", "domain": [1, 2, 4, 8]},
        {"name": "pipe@L0", "kind": "pipeline", "target": "L0",
         "domain": ["off", "on", "flatten"]},
        {"name": "tile@L0", "kind": "tile", "target": "L0", "domain": [1, 2]},
    ]
}


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "model.json").write_text(dump_document(MODEL_DOC))
    (tmp_path / "space.json").write_text(dump_document(SPACE_DOC))
    return tmp_path


def run_cli(args):
    return CliRunner().invoke(main, [str(a) for a in args])


def gen_data(workdir, out="data", count=16, seed=0):
    result = run_cli(["gen-data", "--model", workdir / "model.json",
                      "--space", workdir / "space.json", "--count", count,
                      "--seed", seed, "--d-text", 32, "--out", workdir / out])
    assert result.exit_code == 0, result.output
    return workdir / out


def train(workdir, data_dir, out="run", epochs=3):
    result = run_cli(["train", "--manifest", data_dir / "manifest.json",
                      "--epochs", epochs, "--hidden", 8, "--layers", 1,
                      "--n-heads", 2, "--batch-size", 8, "--seed", 1,
                      "--out", workdir / out])
    assert result.exit_code == 0, result.output
    return workdir / out


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------------------

def test_gen_data_writes_dataset_and_resolved_config(workdir):
    out = gen_data(workdir)
    assert (out / "manifest.json").exists()
    assert (out / "embeddings.bin").exists()
    assert (out / "graphs" / "0000.json").exists()
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["subcommand"] == "gen-data"
    assert resolved["count"] == 16


def test_gen_data_missing_model_fails_validation(workdir):
    result = run_cli(["gen-data", "--model", workdir / "nope.json",
                      "--space", workdir / "space.json", "--count", 4,
                      "--out", workdir / "d"])
    assert result.exit_code == 2
    assert "error:" in result.output


def test_gen_data_count_exceeding_space_fails(workdir):
    result = run_cli(["gen-data", "--model", workdir / "model.json",
                      "--space", workdir / "space.json", "--count", 9999,
                      "--out", workdir / "d"])
    assert result.exit_code == 2


def test_config_document_with_unknown_key_rejected(workdir):
    cfg = {"gen-data": {"count": 4, "frobnicate": 1}}
    path = workdir / "cfg.json"
    path.write_text(dump_document(cfg))
    result = run_cli(["gen-data", "--config", path, "--model", workdir / "model.json",
                      "--space", workdir / "space.json", "--out", workdir / "d"])
    assert result.exit_code == 2
    assert "frobnicate" in result.output


def test_config_document_provides_defaults_flags_override(workdir):
    cfg = {"seed": 9, "gen-data": {"count": 6, "d_text": 32,
                                   "model": str(workdir / "model.json"),
                                   "space": str(workdir / "space.json")}}
    path = workdir / "cfg.json"
    path.write_text(dump_document(cfg))
    result = run_cli(["gen-data", "--config", path, "--count", 4,
                      "--out", workdir / "d"])
    assert result.exit_code == 0, result.output
    resolved = json.loads((workdir / "d" / "resolved_config.json").read_text())
    assert resolved["count"] == 4      # flag wins
    assert resolved["seed"] == 9       # global seed picked up
    manifest = json.loads((workdir / "d" / "manifest.json").read_text())
    assert len(manifest["samples"]) == 4


def test_train_then_eval(workdir):
    data_dir = gen_data(workdir)
    run_dir = train(workdir, data_dir)
    assert (run_dir / "checkpoint.bin").exists()
    metrics = (run_dir / "metrics.csv").read_text().splitlines()
    assert metrics[0].startswith("epoch,train_rmse,val_latency")
    assert len(metrics) == 4  # header + 3 epochs

    result = run_cli(["eval", "--checkpoint", run_dir / "checkpoint.bin",
                      "--manifest", data_dir / "manifest.json", "--split", "all",
                      "--out", workdir / "evalout"])
    assert result.exit_code == 0, result.output
    assert "Latency" in result.output and "All" in result.output
    assert "RMSE" in result.output
    eval_csv = (workdir / "evalout" / "eval.csv").read_text().splitlines()
    assert eval_csv[0] == "metric,latency,lut,dsp,ff,bram,all"


def test_explore_with_mock_backend(workdir):
    result = run_cli(["explore", "--space", workdir / "space.json",
                      "--model", workdir / "model.json", "--backend", "mutation-mock",
                      "--budget", 12, "--batch", 4, "--seed", 2,
                      "--out", workdir / "dse"])
    assert result.exit_code == 0, result.output
    assert (workdir / "dse" / "archive.csv").exists()
    assert (workdir / "dse" / "convergence.csv").exists()
    assert (workdir / "dse" / "reference.csv").exists()
    assert "final ADRS" in result.output


@pytest.mark.parametrize("backend", ["sa", "random"])
def test_explore_baselines(workdir, backend):
    result = run_cli(["explore", "--space", workdir / "space.json",
                      "--model", workdir / "model.json", "--backend", backend,
                      "--budget", 10, "--batch", 1, "--seed", 2,
                      "--out", workdir / f"dse-{backend}"])
    assert result.exit_code == 0, result.output


def test_explore_record_then_replay_identical(workdir):
    transcript = workdir / "transcript.json"
    result = run_cli(["explore", "--space", workdir / "space.json",
                      "--model", workdir / "model.json", "--backend", "mutation-mock",
                      "--budget", 12, "--batch", 4, "--seed", 5,
                      "--record", transcript, "--out", workdir / "rec"])
    assert result.exit_code == 0, result.output

    outputs = []
    for name in ("rep1", "rep2"):
        result = run_cli(["explore", "--space", workdir / "space.json",
                          "--model", workdir / "model.json", "--backend", "replay",
                          "--transcript", transcript, "--budget", 12, "--batch", 4,
                          "--seed", 5, "--out", workdir / name])
        assert result.exit_code == 0, result.output
        outputs.append(tree_bytes(workdir / name))
    assert outputs[0] == outputs[1]
    assert (workdir / "rec" / "archive.csv").read_bytes() == \
        outputs[0]["archive.csv"]


def test_explore_replay_mismatch_is_backend_failure(workdir):
    transcript = workdir / "t.json"
    transcript.write_text(dump_document(
        {"entries": [{"prompt_hash": "0" * 64, "response": "nope"}]}))
    result = run_cli(["explore", "--space", workdir / "space.json",
                      "--model", workdir / "model.json", "--backend", "replay",
                      "--transcript", transcript, "--budget", 8, "--batch", 4,
                      "--out", workdir / "bad"])
    assert result.exit_code == 3


def test_adrs_identical_files_is_zero(workdir):
    run_cli(["explore", "--space", workdir / "space.json",
             "--model", workdir / "model.json", "--backend", "random",
             "--budget", 8, "--batch", 1, "--out", workdir / "a"])
    front = workdir / "a" / "reference.csv"
    result = run_cli(["adrs", "--reference", front, "--approx", front])
    assert result.exit_code == 0, result.output
    assert "ADRS: 0 " in result.output


def test_adrs_missing_file_fails_validation(workdir):
    result = run_cli(["adrs", "--reference", workdir / "missing.csv",
                      "--approx", workdir / "missing.csv"])
    assert result.exit_code == 2


def test_report_renders_figures_and_summary(workdir):
    data_dir = gen_data(workdir, count=12)
    run_dir = train(workdir, data_dir, epochs=2)
    run_cli(["explore", "--space", workdir / "space.json",
             "--model", workdir / "model.json", "--backend", "mutation-mock",
             "--budget", 8, "--batch", 4, "--out", run_dir / "dse"])
    result = run_cli(["report", "--run", run_dir, "--out", workdir / "figs"])
    assert result.exit_code == 0, result.output
    assert (workdir / "figs" / "training.png").exists()
    assert (workdir / "figs" / "convergence.png").exists()
    assert (workdir / "figs" / "fronts.png").exists()
    summary = (workdir / "figs" / "summary.csv").read_text().splitlines()
    assert summary[0] == "metric,value"
    assert len(summary) > 1

import csv
import subprocess
import sys

import numpy as np
import pytest

from arbstyle.checkpoint import decode_tensors, encode_tensors, load_checkpoint
from arbstyle.cli import main
from arbstyle.config import save_config
from arbstyle.data import synthetic_corpus, write_corpus
from arbstyle.gradcheck import TINY_CONFIG
from arbstyle.imageio import load_image

CFG = TINY_CONFIG.replace(budget=3, log_every=0, photographs=1, tsne_iters=30)


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    save_config(CFG, root / "run.cfg")
    write_corpus(root / "contents", synthetic_corpus("content", 2, 8, 0))
    write_corpus(root / "styles", synthetic_corpus("style", 4, 8, 1))
    write_corpus(root / "heldout", synthetic_corpus("style", 3, 8, 2, prefix="held"))
    code = main(["train", "--config", str(root / "run.cfg"), "--content-dir", str(root / "contents"),
                 "--style-dir", str(root / "styles"), "--out", str(root / "model.nstc"),
                 "--trace", str(root / "trace.csv")])
    assert code == 0
    return root


def run(ws, *argv):
    return main([argv[0], "--config", str(ws / "run.cfg"), *argv[1:]])


def test_train_outputs(ws):
    ckpt = load_checkpoint(ws / "model.nstc")
    assert ckpt.adam.step == 3 and ckpt.config.transfer_channels == (2, 3, 4)
    assert len(list(csv.reader((ws / "trace.csv").open()))) == 4


def test_usage_errors_exit_2(ws, capsys):
    assert main(["stylize", "--content", "x.ppm"]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["tsne", "--checkpoint", "m", "--style-dir", "d", "--out", "o", "--bogus"]) == 2
    err = capsys.readouterr().err
    assert "usage error" in err and "--checkpoint" in err


def test_runtime_errors_exit_1(ws, capsys):
    assert run(ws, "stylize", "--content", str(ws / "missing.ppm"), "--style", str(ws / "styles/style_000.ppm"),
               "--checkpoint", str(ws / "model.nstc"), "--out", str(ws / "o.png")) == 1
    (ws / "broken.nstc").write_bytes(b"NSTC" + bytes(20))
    assert run(ws, "embed", "--style", str(ws / "styles/style_000.ppm"), "--checkpoint", str(ws / "broken.nstc"),
               "--out", str(ws / "e.nstc")) == 1
    assert "CRC" in capsys.readouterr().err


def test_stylize_embed_round_trip(ws, capsys):
    style = str(ws / "styles/style_001.ppm")
    content = str(ws / "contents/content_000.ppm")
    assert run(ws, "embed", "--style", style, "--checkpoint", str(ws / "model.nstc"), "--out", str(ws / "s1.emb")) == 0
    assert "embedding dim" in capsys.readouterr().out
    _, tensors = decode_tensors((ws / "s1.emb").read_bytes())
    assert tensors["embedding"].shape == (2 * (2 + 3 + 4 + 8 + 3 + 2 + 3),)
    assert tensors["bottleneck"].shape == (3,)
    assert run(ws, "stylize", "--content", content, "--style", style, "--checkpoint", str(ws / "model.nstc"),
               "--out", str(ws / "a.png")) == 0
    assert run(ws, "stylize", "--content", content, "--embedding", str(ws / "s1.emb"),
               "--checkpoint", str(ws / "model.nstc"), "--out", str(ws / "b.png")) == 0
    np.testing.assert_array_equal(load_image(ws / "a.png"), load_image(ws / "b.png"))


def test_mismatched_embedding_reports_dimensions(ws, capsys):
    (ws / "bad.emb").write_bytes(encode_tensors("", {"embedding": np.ones(7)}))
    assert run(ws, "stylize", "--content", str(ws / "contents/content_000.ppm"), "--embedding", str(ws / "bad.emb"),
               "--checkpoint", str(ws / "model.nstc"), "--out", str(ws / "c.png")) == 1
    assert "style embedding dimension mismatch: expected 50, got 7" in capsys.readouterr().err


def test_interpolate_writes_k_plus_one_images(ws, capsys):
    out = ws / "interp"
    assert run(ws, "interpolate", "--content", str(ws / "contents/content_000.ppm"),
               "--style", str(ws / "styles/style_002.ppm"), "--checkpoint", str(ws / "model.nstc"),
               "--alpha-steps", "3", "--out-dir", str(out), "--format", "ppm") == 0
    assert sorted(p.name for p in out.iterdir()) == [f"interp_00{i}.ppm" for i in range(4)]
    assert "identity reconstruction rms error" in capsys.readouterr().out


def test_outputs_never_overwrite_inputs(ws):
    content = ws / "contents/content_001.ppm"
    before = content.read_bytes()
    assert run(ws, "stylize", "--content", str(content), "--style", str(ws / "styles/style_000.ppm"),
               "--checkpoint", str(ws / "model.nstc"), "--out", str(content)) == 2
    assert run(ws, "optimize", "--content", str(content), "--style", str(ws / "styles/style_000.ppm"),
               "--out", str(ws / "styles/style_000.ppm"), "--steps", "2") == 2
    assert content.read_bytes() == before


def test_config_from_environment(ws, monkeypatch):
    monkeypatch.setenv("ARBSTYLE_CONFIG", str(ws / "run.cfg"))
    assert main(["optimize", "--content", str(ws / "contents/content_000.ppm"),
                 "--style", str(ws / "styles/style_000.ppm"), "--out", str(ws / "opt.png"),
                 "--steps", "3", "--trace", str(ws / "opt.csv")]) == 0
    assert load_image(ws / "opt.png").shape == (1, 3, 8, 8)
    monkeypatch.setenv("ARBSTYLE_CONFIG", str(ws / "nope.cfg"))
    assert main(["optimize", "--content", str(ws / "contents/content_000.ppm"),
                 "--style", str(ws / "styles/style_000.ppm"), "--out", str(ws / "opt2.png")]) == 1


def test_studies_and_maps(ws, golden):
    model = str(ws / "model.nstc")
    out = ws / "studies"
    common = ["--content-dir", str(ws / "contents"), "--out-dir", str(out)]
    assert run(ws, "study-generalization", "--checkpoint", model, "--observed-dir", str(ws / "styles"),
               "--unobserved-dir", str(ws / "heldout"), *common) == 0
    assert run(ws, "study-proximity", "--checkpoint", model, "--train-dir", str(ws / "styles"),
               "--test-dir", str(ws / "heldout"), *common) == 0
    golden("cli_generalization_summary.csv", (out / "generalization_summary.csv").read_bytes())
    rows = list(csv.DictReader((out / "proximity_records.csv").open()))
    assert [r["style_id"] for r in rows] == ["held_000", "held_001", "held_002"]
    assert run(ws, "study-cross", "--checkpoint-a", model, "--checkpoint-b", model,
               "--test-a", str(ws / "heldout"), "--test-b", str(ws / "heldout"), *common) == 0
    assert run(ws, "study-cross", "--checkpoint-a", model, "--checkpoint-b", model,
               "--test-a", str(ws / "styles"), "--test-b", str(ws / "heldout"), *common) == 1
    assert run(ws, "tsne", "--checkpoint", model, "--style-dir", str(ws / "styles"),
               "--out", str(ws / "tsne.csv"), "--perplexity", "2") == 0
    assert len(list(csv.reader((ws / "tsne.csv").open()))) == 5
    assert run(ws, "pca-grid", "--checkpoint", model, "--style-dir", str(ws / "styles"),
               "--content", str(ws / "contents/content_000.ppm"), "--out-dir", str(ws / "grid"),
               "--grid-n", "3") == 0
    assert len(list((ws / "grid").iterdir())) == 9


def test_scaling_and_adain(ws):
    assert run(ws, "study-scaling", "--counts", "1,2", "--train-dir", str(ws / "styles"),
               "--eval-dir", str(ws / "heldout"), "--content-dir", str(ws / "contents"),
               "--steps", "2", "--out-dir", str(ws / "scaling")) == 0
    names = sorted(p.name for p in (ws / "scaling").iterdir())
    assert "scaling_boxes.csv" in names and "scaling_2_summary.csv" in names
    assert run(ws, "study-scaling", "--counts", "1,x", "--train-dir", str(ws / "styles"),
               "--eval-dir", str(ws / "heldout"), "--out-dir", str(ws / "scaling2")) == 2
    assert run(ws, "train-adain", "--content-dir", str(ws / "contents"), "--style-dir", str(ws / "styles"),
               "--out", str(ws / "adain.nstc")) == 0
    assert load_checkpoint(ws / "adain.nstc").config.model == "adain"


def test_grad_check_command(capsys):
    assert main(["grad-check", "--seeds", "1"]) == 0
    assert "ok" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "arbstyle", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "study-proximity" in proc.stdout

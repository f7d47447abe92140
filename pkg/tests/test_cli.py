import subprocess
import sys

import numpy as np
import pytest

from thermface.cli import main
from thermface.imaging import load_image, load_manifest, save_image, synth_face

FAST = ["--set", "mlp.max_epochs=80"]


@pytest.fixture()
def corpus(tmp_path):
    out = tmp_path / "corpus"
    assert main(["synth", "--subjects", "3", "--per-subject", "6", "--rotations", "0,15,-15",
                 "--size", "64", "--seed", "2", "-o", str(out)]) == 0
    return out


# ---------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------
def test_synth_layout(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--subjects", "4", "--per-subject", "10", "--size", "64", "-o", str(out)]) == 0
    assert len(list(out.glob("*.pgm"))) == 40
    lines = [l for l in (out / "manifest.csv").read_text().splitlines() if l and not l.startswith("#")]
    assert len(lines) == 40
    assert (out / "s02_i003_rot+45_sc1.00.pgm").exists()


def test_synth_reproducible(tmp_path):
    args = ["synth", "--subjects", "2", "--per-subject", "3", "--size", "64", "--seed", "5"]
    main(args + ["-o", str(tmp_path / "a")])
    main(args + ["-o", str(tmp_path / "b")])
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


# ---------------------------------------------------------------------
# transform
# ---------------------------------------------------------------------
def test_transform_naming_and_size(tmp_path):
    save_image(synth_face(0, size=96), tmp_path / "face.pgm")
    assert main(["transform", str(tmp_path / "face.pgm"), "--variant", "polar"]) == 0
    out = load_image(tmp_path / "face.polar.pgm")
    assert out.shape == (128, 128)


def test_transform_constant_is_black(tmp_path):
    save_image(np.full((64, 64), 0.5), tmp_path / "flat.pgm")
    assert main(["transform", str(tmp_path / "flat.pgm"), "-o", str(tmp_path / "out")]) == 0
    assert not load_image(tmp_path / "out" / "flat.polar_line_skeletal.pgm").any()


def test_transform_partial_failure(tmp_path, capsys):
    save_image(synth_face(1, size=64), tmp_path / "ok.pgm")
    (tmp_path / "bad.pgm").write_bytes(b"P5\n9 9\n255\n\x00")
    code = main(["transform", str(tmp_path / "bad.pgm"), str(tmp_path / "ok.pgm")])
    assert code == 1
    assert (tmp_path / "ok.polar_line_skeletal.pgm").exists()
    assert not (tmp_path / "bad.polar_line_skeletal.pgm").exists()
    assert "bad.pgm" in capsys.readouterr().err


# ---------------------------------------------------------------------
# train / identify
# ---------------------------------------------------------------------
def test_train_identify(corpus, tmp_path, capsys):
    model = tmp_path / "m.thfm"
    assert main(["train", str(corpus / "manifest.csv"), "-o", str(model)] + FAST) == 0
    assert "epochs" in capsys.readouterr().out
    manifest = load_manifest(corpus / "manifest.csv")
    entry = manifest.entries[7]
    assert main(["identify", str(model), str(manifest.resolve(entry)), "-k", "3"]) == 0
    line = capsys.readouterr().out.strip()
    assert f"1. subject_{entry.subject:02d}" in line
    assert line.count(". subject_") == 3


def test_train_reproducible(corpus, tmp_path):
    for name in ("a", "b"):
        assert main(["train", str(corpus / "manifest.csv"), "-o", str(tmp_path / name)] + FAST) == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_train_missing_class(corpus, tmp_path):
    text = (corpus / "manifest.csv").read_text()
    # keep subject 2 in the class count but drop its images
    lines = [l for l in text.splitlines() if not l.split(",")[1:2] == ["1"]]
    (corpus / "holes.csv").write_text("\n".join(lines) + "\n")
    assert main(["train", str(corpus / "holes.csv"), "-o", str(tmp_path / "m")] + FAST) == 1
    assert not (tmp_path / "m").exists()


def test_train_excluding_fold(corpus, tmp_path, capsys):
    lines = (corpus / "manifest.csv").read_text().splitlines()
    rows = [l for l in lines if l and not l.startswith("#")]
    folded = [f"{r},{i % 3}" for i, r in enumerate(rows)]
    (corpus / "folded.csv").write_text("\n".join(folded) + "\n")
    args = ["train", str(corpus / "folded.csv"), "-o", str(tmp_path / "m"), "--set", "eval.train_exclude_fold=2"]
    assert main(args + FAST) == 0
    assert f"trained on {len(rows) - len(rows) // 3} images" in capsys.readouterr().out


def test_identify_errors(corpus, tmp_path):
    model = tmp_path / "m.thfm"
    main(["train", str(corpus / "manifest.csv"), "-o", str(model)] + FAST)
    img = str(next(corpus.glob("*.pgm")))
    assert main(["identify", str(model), img, "-k", "4"]) == 1
    (tmp_path / "junk").write_bytes(b"NOPE" + bytes(40))
    assert main(["identify", str(tmp_path / "junk"), img]) == 1


def test_divergence_exit_code(corpus, tmp_path):
    args = ["train", str(corpus / "manifest.csv"), "-o", str(tmp_path / "m"),
            "--set", "mlp.learning_rate=1e308", "--set", "mlp.max_epochs=20"]
    with np.errstate(all="ignore"):
        assert main(args) == 2
    assert not (tmp_path / "m").exists()


# ---------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------
def test_eval_writes_reports(corpus, tmp_path):
    out = tmp_path / "rep"
    assert main(["eval", str(corpus / "manifest.csv"), "-o", str(out)] + FAST) == 0
    rows = (out / "report.csv").read_text().splitlines()
    assert rows[0] == "variant,fold,top1,top2,top3,n_test"
    assert [r.split(",")[1] for r in rows[1:]] == ["2", "1", "0", "all"]
    assert (out / "confusion_polar_line_skeletal.csv").exists()
    assert "top 3" in (out / "summary.txt").read_text()


def test_eval_all_variants(corpus, tmp_path):
    out = tmp_path / "rep"
    assert main(["eval", str(corpus / "manifest.csv"), "-o", str(out), "--all-variants",
                 "--set", "mlp.max_epochs=20"]) == 0
    assert len((out / "report.csv").read_text().splitlines()) == 17
    assert len(list(out.glob("confusion_*.csv"))) == 4


def test_eval_missing_manifest(tmp_path):
    out = tmp_path / "rep"
    assert main(["eval", str(tmp_path / "absent.csv"), "-o", str(out)]) != 0
    assert not (out / "report.csv").exists()


# ---------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------
def test_config_precedence(corpus, tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("eval.variant = raw\nmlp.max_epochs = 10\n")
    monkeypatch.setenv("THERMFACE_CONFIG", str(cfg))
    out = tmp_path / "env"
    assert main(["eval", str(corpus / "manifest.csv"), "-o", str(out)]) == 0
    assert (out / "confusion_raw.csv").exists()
    # command-line flag wins over the file
    out = tmp_path / "flag"
    assert main(["eval", str(corpus / "manifest.csv"), "-o", str(out), "--variant", "polar"]) == 0
    assert (out / "confusion_polar.csv").exists()


def test_bad_set_value(corpus, tmp_path):
    assert main(["eval", str(corpus / "manifest.csv"), "-o", str(tmp_path), "--set", "pca.k=many"]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "thermface.cli", "synth", "--subjects", "1",
                          "--per-subject", "3", "--size", "64", "-o", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert len(list(tmp_path.glob("*.pgm"))) == 3

import numpy as np
import pytest

import mono2d.trainer as trainer
from mono2d.cli import main
from mono2d.io import load_checkpoint, read_features, write_pgm

SMALL = ["--epochs", "2", "--train-count", "8", "--test-count", "2", "--height", "16", "--width", "16",
         "--n-scales", "2", "--batch-size", "4", "--val-fraction", "0.25"]


def write_q(path, q, maxval=255):
    write_pgm(path, q / maxval, maxval=maxval)


@pytest.fixture
def gray_image(tmp_path, rng):
    q = rng.integers(40, 121, size=(24, 20))
    path = tmp_path / "img.pgm"
    write_q(path, q)
    return path, q


def test_extract_writes_raw_and_preview(tmp_path, gray_image):
    path, _ = gray_image
    out = tmp_path / "out"
    assert main(["extract", str(path), "--init-seed", "3", "--n-scales", "2", "--pgm", "-o", str(out)]) == 0
    ch, header = read_features(out / "img.mono2d")
    assert ch.shape == (2, 24, 20) and header["names"] == ["phase", "asym"]
    assert header["flags"]["seed"] == "3"
    assert (out / "img_phase.pgm").exists() and (out / "img_asym.pgm").exists()


def test_extract_is_deterministic(tmp_path, gray_image):
    path, _ = gray_image
    main(["extract", str(path), "-o", str(tmp_path / "a")])
    main(["extract", str(path), "-o", str(tmp_path / "b")])
    assert (tmp_path / "a/img.mono2d").read_bytes() == (tmp_path / "b/img.mono2d").read_bytes()


def test_extract_contrast_offset_invariance(tmp_path, gray_image):
    path, q = gray_image
    shifted = tmp_path / "shifted" / "img.pgm"
    shifted.parent.mkdir()
    write_q(shifted, 2 * q + 10)
    main(["extract", str(path), "-o", str(tmp_path / "a")])
    main(["extract", str(shifted), "-o", str(tmp_path / "b")])
    a, _ = read_features(tmp_path / "a/img.mono2d")
    b, _ = read_features(tmp_path / "b/img.mono2d")
    assert np.max(np.abs(a - b)) <= 1e-9


def test_extract_constant_input_gives_zero_channels(tmp_path):
    path = tmp_path / "flat.pgm"
    write_q(path, np.full((16, 16), 100))
    main(["extract", str(path), "-o", str(tmp_path)])
    ch, _ = read_features(tmp_path / "flat.mono2d")
    assert not ch.any()


def test_extract_mode_arity(tmp_path, gray_image):
    path, _ = gray_image
    main(["extract", str(path), "--mode", "phase", "-o", str(tmp_path / "p")])
    main(["extract", str(path), "--mode", "both", "--include-input", "-o", str(tmp_path / "b")])
    assert read_features(tmp_path / "p/img.mono2d")[0].shape[0] == 1
    ch, header = read_features(tmp_path / "b/img.mono2d")
    assert ch.shape[0] == 3 and header["names"] == ["input", "phase", "asym"]


def test_extract_with_checkpoint(tmp_path, gray_image):
    path, _ = gray_image
    run = tmp_path / "run"
    assert main(["train", *SMALL, "-o", str(run)]) == 0
    assert main(["extract", str(path), "--checkpoint", str(run / "checkpoint.txt"), "-o", str(tmp_path)]) == 0
    _, header = read_features(tmp_path / "img.mono2d")
    assert header["scales"] == "2"


def test_extract_error_codes(tmp_path, gray_image):
    path, _ = gray_image
    assert main(["extract", str(tmp_path / "missing.pgm")]) == 4
    p2 = tmp_path / "ascii.pgm"
    p2.write_bytes(b"P2\n2 2\n255\n1 2 3 4\n")
    assert main(["extract", str(p2), "-o", str(tmp_path)]) == 5
    bad = tmp_path / "bad.txt"
    bad.write_text("bank.n_scales = 2\nbank.f0_min = nope\n")
    assert main(["extract", str(path), "--checkpoint", str(bad), "-o", str(tmp_path)]) == 6


def test_gradcheck_cli(capsys):
    assert main(["gradcheck", "--n-scales", "1", "--configs", "1"]) == 0
    out = capsys.readouterr().out
    assert "parameters checked: 2 " in out and "f0_star" in out and "sigma_r_star" in out


def test_gradcheck_detects_injected_bug(capsys):
    assert main(["gradcheck", "--n-scales", "1", "--configs", "1", "--perturb-analytic", "1e-2"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_train_and_eval(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["train", *SMALL, "--seed", "5", "-o", str(run)]) == 0
    out = capsys.readouterr().out
    for name in ("source", "contrast_offset", "gamma", "shifted_mean"):
        assert name in out
    csv = (run / "metrics.csv").read_text().splitlines()
    assert csv[0] == "# seed = 5" and csv[1].startswith("epoch,lr,train_loss,val_dice,dice_")
    assert len(csv) == 2 + 2
    assert main(["eval", "--checkpoint", str(run / "checkpoint.txt"), "--height", "16", "--width", "16",
                 "--test-count", "2", "--out", str(tmp_path / "eval.csv")]) == 0
    assert (tmp_path / "eval.csv").read_text().startswith("# seed = 0\ndomain,dice\nsource,")


def test_train_freeze_keeps_initial_bank(tmp_path):
    run = tmp_path / "run"
    assert main(["train", *SMALL, "--freeze", "-o", str(run)]) == 0
    final, _, _ = load_checkpoint(run / "checkpoint.txt")
    initial, _, _ = load_checkpoint(run / "initial_bank.txt")
    assert np.array_equal(final.vector, initial.vector)


def test_train_mode_arity(tmp_path):
    main(["train", *SMALL, "--mode", "phase", "-o", str(tmp_path / "p")])
    main(["train", *SMALL, "--mode", "both", "-o", str(tmp_path / "b")])
    assert load_checkpoint(tmp_path / "p/checkpoint.txt")[1].weights.size == 1
    assert load_checkpoint(tmp_path / "b/checkpoint.txt")[1].weights.size == 2


def test_train_raw(tmp_path):
    assert main(["train", *SMALL, "--raw", "-o", str(tmp_path)]) == 0
    bank, head, kv = load_checkpoint(tmp_path / "checkpoint.txt")
    assert bank is None and kv["model.use_mono2d"] == "False"
    assert main(["eval", "--checkpoint", str(tmp_path / "checkpoint.txt"), "--test-count", "2"]) == 0


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 1\nn_scales = 3\ntrain_count = 8\ntest_count = 2\nheight = 16\nwidth = 16\n")
    assert main(["train", "--config", str(cfg), "--n-scales", "2", "-o", str(tmp_path / "r")]) == 0
    bank, _, _ = load_checkpoint(tmp_path / "r/checkpoint.txt")
    assert bank.n_scales == 2
    assert "epochs = 1" in (tmp_path / "r/config.txt").read_text()


def test_train_config_errors(tmp_path):
    assert main(["train", "--n-scales", "0", "-o", str(tmp_path)]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["train", "--config", str(bad), "-o", str(tmp_path)]) == 2
    assert main(["train", "--config", str(tmp_path / "absent.cfg"), "-o", str(tmp_path)]) == 2


def test_train_divergence_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(trainer, "dice_bce_loss", lambda p, t: (float("nan"), np.zeros_like(p)))
    assert main(["train", *SMALL, "-o", str(tmp_path)]) == 3


def test_eval_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "ck.txt"
    bad.write_text("head.channels = 2\n")
    assert main(["eval", "--checkpoint", str(bad)]) == 6


def test_histcompare_identical_and_remapped(tmp_path, rng, capsys):
    a_paths, b_paths = [], []
    for i in range(3):
        q = rng.integers(40, 121, size=(16, 16))
        a, b = tmp_path / f"a{i}.pgm", tmp_path / f"b{i}.pgm"
        write_q(a, q)
        write_q(b, 2 * q + 10)
        a_paths.append(str(a))
        b_paths.append(str(b))
    assert main(["histcompare", "--a", *a_paths, "--b", *a_paths, "--n-scales", "2"]) == 0
    out = capsys.readouterr().out
    assert "raw   0.000000e+00" in out and "phase 0.000000e+00" in out
    assert main(["histcompare", "--a", *a_paths, "--b", *b_paths, "--n-scales", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    raw = float(lines[1].split()[-1])
    phase = float(lines[2].split()[-1])
    assert raw > 0 and phase <= 1e-6


def test_histcompare_synthetic(capsys):
    assert main(["histcompare", "--synthetic", "contrast_offset", "--count", "3", "--shape", "32x32"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert float(lines[2].split()[-1]) < float(lines[1].split()[-1])


def test_histcompare_empty_set(tmp_path):
    assert main(["histcompare", "--a", "--b"]) == 2
    assert main(["histcompare", "--synthetic", "nonexistent"]) == 2


def test_bench(capsys):
    assert main(["bench", "--shape", "32x32", "--n-scales", "2", "--repetitions", "3"]) in (0, 1)
    out = capsys.readouterr().out
    assert "ratio" in out and "+-" in out
    assert main(["bench", "--repetitions", "0"]) == 2


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["nosuchcommand"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--shape", "12"])
    assert exc.value.code == 2

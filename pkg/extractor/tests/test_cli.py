"""Command-line behavior with the offline encoders."""

import json

import numpy as np
import pytest
from PIL import Image

from mmextract.cli import main


def _corpus(tmp_path):
    images = tmp_path / "images"
    images.mkdir()
    rng = np.random.default_rng(0)
    for name in ("x.jpg", "y.jpg"):
        arr = rng.integers(0, 256, (50, 70, 3)).astype(np.uint8)
        Image.fromarray(arr).save(images / name)
    posts = tmp_path / "posts.jsonl"
    lines = [
        {"id": 11, "text": "soooo cool :)", "images": ["x.jpg"], "label": "fake"},
        {"id": 12, "text": "nothing here", "images": ["y.jpg"], "label": "real"},
    ]
    posts.write_text("\n".join(json.dumps(o) for o in lines) + "\n")
    return posts, images


def test_extract_end_to_end(tmp_path, capsys):
    posts, images = _corpus(tmp_path)
    out = tmp_path / "features.mmff"
    code = main([
        "--input", str(posts),
        "--images-dir", str(images),
        "--out", str(out),
        "--seed", "3",
        "--encoder", "offline",
    ])
    captured = capsys.readouterr()
    assert code == 0
    assert f"wrote 2 records to {out}" in captured.out
    assert "kept 2" in captured.out
    assert out.exists()


def test_same_seed_runs_are_bit_identical(tmp_path):
    posts, images = _corpus(tmp_path)
    first = tmp_path / "one.mmff"
    second = tmp_path / "two.mmff"
    for out in (first, second):
        assert main([
            "--input", str(posts), "--images-dir", str(images),
            "--out", str(out), "--seed", "7", "--encoder", "offline",
        ]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_missing_input_reports_io_error(tmp_path, capsys):
    code = main([
        "--input", str(tmp_path / "absent.jsonl"),
        "--out", str(tmp_path / "out.mmff"),
        "--encoder", "offline",
    ])
    captured = capsys.readouterr()
    assert code == 1
    assert captured.err.startswith("error:io:")


def test_bad_label_reports_format_error(tmp_path, capsys):
    posts = tmp_path / "posts.jsonl"
    posts.write_text('{"id": 1, "text": "x", "label": "unsure"}\n')
    code = main([
        "--input", str(posts),
        "--out", str(tmp_path / "out.mmff"),
        "--encoder", "offline",
    ])
    captured = capsys.readouterr()
    assert code == 1
    assert captured.err.startswith("error:format:")


def test_unknown_encoder_is_rejected_by_the_parser(tmp_path):
    with pytest.raises(SystemExit):
        main(["--input", "x", "--out", "y", "--encoder", "imaginary"])

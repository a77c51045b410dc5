import json
import subprocess
import sys

import pytest
from PIL import Image

from stegolineage.cli import build_parser, main

from corpus import natural_images

SUBCOMMANDS = [
    ["project"], ["embed"], ["extract"], ["inherit"], ["tree", "build"], ["match"], ["channel", "apply"],
    ["theory", "curve"], ["theory", "check"], ["bench", "distortion"], ["bench", "retrieval"],
    ["bench", "inclusion"], ["bench", "deletion"], ["quality"],
]


@pytest.fixture(scope="module")
def images(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    paths = []
    for i, img in enumerate(natural_images(3, seed=40, size=64)):
        paths.append(d / f"img{i}.png")
        Image.fromarray(img).save(paths[-1])
    return paths


def run(capsys, argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("words", SUBCOMMANDS, ids=" ".join)
def test_help_exits_zero(capsys, words):
    with pytest.raises(SystemExit) as exc:
        main(words + ["--help"])
    assert exc.value.code == 0
    assert "usage:" in capsys.readouterr().out


def test_help_documents_every_flag():
    parser = build_parser()
    stack = [parser]
    while stack:
        p = stack.pop()
        for action in p._actions:
            if action.choices and isinstance(action.choices, dict):
                stack.extend(action.choices.values())
            elif action.option_strings:
                assert action.help, f"{p.prog}: {action.option_strings} lacks help"


def test_usage_errors_exit_two(capsys):
    for argv in (["project"], ["bogus"], ["project", "x.png", "--unknown"], ["theory", "check", "--p", "1.5"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_project_phash_hex(capsys, images):
    code, out, _ = run(capsys, ["project", "--projector", "phash", images[0]])
    assert code == 0 and len(out.strip()) == 16
    int(out, 16)


def test_theory_check_hand_value(capsys):
    code, out, _ = run(capsys, ["theory", "check", "--n", "2", "--p", "0.5", "--q", "0.5", "--N", "2",
                                "--trials", "100000"])
    doc = json.loads(out)
    assert code == 0 and doc["closed_form"] == 0.3125 and doc["within_4se"]


def test_theory_curve_csv(capsys):
    code, out, _ = run(capsys, ["theory", "curve", "--n", "2", "--p", "0.5", "--q", "0.5", "--N", "2"])
    assert code == 0 and out == "p,q,N,accuracy\n0.5,0.5,2,0.3125\n"


def test_match_empty_manifest(capsys, images, tmp_path):
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"nodes": [], "stego": {"method": "qim"}, "branching": []}))
    code, out, err = run(capsys, ["match", "--query", images[0], "--pool", manifest])
    assert code == 1 and out == "" and "empty pool" in err


def test_missing_file_is_operational_error(capsys, tmp_path):
    code, _, err = run(capsys, ["project", tmp_path / "nope.png"])
    assert code == 1 and "error" in err


def test_embed_extract_inherit_round_trip(capsys, images, tmp_path):
    trait = "0123456789abcdef"
    code, *_ = run(capsys, ["embed", "--cover", images[0], "--trait", trait, "--seed", "0x2a",
                            "--out", tmp_path / "s.png"])
    assert code == 0
    code, out, _ = run(capsys, ["extract", tmp_path / "s.png", "--seed", "42"])
    assert out.strip() == trait
    code, out, _ = run(capsys, ["inherit", "--parent", images[1], "--cover", images[2], "--seed", "7",
                                "--stego", "iss", "--out", tmp_path / "child.png"])
    record = json.loads(out)
    _, parent_hex, _ = run(capsys, ["project", images[1]])
    assert record["trait_embedded"] == parent_hex.strip()
    _, extracted, _ = run(capsys, ["extract", tmp_path / "child.png", "--seed", "7", "--stego", "iss"])
    assert extracted.strip() == parent_hex.strip()


def test_tree_match_and_quality(capsys, images, tmp_path):
    roots = images[0].parent
    code, out, _ = run(capsys, ["tree", "build", "--roots", roots, "--out-dir", tmp_path / "t",
                                "--branching", "2", "--seed", "3"])
    assert code == 0 and json.loads(out)["nodes"] == 9
    pool = tmp_path / "t" / "manifest.json"
    code, out, _ = run(capsys, ["match", "--query", tmp_path / "t" / "r001.1.png", "--pool", pool,
                                "--exclude", "r001.1"])
    assert code == 0 and json.loads(out)["nominated"] == "r001"
    code, out, _ = run(capsys, ["quality", images[0], images[0]])
    assert json.loads(out)["psnr"] == "inf"


def test_channel_apply(capsys, images, tmp_path):
    code, *_ = run(capsys, ["channel", "apply", images[0], "--op", "brightness", "--severity", "0",
                            "--out", tmp_path / "o.png"])
    from stegolineage.imaging import load_image
    assert code == 0 and (load_image(tmp_path / "o.png") == load_image(images[0])).all()
    code, _, err = run(capsys, ["channel", "apply", images[0], "--op", "blur", "--severity", "-1",
                                "--out", tmp_path / "o.png"])
    assert code == 1 and "severity" in err


def test_byte_identical_output(capsys, images):
    first = run(capsys, ["project", "--projector", "randproj", "--proj-seed", "9", images[2]])
    second = run(capsys, ["project", "--projector", "randproj", "--proj-seed", "9", images[2]])
    assert first == second


def test_module_entry_point():
    result = subprocess.run([sys.executable, "-m", "stegolineage", "theory", "curve", "--n", "2",
                             "--p", "0.5", "--q", "0.5", "--N", "2"], capture_output=True, text=True)
    assert result.returncode == 0 and result.stdout.endswith("0.3125\n")

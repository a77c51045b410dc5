import numpy as np
import pytest
from PIL import Image

from stegolineage.phylogeny import build_tree
from stegolineage.projector import FeatureDir, Projector, ProjectorSpec, write_features
from stegolineage.stego import Stego

from corpus import external_features, natural_images

DESK_SEED = 0


@pytest.fixture(scope="session")
def covers():
    return natural_images(50, seed=2)


@pytest.fixture(scope="session")
def small_covers():
    return natural_images(10, seed=5)


@pytest.fixture(scope="session")
def roots_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("roots")
    for i, img in enumerate(natural_images(10, seed=11)):
        Image.fromarray(img).save(d / f"root{i:02d}.png")
    return d


def _tree(tmp_path_factory, roots_dir, kind, features=None, method="qim"):
    out = tmp_path_factory.mktemp(f"tree_{kind}_{method}")
    projector = Projector(ProjectorSpec(kind, 64, 7), features)
    manifest = build_tree(roots_dir, [3, 2, 1], projector, Stego(method), DESK_SEED, out, jobs=4)
    return manifest, projector, manifest.load_all()


@pytest.fixture(scope="session")
def sha_tree(tmp_path_factory, roots_dir):
    return _tree(tmp_path_factory, roots_dir, "sha256")


@pytest.fixture(scope="session")
def iss_tree(tmp_path_factory, roots_dir):
    return _tree(tmp_path_factory, roots_dir, "sha256", method="iss")


@pytest.fixture(scope="session")
def phash_tree(tmp_path_factory, roots_dir):
    return _tree(tmp_path_factory, roots_dir, "phash")


@pytest.fixture(scope="session")
def randproj_tree(tmp_path_factory, roots_dir):
    """Tree grown with an external extractor; matching then reads its features from .fvec files."""
    manifest, _, images = _tree(tmp_path_factory, roots_dir, "randproj", external_features)
    fdir = tmp_path_factory.mktemp("features")
    for node_id, img in images.items():
        write_features(fdir / f"{node_id}.fvec", external_features(img))
    return manifest, Projector(ProjectorSpec("randproj", 64, 7), FeatureDir(fdir)), images


@pytest.fixture(scope="session")
def extraneous_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("extraneous")
    for i, img in enumerate(natural_images(1440, seed=99, size=64)):
        Image.fromarray(img).save(d / f"x{i:04d}.png", compress_level=1)
    return d


# --- acceptance report --------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture(scope="session")
def gate():
    """Record one verdict per acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(ok), title, detail)
        assert ok, f"criterion {number} ({title}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}")

import math

import numpy as np
import pytest

from stegolineage import bench
from stegolineage.projector import Projector, ProjectorSpec
from stegolineage.stego import Stego

from corpus import natural_images, noise_images


def test_pr_point_conventions():
    p = bench.pr_point(0.5, 0.75, claimed=10, true_pairs=8, hits=6)
    assert (p.precision, p.recall) == (0.6, 0.75)
    assert p.f_score == pytest.approx(2 * 0.6 * 0.75 / 1.35)
    empty = bench.pr_point(1.0, 0.75, claimed=0, true_pairs=5, hits=0)
    assert empty.precision == 1.0 and empty.empty_claims and empty.recall == 0.0 and empty.f_score == 0.0
    undefined = bench.pr_point(0.1, 0.75, claimed=3, true_pairs=0, hits=0)
    assert undefined.recall_undefined and undefined.f_score is None


def test_csv_format():
    rows = [bench.Row("x", "jpeg", 0.5, None, "phash", "qim", "acc", 1 / 3, 7),
            bench.Row("x", "blur", 0.25, 0.75, "phash", "qim", "acc", None, 7)]
    text = bench.rows_to_csv(rows)
    lines = text.split("\n")
    assert lines[0] == ",".join(bench.CSV_COLUMNS)
    assert lines[1] == "x,blur,0.25,0.75,phash,qim,acc,,7"
    assert lines[2] == "x,jpeg,0.5,,phash,qim,acc,0.333333,7"
    assert text.endswith("\n") and "\r" not in text


def test_stego_agreement_sweep(sha_tree):
    manifest, _, images = sha_tree
    rows = bench.estimate_stego_agreement(manifest, "jpeg", [0.0, 0.25, 0.5, 0.75, 1.0], Stego(),
                                          images=images, jobs=4)
    values = [r.value for r in rows]
    assert values[0] == 1.0
    assert all(b <= a + 0.02 for a, b in zip(values, values[1:]))
    rotate = bench.estimate_stego_agreement(manifest, "rotate", [0.5], Stego(), images=images, jobs=4)
    assert rotate[0].value <= 0.7


def test_projector_agreement():
    sha = Projector(ProjectorSpec("sha256"))
    assert abs(bench.estimate_projector_agreement(noise_images(100, seed=8, size=16), sha) - 0.5) <= 0.02
    img = noise_images(1, seed=1, size=16)[0]
    assert bench.estimate_projector_agreement([img, img], sha) == 1.0
    with pytest.raises(ValueError):
        bench.estimate_projector_agreement([img], sha)


def test_phash_correlates_siblings(phash_tree):
    manifest, projector, images = phash_tree
    siblings = [images[f"r00{i}.0"] for i in range(3)] + [images[f"r00{i}.1"] for i in range(3)]
    families = [[images[f"r00{r}.{c}"] for c in range(3)] for r in range(5)]
    related = np.mean([bench.estimate_projector_agreement(f, projector) for f in families])
    assert related > 0.5


def test_sha256_collapses_under_any_edit(sha_tree):
    manifest, projector, images = sha_tree
    for op, s in (("brightness", 0.1), ("jpeg", 0.2), ("contrast", -0.3)):
        row = bench.run_distortion_retrieval(manifest, op, [s], projector, Stego(), images=images, jobs=4)[0]
        assert row.value <= 0.05


def test_sha256_survives_saturation_only_on_greyscale_parents(sha_tree):
    # saturation is the identity on greyscale pixels, so only those parents keep their hash
    manifest, projector, images = sha_tree
    parents = {n.id: n.parent_id for n in manifest.nodes}
    grey = {k for k, v in images.items() if np.ptp(v.astype(int), axis=2).max() == 0}
    queries, cands, sims = bench.retrieval_scores(manifest, "saturation", 0.3, projector, Stego(),
                                                  manifest.key_seed, images=images, jobs=4)
    picks = dict(zip(queries, bench.top1(queries, cands, sims)))
    colour = [q for q in queries if parents[q] not in grey]
    assert grey and colour
    assert all(parents[q] in grey for q in queries if picks[q] == parents[q])
    assert np.mean([picks[q] == parents[q] for q in colour]) <= 0.05


def test_phash_light_sweep(phash_tree):
    manifest, projector, images = phash_tree
    rows = bench.run_distortion_retrieval(manifest, "brightness", [0.0, 0.25, 0.5], projector, Stego(),
                                          images=images, jobs=4)
    assert all(abs(r.value - rows[0].value) <= 0.05 for r in rows)


def test_file_features_rejected_when_edited(randproj_tree):
    manifest, projector, images = randproj_tree
    with pytest.raises(ValueError):
        bench.run_distortion_retrieval(manifest, "jpeg", [0.5], projector, Stego(), images=images)


def test_inclusion_baseline_and_sanity(sha_tree, extraneous_dir):
    manifest, projector, images = sha_tree
    points = bench.run_inclusion(manifest, extraneous_dir, [1.0, 0.5], 0.75, projector, Stego(),
                                 images=images, jobs=4)
    base = bench.run_deletion(manifest, [1.0], 0.75, projector, Stego(), images=images)[0]
    assert (points[0].claimed, points[0].hits, points[0].recall) == (base.claimed, base.hits, base.recall)
    for p in points:
        assert 0 <= p.precision <= 1 and 0 <= p.recall <= 1 and p.hits <= p.claimed and p.hits <= p.true_pairs
    with pytest.raises(ValueError):
        bench.run_inclusion(manifest, extraneous_dir, [0.01], 0.75, projector, Stego(), images=images)


def test_deletion_records_undefined_recall(sha_tree):
    manifest, projector, images = sha_tree
    points = bench.run_deletion(manifest, [1.0, 0.5, 0.01], 0.75, projector, Stego(), images=images, jobs=4)
    assert points[0].true_pairs == 150
    tiny = points[-1]
    assert tiny.true_pairs == 0 and tiny.recall_undefined
    rows = bench.rows_to_csv(bench.pr_rows("deletion", [tiny], "sha256", "qim"))
    assert "deletion,none,0.01,0.75,sha256,qim,recall,,0" in rows
    assert "deletion,none,0.01,0.75,sha256,qim,recall_undefined,1,0" in rows
    with pytest.raises(ValueError):
        bench.run_deletion(manifest, [0.0], 0.75, projector, Stego(), images=images)


def test_reports_independent_of_jobs(phash_tree):
    manifest, projector, images = phash_tree
    texts = []
    for jobs in (1, 8):
        rows = bench.estimate_stego_agreement(manifest, "grain", [0.3, 0.9], Stego(), seed=4,
                                              images=images, jobs=jobs)
        rows += bench.run_distortion_retrieval(manifest, "crop", [0.2], projector, Stego(), seed=4,
                                               images=images, jobs=jobs)
        texts.append(bench.rows_to_csv(rows))
    assert texts[0] == texts[1]


def test_theory_crosscheck(phash_tree):
    manifest, projector, images = phash_tree
    result = bench.theory_crosscheck(manifest, "jpeg", 0.9, projector, Stego(), natural_images(40, seed=31),
                                     images=images, jobs=4)
    assert result["pool"] == 159
    assert 0.05 < result["empirical"] < 0.95  # a non-degenerate operating point
    assert result["gap"] <= 0.15
    assert math.isclose(result["gap"], abs(result["empirical"] - result["theory"]))

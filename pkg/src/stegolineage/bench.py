"""Desk-scale robustness and retrieval benchmarks over a tree manifest.

All experiments return :class:`Row` lists (long format) that serialise to a
deterministic CSV; PR experiments also return :class:`PRPoint` records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .channel import ChannelOp, apply
from .imaging import load_image
from .phylogeny import TreeManifest, agreement_matrix, list_images, pmap, project_pool, timestamp
from .prng import SplitMix64, derive_seed
from .projector import FeatureDir, Projector, Trait, agreement
from .stego import Stego
from .theory import TheoryParams, phylo_accuracy

CSV_COLUMNS = ("experiment", "op", "severity", "threshold", "projector", "stego", "metric", "value", "samples")


@dataclass(frozen=True)
class Row:
    experiment: str
    op: str
    severity: float
    threshold: float | None
    projector: str
    stego: str
    metric: str
    value: float | None
    samples: int


@dataclass
class PRPoint:
    ratio: float
    threshold: float
    precision: float
    recall: float | None
    f_score: float | None
    claimed: int
    true_pairs: int
    hits: int
    empty_claims: bool = False

    @property
    def recall_undefined(self) -> bool:
        return self.recall is None


def pr_point(ratio: float, threshold: float, claimed: int, true_pairs: int, hits: int) -> PRPoint:
    empty = claimed == 0
    precision = 1.0 if empty else hits / claimed
    if true_pairs == 0:
        return PRPoint(ratio, threshold, precision, None, None, claimed, 0, hits, empty)
    recall = hits / true_pairs
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PRPoint(ratio, threshold, precision, recall, f, claimed, true_pairs, hits, empty)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.6g}"


def rows_to_csv(rows) -> str:
    rows = sorted(rows, key=lambda r: (r.experiment, r.op, r.severity, r.threshold or 0.0, r.metric))
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        lines.append(",".join([
            r.experiment, r.op, _fmt(r.severity), _fmt(r.threshold), r.projector, r.stego,
            r.metric, _fmt(r.value), str(r.samples),
        ]))
    return "\n".join(lines) + "\n"


def summary_json(manifest: TreeManifest, config: dict) -> str:
    doc = {
        "created": timestamp(),
        "manifest_sha256": manifest.digest(),
        "master_seed": f"{manifest.master_seed:016x}",
        "config": config,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _edit(img, op: str, severity: float, seed: int, index: int):
    return apply(img, ChannelOp(op, severity, derive_seed(seed, index)))


def _trait_stack(traits) -> np.ndarray:
    return np.stack([t.bits for t in traits])


# --- stegosystem robustness ----------------------------------------------

def estimate_stego_agreement(manifest: TreeManifest, op: str, severities, stego: Stego, key_seed: int | None = None,
                             *, seed: int = 0, jobs: int = 1, images=None) -> list[Row]:
    """Mean bit agreement between embedded and extracted traits after ``op``."""
    key = manifest.key_seed if key_seed is None else key_seed
    index = {n.id: i for i, n in enumerate(manifest.nodes)}
    queries = manifest.queries()
    if not queries:
        raise ValueError("manifest has no embedded nodes")
    images = images or manifest.load_all(jobs)
    rows = []
    for s in severities:
        def one(node):
            edited = _edit(images[node.id], op, s, seed, index[node.id])
            embedded = Trait.from_hex(node.trait_embedded)
            return agreement(stego.extract(edited, key, embedded.n), embedded)

        vals = pmap(one, queries, jobs)
        rows.append(Row("stego_agreement", op, float(s), None, "-", stego.method, "bit_agreement",
                        float(np.mean(vals)), len(vals)))
    return rows


def estimate_projector_agreement(images, projector: Projector, keys=None) -> float:
    """Mean agreement over all unordered pairs of an unrelated image set."""
    images = list(images)
    if len(images) < 2:
        raise ValueError("need at least two images")
    keys = list(keys) if keys is not None else [None] * len(images)
    traits = [projector.project(img, k) for img, k in zip(images, keys)]
    stack = _trait_stack(traits)
    sims = agreement_matrix(stack, stack)
    iu = np.triu_indices(len(traits), k=1)
    return float(sims[iu].mean())


# --- retrieval under distortion ------------------------------------------

def _check_features(projector: Projector, severity: float) -> None:
    if projector.spec.kind == "randproj" and isinstance(projector.features, FeatureDir) and severity != 0:
        raise ValueError("file-backed features describe unedited images; use severity 0 or a feature extractor")


def retrieval_scores(manifest: TreeManifest, op: str, severity: float, projector: Projector, stego: Stego,
                     key_seed: int, *, seed: int = 0, jobs: int = 1, images=None):
    """Edit every pool image, then return (query ids, candidate ids, agreement matrix)."""
    _check_features(projector, severity)
    images = images or manifest.load_all(jobs)
    index = {n.id: i for i, n in enumerate(manifest.nodes)}
    edited = dict(zip(images, pmap(lambda nid: _edit(images[nid], op, severity, seed, index[nid]), images, jobs)))
    cand_ids = sorted(edited)
    cand_traits, _ = project_pool(manifest, projector, jobs, images=edited)
    queries = sorted(n.id for n in manifest.queries())
    extracted = pmap(lambda q: stego.extract(edited[q], key_seed, projector.n), queries, jobs)
    sims = agreement_matrix(_trait_stack(extracted), _trait_stack([cand_traits[c] for c in cand_ids]))
    return queries, cand_ids, sims


def top1(queries, cand_ids, sims, exclude_self: bool = True) -> list[str]:
    """Argmax candidate per query, ties to the smallest id, the query itself excluded."""
    ids = np.array(cand_ids)
    picks = []
    for qi, q in enumerate(queries):
        row = sims[qi].copy()
        if exclude_self:
            row[ids == q] = -1.0
        best = row.max()
        picks.append(min(ids[row == best]))
    return picks


def run_distortion_retrieval(manifest: TreeManifest, op: str, severities, projector: Projector, stego: Stego,
                             key_seed: int | None = None, *, seed: int = 0, jobs: int = 1, images=None) -> list[Row]:
    key = manifest.key_seed if key_seed is None else key_seed
    parents = {n.id: n.parent_id for n in manifest.nodes}
    images = images or manifest.load_all(jobs)
    rows = []
    for s in severities:
        queries, cand_ids, sims = retrieval_scores(manifest, op, s, projector, stego, key,
                                                   seed=seed, jobs=jobs, images=images)
        picks = top1(queries, cand_ids, sims)
        acc = float(np.mean([p == parents[q] for q, p in zip(queries, picks)]))
        rows.append(Row("retrieval", op, float(s), None, projector.spec.kind, stego.method, "top1_accuracy",
                        acc, len(queries)))
    return rows


def abstention_rate(manifest: TreeManifest, projector: Projector, stego: Stego, threshold: float,
                    key_seed: int | None = None, *, jobs: int = 1, images=None) -> float:
    """Fraction of queries that abstain once their true parent (and themselves) leave the pool."""
    key = manifest.key_seed if key_seed is None else key_seed
    parents = {n.id: n.parent_id for n in manifest.nodes}
    queries, cand_ids, sims = retrieval_scores(manifest, "brightness", 0.0, projector, stego, key,
                                               jobs=jobs, images=images)
    ids = np.array(cand_ids)
    nulls = 0
    for qi, q in enumerate(queries):
        row = sims[qi][(ids != q) & (ids != parents[q])]
        nulls += int(row.max() < threshold)
    return nulls / len(queries)


# --- inclusion / deletion ------------------------------------------------

def _pr_counts(sims, queries, cand_ids, parents, threshold, alive=None):
    ids = np.array(cand_ids)
    claimed = hits = 0
    for qi, q in enumerate(queries):
        row = sims[qi]
        mask = ids != q
        if alive is not None:
            mask &= alive
        claim = mask & (row >= threshold)
        claimed += int(claim.sum())
        hits += int(claim[ids == parents[q]].sum())
    return claimed, hits


def _clean_scores(manifest, projector, stego, key, jobs, images):
    images = images or manifest.load_all(jobs)
    traits, _ = project_pool(manifest, projector, jobs, images=images)
    queries = sorted(n.id for n in manifest.queries())
    extracted = pmap(lambda q: stego.extract(images[q], key, projector.n), queries, jobs)
    return queries, traits, _trait_stack(extracted)


def run_inclusion(manifest: TreeManifest, extraneous_dir, ratios, threshold: float, projector: Projector,
                  stego: Stego, key_seed: int | None = None, *, seed: int = 0, jobs: int = 1,
                  images=None) -> list[PRPoint]:
    """Dilute the pool with unrelated images; ratio = relevant / total."""
    key = manifest.key_seed if key_seed is None else key_seed
    parents = {n.id: n.parent_id for n in manifest.nodes}
    queries, traits, q_stack = _clean_scores(manifest, projector, stego, key, jobs, images)
    relevant = len(manifest.nodes)
    need = {r: int(round(relevant / r)) - relevant for r in ratios}
    files = list_images(extraneous_dir)
    if max(need.values(), default=0) > len(files):
        raise ValueError(f"ratio {min(ratios)} needs {max(need.values())} extraneous images, found {len(files)}")
    order = SplitMix64(seed).permutation(len(files))
    chosen = [files[i] for i in order[: max(need.values(), default=0)]]

    def proj(path):
        return projector.project(load_image(path), path.stem)

    extra = pmap(proj, chosen, jobs)
    man_ids = sorted(traits)
    base = agreement_matrix(q_stack, _trait_stack([traits[c] for c in man_ids]))
    extra_sims = agreement_matrix(q_stack, _trait_stack(extra)) if extra else np.zeros((len(queries), 0))
    claimed0, hits = _pr_counts(base, queries, man_ids, parents, threshold)
    points = []
    for r in ratios:
        extra_claims = int((extra_sims[:, : need[r]] >= threshold).sum())
        points.append(pr_point(float(r), threshold, claimed0 + extra_claims, len(queries), hits))
    return points


def run_deletion(manifest: TreeManifest, ratios, threshold: float, projector: Projector, stego: Stego,
                 key_seed: int | None = None, *, seed: int = 0, jobs: int = 1, images=None) -> list[PRPoint]:
    """Retain a seeded fraction of the pool; PR counts only pairs with both ends retained."""
    key = manifest.key_seed if key_seed is None else key_seed
    parents = {n.id: n.parent_id for n in manifest.nodes}
    queries, traits, q_stack = _clean_scores(manifest, projector, stego, key, jobs, images)
    cand_ids = sorted(traits)
    sims = agreement_matrix(q_stack, _trait_stack([traits[c] for c in cand_ids]))
    all_ids = [n.id for n in manifest.nodes]
    order = SplitMix64(seed).permutation(len(all_ids))
    points = []
    for r in ratios:
        if not 0 < r <= 1:
            raise ValueError(f"deletion ratio {r} outside (0, 1]")
        kept = {all_ids[i] for i in order[: int(round(r * len(all_ids)))]}
        alive = np.array([c in kept for c in cand_ids])
        live_q = [qi for qi, q in enumerate(queries) if q in kept]
        sub_q = [queries[qi] for qi in live_q]
        claimed, hits = _pr_counts(sims[live_q], sub_q, cand_ids, parents, threshold, alive)
        true_pairs = sum(1 for q in sub_q if parents[q] in kept)
        points.append(pr_point(float(r), threshold, claimed, true_pairs, hits))
    return points


def pr_rows(experiment: str, points, projector: str, stego: str) -> list[Row]:
    rows = []
    for p in points:
        metrics = {
            "precision": p.precision, "recall": p.recall, "f_score": p.f_score,
            "claimed": p.claimed, "true_pairs": p.true_pairs, "hits": p.hits,
            "empty_claims": int(p.empty_claims), "recall_undefined": int(p.recall_undefined),
        }
        for name, value in metrics.items():
            rows.append(Row(experiment, "none", p.ratio, p.threshold, projector, stego, name, value, p.true_pairs))
    return rows


def theory_crosscheck(manifest: TreeManifest, op: str, severity: float, projector: Projector, stego: Stego,
                      unrelated_images, *, seed: int = 0, jobs: int = 1, images=None) -> dict:
    """Empirical top-1 accuracy next to the closed form at measured (p, q)."""
    images = images or manifest.load_all(jobs)
    q_hat = estimate_stego_agreement(manifest, op, [severity], stego, seed=seed, jobs=jobs, images=images)[0].value
    p_hat = estimate_projector_agreement(unrelated_images, projector)
    empirical = run_distortion_retrieval(manifest, op, [severity], projector, stego, seed=seed, jobs=jobs,
                                         images=images)[0].value
    # the query itself is excluded, so N - 1 candidates compete
    pool = len(manifest.nodes) - 1
    theory = phylo_accuracy(TheoryParams(projector.n, min(max(p_hat, 0.0), 1.0), q_hat, pool))
    return {"p_hat": p_hat, "q_hat": q_hat, "empirical": empirical, "theory": theory,
            "gap": abs(empirical - theory), "pool": pool}


"""Forward inheritance, tree construction and backward retrieval with abstention."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .channel import GEOMETRIC_OPS, OPS, SIGNED_OPS, ChannelOp, apply_chain
from .imaging import load_image, save_image
from .prng import SplitMix64, derive_seed
from .projector import Projector, ProjectorSpec, Trait
from .stego import Stego

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
PHOTOMETRIC_OPS = tuple(op for op in OPS if op not in GEOMETRIC_OPS)


def pmap(fn, items, jobs: int = 1):
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass
class PhyloNode:
    id: str
    path: str
    parent_id: str | None
    generation: int
    key_seed: int
    projector: ProjectorSpec
    trait_embedded: str | None = None
    ops: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "path": self.path,
            "parent_id": self.parent_id,
            "generation": self.generation,
            "key_seed": f"{self.key_seed:016x}",
            "projector": self.projector.to_dict(),
            "trait_embedded": self.trait_embedded,
            "ops": self.ops,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhyloNode":
        return cls(
            id=d["id"],
            path=d["path"],
            parent_id=d.get("parent_id"),
            generation=int(d["generation"]),
            key_seed=int(d["key_seed"], 16),
            projector=ProjectorSpec.from_dict(d["projector"]),
            trait_embedded=d.get("trait_embedded"),
            ops=list(d.get("ops", [])),
        )


@dataclass
class TreeManifest:
    nodes: list[PhyloNode]
    branching: list[int]
    stego: dict
    created: str
    master_seed: int = 0
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        ids = {}
        for node in self.nodes:
            if node.id in ids:
                raise ValueError(f"duplicate node id {node.id!r}")
            ids[node.id] = node
        for node in self.nodes:
            if (node.generation == 0) != (node.parent_id is None):
                raise ValueError(f"node {node.id}: generation 0 iff no parent")
            if (node.trait_embedded is not None) != (node.parent_id is not None):
                raise ValueError(f"node {node.id}: embedded trait iff parent")
            if node.parent_id is not None:
                parent = ids.get(node.parent_id)
                if parent is None:
                    raise ValueError(f"node {node.id}: unknown parent {node.parent_id!r}")
                # generations strictly increase along links, which rules out cycles
                if parent.generation != node.generation - 1:
                    raise ValueError(f"node {node.id}: parent generation mismatch")

    @property
    def by_id(self) -> dict[str, PhyloNode]:
        return {n.id: n for n in self.nodes}

    def queries(self) -> list[PhyloNode]:
        return [n for n in self.nodes if n.parent_id is not None]

    def image_path(self, node: PhyloNode) -> Path:
        return self.base_dir / node.path

    def load(self, node: PhyloNode) -> np.ndarray:
        return load_image(self.image_path(node))

    def load_all(self, jobs: int = 1) -> dict[str, np.ndarray]:
        return dict(zip([n.id for n in self.nodes], pmap(self.load, self.nodes, jobs)))

    def to_json(self) -> str:
        doc = {
            "created": self.created,
            "master_seed": f"{self.master_seed:016x}",
            "branching": list(self.branching),
            "stego": self.stego,
            "nodes": [n.to_dict() for n in self.nodes],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8", newline="\n")
        return path

    @classmethod
    def read(cls, path) -> "TreeManifest":
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        return cls(
            nodes=[PhyloNode.from_dict(d) for d in doc["nodes"]],
            branching=[int(b) for b in doc.get("branching", [])],
            stego=doc["stego"],
            created=doc.get("created", ""),
            master_seed=int(doc.get("master_seed", "0"), 16),
            base_dir=path.parent,
        )

    @property
    def key_seed(self) -> int:
        seeds = {n.key_seed for n in self.nodes}
        if len(seeds) != 1:
            raise ValueError("manifest nodes do not share one stego key")
        return seeds.pop()


def expected_node_count(roots: int, branching) -> int:
    total, width = roots, roots
    for b in branching:
        width *= b
        total += width
    return total


def timestamp() -> str:
    """UTC creation time; honours SOURCE_DATE_EPOCH for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def tree_key(master_seed: int) -> int:
    return SplitMix64(master_seed).next_u64()


def inherit(parent: np.ndarray, offspring_cover: np.ndarray, projector: Projector, stego: Stego,
            key_seed: int, parent_key: str | None = None) -> tuple[np.ndarray, Trait]:
    """Project the parent and embed that trait into the offspring cover."""
    trait = projector.project(parent, parent_key)
    return stego.embed(offspring_cover, trait, key_seed), trait


def synthesis_ops(master_seed: int, node_index: int, low: float = 0.35, high: float = 0.9) -> list[ChannelOp]:
    """Seeded op chain standing in for a generator: two distinct geometric ops, then one photometric."""
    rng = SplitMix64(derive_seed(master_seed, node_index))
    first = GEOMETRIC_OPS[rng.next_u64() % len(GEOMETRIC_OPS)]
    second = tuple(op for op in GEOMETRIC_OPS if op != first)
    ops = []
    for family in ((first,), second, PHOTOMETRIC_OPS):
        name = family[rng.next_u64() % len(family)]
        severity = low + (high - low) * rng.next_float()
        if name in SIGNED_OPS and rng.next_u64() & 1:
            severity = -severity
        ops.append(ChannelOp(name, round(severity, 6), rng.next_u64()))
    return ops


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def build_tree(roots_dir, branching, projector: Projector, stego: Stego, master_seed: int, out_dir,
               *, jobs: int = 1, covers_dir=None, pad: bool = False, max_roots: int | None = None) -> TreeManifest:
    """Grow a phylogenetic tree from every image in ``roots_dir`` and write it to ``out_dir``.

    Child covers come from ``covers_dir/<child id>.png`` when present and are
    otherwise synthesised from the parent with :func:`synthesis_ops`.
    """
    root_paths = list_images(roots_dir)[:max_roots]
    if not root_paths:
        raise ValueError(f"no PNG/JPEG images in {roots_dir}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    key = tree_key(master_seed)
    spec = projector.spec

    nodes: list[PhyloNode] = []
    images: dict[str, np.ndarray] = {}
    for i, path in enumerate(root_paths):
        node_id = f"r{i:03d}"
        img = load_image(path, pad=pad)
        save_image(img, out_dir / f"{node_id}.png")
        images[node_id] = img
        nodes.append(PhyloNode(node_id, f"{node_id}.png", None, 0, key, spec))

    frontier = list(nodes)
    for gen, count in enumerate(branching, start=1):
        jobs_list = []
        for parent in frontier:
            for c in range(count):
                jobs_list.append((parent, f"{parent.id}.{c}", len(nodes) + len(jobs_list)))

        def grow(job):
            parent, child_id, index = job
            parent_img = images[parent.id]
            external = Path(covers_dir) / f"{child_id}.png" if covers_dir else None
            if external is not None and external.exists():
                cover, ops = load_image(external, pad=pad), [{"external": external.name}]
            else:
                chain = synthesis_ops(master_seed, index)
                cover = apply_chain(parent_img, chain)
                ops = [{"op": o.op, "severity": o.severity, "seed": f"{o.seed:016x}"} for o in chain]
            child_img, trait = inherit(parent_img, cover, projector, stego, key, parent.id)
            save_image(child_img, out_dir / f"{child_id}.png")
            return child_img, PhyloNode(child_id, f"{child_id}.png", parent.id, gen, key, spec, trait.hex(), ops)

        results = pmap(grow, jobs_list, jobs)
        frontier = []
        for img, node in results:
            images[node.id] = img
            nodes.append(node)
            frontier.append(node)
        log.info("generation %d: %d nodes", gen, len(results))

    manifest = TreeManifest(nodes, list(branching), stego.to_dict(), timestamp(), master_seed, out_dir)
    manifest.write(out_dir / "manifest.json")
    return manifest


# --- backward phase -------------------------------------------------------

@dataclass
class MatchResult:
    nominated: str | None
    similarity: float
    threshold: float
    ranked: list[tuple[str, float]]
    ties: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    trait_extracted: str = ""

    def to_dict(self) -> dict:
        return {
            "nominated": self.nominated,
            "similarity": self.similarity,
            "threshold": self.threshold,
            "ranked": [{"id": i, "similarity": s} for i, s in self.ranked],
            "ties": self.ties,
            "skipped": self.skipped,
            "trait_extracted": self.trait_extracted,
        }


def agreement_matrix(queries: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Pairwise agreement rates between two stacks of bit rows."""
    q = queries.astype(np.int64)
    c = candidates.astype(np.int64)
    n = q.shape[1]
    same = q @ c.T + (1 - q) @ (1 - c).T
    return same / n


def rank_candidates(extracted: Trait, traits: dict[str, Trait], threshold: float, k: int = 5) -> MatchResult:
    """Nominate the best-agreeing candidate, or abstain below ``threshold``.

    Ordering is (similarity desc, id asc), so equal scores resolve to the
    lexicographically smallest id regardless of evaluation order.
    """
    if not traits:
        raise ValueError("empty candidate pool")
    ids = sorted(traits)
    sims = agreement_matrix(extracted.bits[None, :], np.stack([traits[i].bits for i in ids]))[0]
    order = sorted(range(len(ids)), key=lambda j: (-sims[j], ids[j]))
    best = order[0]
    best_sim = float(sims[best])
    ties = [ids[j] for j in order if sims[j] == best_sim]
    return MatchResult(
        nominated=ids[best] if best_sim >= threshold else None,
        similarity=best_sim,
        threshold=threshold,
        ranked=[(ids[j], float(sims[j])) for j in order[:k]],
        ties=ties if len(ties) > 1 else [],
        trait_extracted=extracted.hex() if extracted.n % 8 == 0 else "",
    )


def project_pool(manifest: TreeManifest, projector: Projector, jobs: int = 1,
                 images: dict | None = None) -> tuple[dict[str, Trait], list[str]]:
    """Re-project every readable candidate; returns (traits, skipped ids)."""

    def one(node):
        try:
            img = images[node.id] if images is not None else manifest.load(node)
            return node.id, projector.project(img, node.id)
        except (OSError, ValueError) as exc:
            log.warning("skipping candidate %s: %s", node.id, exc)
            return node.id, None

    traits, skipped = {}, []
    for node_id, trait in pmap(one, manifest.nodes, jobs):
        if trait is None:
            skipped.append(node_id)
        else:
            traits[node_id] = trait
    return traits, skipped


def match_query(query: np.ndarray, pool: TreeManifest, projector: Projector, stego: Stego, key_seed: int,
                threshold: float = 0.75, k: int = 5, exclude=(), jobs: int = 1) -> MatchResult:
    if not pool.nodes:
        raise ValueError("empty pool")
    extracted = stego.extract(query, key_seed, projector.n)
    traits, skipped = project_pool(pool, projector, jobs)
    for node_id in exclude:
        traits.pop(node_id, None)
    result = rank_candidates(extracted, traits, threshold, k)
    result.skipped = skipped
    return result

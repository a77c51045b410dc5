"""Steganographic inheritance: embed a parent's trait into its offspring, recover lineage at query time."""

from .errors import CapacityError, DimensionError
from .imaging import apply_luma, block_dct, block_idct, load_image, psnr, save_image, ssim, to_luma
from .phylogeny import MatchResult, PhyloNode, TreeManifest, build_tree, inherit, match_query
from .projector import Projector, ProjectorSpec, Trait, agreement, project_features, project_phash, project_sha256
from .stego import IssParams, QimParams, Stego, derive_material, iss_embed, iss_extract, qim_embed, qim_extract
from .theory import TheoryParams, accuracy_curve, agreement_distributions, mc_accuracy, phylo_accuracy

__version__ = "0.1.0"

"""Bayesian record linkage across social networks.

Links accounts that belong to the same individual across two or more
networks by combining noisy profile fields with network structure: a
latent-position model ties friendship probability to distance in a shared
latent space, and a distortion model explains disagreeing profile values.
Inference is by MCMC over the space of cross-file matchings.
"""

from .baseline import greedy_match, omega
from .config import RunConfig, parse_flat_text
from .data import (Adjacency, DataError, Dataset, FieldSpec, NetworkSummary,
                   PairSet, ProfileTable, RecordRef, load_dataset,
                   load_network, load_pairs, load_profiles,
                   summary_statistics, write_network, write_pairs,
                   write_profiles)
from .estimators import (MatchProbabilityTable, PopulationSizePosterior,
                         PosteriorLinkage, binder_point_estimate,
                         match_probabilities, mpmms_point_estimate,
                         population_size_posterior)
from .evaluation import (ConfusionCounts, CriterionReport, DicResult,
                         PairwiseScores, PointwiseAccumulator, WaicResult,
                         confusion, criterion_report, dic,
                         precision_recall_f1, waic)
from .linker import LinkageModel
from .model import (GlobalParams, HyperParams, LinkageStructure, ModelState,
                    default_hyperparams, elicit_sigma_prior, log_joint,
                    network_loglik, string_distortion_pmf)
from .partitions import (count_partitions, count_partitions_with_pairs,
                         enumerate_partitions, max_pairs, pairs_to_labels,
                         sample_partition)
from .runner import run
from .sampler import (ChainDiagnostics, PosteriorSampleSet, SamplerConfig,
                      SamplerContext, effective_sample_size, run_chain)
from .strings import StringDistortion, levenshtein
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "Adjacency", "ChainDiagnostics", "ConfusionCounts", "CriterionReport",
    "DataError", "Dataset", "DicResult", "FieldSpec", "GlobalParams",
    "HyperParams", "LinkageModel", "LinkageStructure",
    "MatchProbabilityTable", "ModelState", "NetworkSummary", "PairSet",
    "PairwiseScores", "PointwiseAccumulator", "PopulationSizePosterior",
    "PosteriorLinkage", "PosteriorSampleSet", "ProfileTable", "RecordRef",
    "RunConfig", "SamplerConfig", "SamplerContext", "StringDistortion",
    "SyntheticSpec", "WaicResult", "binder_point_estimate", "confusion",
    "count_partitions", "count_partitions_with_pairs", "criterion_report",
    "default_hyperparams", "dic", "effective_sample_size",
    "elicit_sigma_prior", "enumerate_partitions", "generate_synthetic",
    "greedy_match", "levenshtein", "load_dataset", "load_network",
    "load_pairs", "load_profiles", "log_joint", "match_probabilities",
    "max_pairs", "mpmms_point_estimate", "network_loglik", "omega",
    "pairs_to_labels", "parse_flat_text", "population_size_posterior",
    "precision_recall_f1", "run", "run_chain", "sample_partition",
    "string_distortion_pmf", "summary_statistics", "waic",
    "write_network", "write_pairs", "write_profiles",
]

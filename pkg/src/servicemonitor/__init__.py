"""Behavioral malware detection from recorded Binder IPC transaction logs.

Pipeline: parse transaction logs, resolve them against a service-function
catalog, model each application's request sequence as a Markov chain,
flatten the transition probabilities into feature vectors, reduce with
PCA, and classify benign vs malicious with a random forest.
"""

from .catalog import ServiceCatalog, ServiceFunction, default_catalog, load_catalog
from .errors import ServiceMonitorError
from .evaluation import EvalReport, cross_validate, roc_and_auc, stratified_folds
from .features import (
    DatasetMatrix,
    FeatureVector,
    MarkovTransitionFeaturizer,
    assemble,
    featurize_trace,
    flatten,
    unflatten,
)
from .forest import ForestModel, ForestParams, RandomForest, predict_label, predict_score, train_forest
from .labels import BENIGN, LABELS, MALICIOUS
from .markov import TransitionModel, build_model, normalize_rows, transition_weights
from .pca import PcaModel, PrincipalComponents, fit_pca
from .persist import ModelBundle, TrainingMetadata, load_model, save_model
from .syngen import CorpusApp, FamilyProfile, default_profiles, gen_corpus, load_profiles, sample_trace
from .trace import FunctionTrace, TransactionRecord, parse_trace, resolve_events, write_trace

__version__ = "0.1.0"

__all__ = [
    "BENIGN",
    "CorpusApp",
    "DatasetMatrix",
    "EvalReport",
    "FamilyProfile",
    "FeatureVector",
    "ForestModel",
    "ForestParams",
    "FunctionTrace",
    "LABELS",
    "MALICIOUS",
    "MarkovTransitionFeaturizer",
    "ModelBundle",
    "PcaModel",
    "PrincipalComponents",
    "RandomForest",
    "ServiceCatalog",
    "ServiceFunction",
    "ServiceMonitorError",
    "TrainingMetadata",
    "TransactionRecord",
    "TransitionModel",
    "assemble",
    "build_model",
    "cross_validate",
    "default_catalog",
    "default_profiles",
    "featurize_trace",
    "fit_pca",
    "flatten",
    "gen_corpus",
    "load_catalog",
    "load_model",
    "load_profiles",
    "normalize_rows",
    "parse_trace",
    "predict_label",
    "predict_score",
    "resolve_events",
    "roc_and_auc",
    "sample_trace",
    "save_model",
    "stratified_folds",
    "train_forest",
    "transition_weights",
    "unflatten",
    "write_trace",
]

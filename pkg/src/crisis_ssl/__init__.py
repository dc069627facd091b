"""Semi-supervised and LLM-guided training strategies for low-resource
crisis tweet classification, built around a compact deterministic classifier."""

from .corpus import (EventCorpus, Example, LabelSchema, SplitPlan, humaid_schema,
                     load_corpus, make_split_plan, save_corpus)
from .featurizer import FeaturizerConfig, HashingFeaturizer, featurize, tokenize
from .metrics import MetricsReport, confusion, ece, evaluate_probs, macro_f1
from .model import (ClassifierParams, CompactClassifier, TrainConfig,
                    init_params, forward, load_params, margin,
                    mc_dropout_predict, save_params, train_model)
from .oracle import (AnnotationCache, AnnotationRequest, OracleProfile,
                     PseudoLabel, annotate_remote, annotate_simulated,
                     annotate_teacher, default_oracle_profile)
from .strategies import (ModelConfig, RunContext, RunRecord, StrategyConfig,
                         StrategyResult, build_context, confidence_gap, mixup,
                         run_strategy, sharpen, STRATEGY_IDS)
from .synth import SynthConfig, generate_corpus

__version__ = "0.1.0"

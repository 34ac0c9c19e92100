"""Post-hoc attribute-based explanations for matrix-factorization recommenders."""
from .auxmodel import AuxModel, AuxSpec, build_input, predict_rating, train_aux
from .baselines import (AmcfPH, GlobalPopularity, LimeRS, OursMethod, PreferenceMethod,
                        RandomMethod, UserPopularity, build_method)
from .dataset import (GENRES, AttributeCatalog, InteractionSet, RatingRecord, SplitDataset,
                      disliked, liked, parse_items, parse_ratings, stratified_split)
from .errors import (AttrExplainError, ExplanationError, ParseError, SplitError,
                     StaleArtifactError, TrainingError, ValidationError)
from .explainer import PreferenceRanking, general_preference, specific_preference, top_k
from .metrics import MetricConfig, MetricReport, build_report, cond_prob_proxy, odds_proxy, rbo
from .mfrec import MFConfig, MFModel, predict, top_k_recommend, train_mf, user_embedding

__version__ = "0.1.0"

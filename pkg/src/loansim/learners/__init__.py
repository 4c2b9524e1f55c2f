from .encoding import BASE_DIM, encode_prefix
from .kmeans import KMeansResult, kmeans_fit
from .qlearning import KMeansQAgent, QTable, q_learn
from .ridge import fit_ridge
from .slearner import NotFittedError, PolicyMap, SLearner, tune_threshold

__all__ = [
    "BASE_DIM",
    "encode_prefix",
    "KMeansResult",
    "kmeans_fit",
    "KMeansQAgent",
    "QTable",
    "q_learn",
    "fit_ridge",
    "NotFittedError",
    "PolicyMap",
    "SLearner",
    "tune_threshold",
]

"""Meta-prompt optimization for LLM agents as an adversarial bandit (EXPO and EXPO-ES)."""
from .core import Arm, Exemplar, ExemplarSequence, PromptDomain, RunTrace, build_domain, domain_from_texts
from .estimator import MlpParams, ScoreNetwork
from .expo_es import CyclicSequenceSelector, RandomSequenceSelector, SnapshotHistory
from .optimizer import DomainFeatures, Exp3ArmSelector, ExpoOptimizer, RunStreams
from .sampler import CumulativeScores, distribution, sample

__version__ = "0.1.0"

__all__ = [
    "Arm", "CumulativeScores", "CyclicSequenceSelector", "DomainFeatures", "Exemplar", "ExemplarSequence",
    "Exp3ArmSelector", "ExpoOptimizer", "MlpParams", "PromptDomain", "RandomSequenceSelector", "RunStreams",
    "RunTrace", "ScoreNetwork", "SnapshotHistory", "build_domain", "distribution", "domain_from_texts",
    "sample",
]

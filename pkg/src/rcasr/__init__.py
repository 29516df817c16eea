"""rcasr: a desk-scale, from-scratch acoustic modeling toolkit.

Recurrent-convolutional and convolutional-recurrent phoneme recognizers with
optional residual shortcuts, trained end to end with CTC, decoded by prefix
beam search, rescored with a bidirectional n-gram phoneme model, and scored
by phoneme error rate.  Everything runs on numpy with hand-derived backward
passes; no autodiff framework.
"""

__version__ = "0.1.0"

from .ctc import (Alphabet, beam_decode, ctc_forward, ctc_loss_and_grad,
                  greedy_decode, synthetic_alphabet, timit_alphabet)
from .evaluate import damerau_levenshtein, per
from .lm import rectify, score, train_lm
from .network import NetworkConfig, build_network, catalog
from .numerics import ParameterStore, adam_step, glorot_init, make_rng
from .trainer import CostCurve, TrainConfig, compare_architectures, train

__all__ = [
    "Alphabet", "CostCurve", "NetworkConfig", "ParameterStore", "TrainConfig",
    "adam_step", "beam_decode", "build_network", "catalog",
    "compare_architectures", "ctc_forward", "ctc_loss_and_grad",
    "damerau_levenshtein", "glorot_init", "greedy_decode", "make_rng", "per",
    "rectify", "score", "synthetic_alphabet", "timit_alphabet", "train",
    "train_lm",
]

"""Trellis source coding with random-permutation inverse-CDF sliding-block decoders."""

from .sources import Family, SourceModel, sample
from .ratedist import ReproductionDistribution, RDPoint, find_shannon_reproduction, gaussian_distortion_rate
from .codec import (
    IDENTITY_SEED,
    EncodingResult,
    SlidingBlockDecoder,
    build_decoder,
    decode,
    exhaustive_encode,
    simulate,
    viterbi_encode,
)
from .diagnostics import DiagnosticsReport, marginal_t2, marton_bound, plug_in_entropy_rate

__version__ = "0.1.0"

"""Learned rate-compatible linear block codes with neural BP decoding."""

from .codes import RateLadder, RCCodeFamily, bch_family, puncture, rate_ladder_from_pairs
from .decoder import DecoderParams, RCDecoder, build_tanner
from .gf2 import BitMatrix, generator_from_H, matmul_gf2, rank_gf2, systematic_form

__version__ = "0.1.0"

"""From-scratch encoder-decoder transformer (numpy, hand-written backward)."""

from .config import ModelConfig, OptimizerConfig
from .vocab import SPECIALS, Vocab, build_vocab
from .network import Batch, Seq2Seq, make_batch
from .optim import AdamW, NonFiniteLossError, clip_global_norm, train_step
from .decode import beam_decode, decode, decode_batch, greedy_decode
from .checkpoint import (
    CheckpointError,
    ModelCheckpoint,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from .gradcheck import grad_check

__all__ = [
    "ModelConfig",
    "OptimizerConfig",
    "SPECIALS",
    "Vocab",
    "build_vocab",
    "Batch",
    "Seq2Seq",
    "make_batch",
    "AdamW",
    "NonFiniteLossError",
    "clip_global_norm",
    "train_step",
    "beam_decode",
    "decode",
    "decode_batch",
    "greedy_decode",
    "CheckpointError",
    "ModelCheckpoint",
    "load_checkpoint",
    "model_from_checkpoint",
    "save_checkpoint",
    "grad_check",
]

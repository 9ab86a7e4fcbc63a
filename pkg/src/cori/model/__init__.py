from .subword import DegenerateWordError, SubwordVocab
from .encoder import (EncoderConfig, FusedRepresentation, ProjectionHead,
                      SequenceTooLongError, TransformerEncoder, encode_fuse,
                      sentence_rep)
from .losses import CLConfig, TaskHead, ZeroNormError, cl_loss, task_loss, total_loss
from .gradcheck import NonFiniteLossError, grad_check
from .train import (Model, TrainConfig, batch_loss, build_model, embed_utterances,
                    evaluate, load_checkpoint, predict, save_checkpoint, train,
                    train_step, utterance_embedding)

__all__ = [
    "CLConfig", "DegenerateWordError", "EncoderConfig", "FusedRepresentation",
    "Model", "NonFiniteLossError", "ProjectionHead", "SequenceTooLongError",
    "SubwordVocab", "TaskHead", "TrainConfig", "TransformerEncoder",
    "ZeroNormError", "batch_loss", "build_model", "cl_loss", "embed_utterances",
    "encode_fuse",
    "evaluate", "grad_check", "load_checkpoint", "predict", "save_checkpoint",
    "sentence_rep", "task_loss", "total_loss", "train", "train_step",
    "utterance_embedding",
]

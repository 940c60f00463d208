from dsvpr.training.checkpoint import load_checkpoint, loss_csv_path, save_checkpoint, sidecar_path, write_loss_csv
from dsvpr.training.lmcl import ClassifierWeights, LmclConfig, class_cosines, lmcl_loss
from dsvpr.training.loop import EpochMetrics, GroupData, TrainConfig, Trainer, sample_batch, train_step
from dsvpr.training.optim import ADAM_EPS, BETA1, BETA2, Adam, AdamState, optimizer_step

__all__ = [
    "ADAM_EPS", "BETA1", "BETA2", "Adam", "AdamState", "ClassifierWeights", "EpochMetrics", "GroupData",
    "LmclConfig", "TrainConfig", "Trainer", "class_cosines", "lmcl_loss", "load_checkpoint",
    "loss_csv_path", "optimizer_step", "sample_batch", "save_checkpoint", "sidecar_path",
    "train_step", "write_loss_csv",
]

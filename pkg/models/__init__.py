from .backbone import EXTRACTOR_GAIN, ModelDims, ModelError, backbone_forward, init_parameters, parameter_shapes
from .classifier import (
    CenterBank,
    ModelState,
    NonFiniteLossError,
    SampleForward,
    StepReport,
    TrainBatch,
    center_loss,
    denoise,
    forward,
    init_model,
    mean_cross_entropy,
    measure_losses,
    predict,
    total_loss,
    train_step,
    update_centers,
)
from .checkpoint import CheckpointError, checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint

__all__ = [
    'EXTRACTOR_GAIN', 'ModelDims', 'ModelError', 'backbone_forward', 'init_parameters', 'parameter_shapes',
    'CenterBank', 'ModelState', 'NonFiniteLossError', 'SampleForward', 'StepReport', 'TrainBatch',
    'center_loss', 'denoise', 'forward', 'init_model', 'mean_cross_entropy', 'measure_losses', 'predict',
    'total_loss', 'train_step', 'update_centers',
    'CheckpointError', 'checkpoint_from_bytes', 'checkpoint_to_bytes', 'load_checkpoint', 'save_checkpoint',
]

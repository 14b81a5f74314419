from .noise_space import (
    LossBreakdown,
    NoiseEstimate,
    NoiseSpace,
    NoiseSpaceError,
    UpdateSign,
    batch_gradient,
    cosine_similarities,
    diversity_gradient,
    diversity_loss,
    estimate,
    estimate_from_extracted,
    estimate_weights,
    extract_noise,
    from_bytes,
    init_noise_space,
    loss_breakdown,
    noise_space_gradient,
    pre_reconstruct,
    reconstruct_noise,
    reconstruct_on_tape,
    reconstruction_loss,
    self_supervised_update,
    sparsity_loss,
    to_bytes,
)

__all__ = [
    'LossBreakdown', 'NoiseEstimate', 'NoiseSpace', 'NoiseSpaceError', 'UpdateSign',
    'batch_gradient', 'cosine_similarities', 'diversity_gradient', 'diversity_loss',
    'estimate', 'estimate_from_extracted', 'estimate_weights', 'extract_noise',
    'from_bytes', 'init_noise_space', 'loss_breakdown', 'noise_space_gradient',
    'pre_reconstruct', 'reconstruct_noise', 'reconstruct_on_tape', 'reconstruction_loss',
    'self_supervised_update', 'sparsity_loss', 'to_bytes',
]

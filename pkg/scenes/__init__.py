from .cube_io import CubeFormatError, HSICube, cube_from_bytes, cube_to_bytes, load_cube, save_cube
from .scene import (
    SceneError,
    SceneSpec,
    block_labels,
    gaussian_signatures,
    generate_scene,
    make_scene_spec,
    nearest_signature_accuracy,
    noise_residual,
)
from .patches import (
    PatchSet,
    Split,
    export_split_csv,
    extract_patch,
    extract_patches,
    labeled_coords,
    reflect_indices,
    split_train_test,
)

__all__ = [
    'CubeFormatError', 'HSICube', 'cube_from_bytes', 'cube_to_bytes', 'load_cube', 'save_cube',
    'SceneError', 'SceneSpec', 'block_labels', 'gaussian_signatures', 'generate_scene',
    'make_scene_spec', 'nearest_signature_accuracy', 'noise_residual',
    'PatchSet', 'Split', 'export_split_csv', 'extract_patch', 'extract_patches',
    'labeled_coords', 'reflect_indices', 'split_train_test',
]

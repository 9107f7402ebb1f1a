"""Python access to the sparse-view reconstruction core.

Arrays are float64 NumPy arrays: images are H x W x C, feature maps C x H x W.
Library errors raise ``SparseviewError`` with ``args == (code, message)``.
"""

from ._sparseview import (
    Camera,
    GaussianCloud,
    Scene,
    SparseviewError,
    alpha_bar,
    curriculum,
    depth_planes,
    evaluation_split,
    extract_features,
    fit_demo,
    fps,
    generate_scene,
    histogram_match,
    load_cloud,
    load_scene,
    perturb_cloud,
    psnr,
    render,
    run_pipeline,
    save_cloud,
    ssim,
    window_partition,
)

__all__ = [
    "Camera",
    "GaussianCloud",
    "Scene",
    "SparseviewError",
    "alpha_bar",
    "curriculum",
    "depth_planes",
    "evaluation_split",
    "extract_features",
    "fit_demo",
    "fps",
    "generate_scene",
    "histogram_match",
    "load_cloud",
    "load_scene",
    "perturb_cloud",
    "psnr",
    "render",
    "run_pipeline",
    "save_cloud",
    "ssim",
    "window_partition",
]

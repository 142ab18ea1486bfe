"""splatshield: frequency-domain input defense and diagnostics for 3DGS pipelines."""

from .gsply import (
    GaussianCloud,
    load_gaussian_ply,
    normalized_variance,
    scale_loss,
    scale_loss_gradient,
)
from .imagecore import Image, load_png, load_ppm, mse, psnr, save_png, save_ppm, ssim
from .matching import (
    build_match_report,
    detect_and_describe,
    ingest_matches,
    match_pair,
    matching_rate,
)
from .minisplat import (
    MiniGaussian,
    MiniSplatScene,
    TrainConfig,
    ViewTarget,
    fit,
    loss_and_gradients,
    perturb,
    render,
    seed_scene,
)
from .pose import (
    CameraPose,
    PoseWeights,
    geodesic_loss,
    order_poses,
    order_trajectory,
    pose_loss_matrix,
    read_images_text,
    translation_loss,
)
from .wavelet import (
    SubbandSet,
    band_planes,
    dwt2,
    energy_report,
    filter_high_freq,
    idwt2,
    subband_to_image,
)

__version__ = "0.1.0"

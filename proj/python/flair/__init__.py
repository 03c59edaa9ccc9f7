"""Diffusion-prior video restoration with analytic data consistency."""

from ._core import (
    ConfigError,
    Operator,
    ProtocolError,
    SamplerError,
    bicubic_kernel,
    clamp,
    condition,
    gaussian_kernel,
    jpeg_round_trip,
    metrics_csv,
    motion_kernel,
    psnr,
    read_video,
    reschedule,
    restore,
    run,
    schedules,
    smooth_motion_video,
    ssim,
    warping_error,
    write_video,
)

__all__ = [
    "ConfigError",
    "Operator",
    "ProtocolError",
    "SamplerError",
    "bicubic_kernel",
    "clamp",
    "condition",
    "gaussian_kernel",
    "jpeg_round_trip",
    "metrics_csv",
    "motion_kernel",
    "psnr",
    "read_video",
    "reschedule",
    "restore",
    "run",
    "schedules",
    "smooth_motion_video",
    "ssim",
    "warping_error",
    "write_video",
]

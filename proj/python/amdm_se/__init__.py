"""Multichannel diffusion speech enhancement."""

from ._amdm import (
    SdeParams,
    diffusion_coeff,
    enhance,
    istft,
    marginal_mean,
    marginal_std,
    read_wav,
    si_sdr,
    simulate_dataset,
    simulate_rir,
    stft,
    write_wav,
)

__all__ = [
    "SdeParams",
    "diffusion_coeff",
    "enhance",
    "istft",
    "marginal_mean",
    "marginal_std",
    "read_wav",
    "si_sdr",
    "simulate_dataset",
    "simulate_rir",
    "stft",
    "write_wav",
]

"""Worked models: Ising lattices, noisy-image segmentation, and ERGMs."""

from .ising import (
    IsingKernel,
    bond_sum,
    cftp_sample,
    ising_heatbath_sweep,
    ising_model,
    ising_stat,
    random_lattice,
    save_pgm,
)
from .imageseg import (
    ImageSegSampler,
    pixel_sweep,
    sigma2_draw,
    simulate_noisy_image,
)
from .ergm import (
    STAT_VARIANTS,
    ErgmKernel,
    ergm_change_stats,
    ergm_flip_sweep,
    ergm_model,
    ergm_stats,
    florentine_business,
    load_edge_list,
)

__all__ = [
    "IsingKernel",
    "bond_sum",
    "cftp_sample",
    "ising_heatbath_sweep",
    "ising_model",
    "ising_stat",
    "random_lattice",
    "save_pgm",
    "ImageSegSampler",
    "pixel_sweep",
    "sigma2_draw",
    "simulate_noisy_image",
    "STAT_VARIANTS",
    "ErgmKernel",
    "ergm_change_stats",
    "ergm_flip_sweep",
    "ergm_model",
    "ergm_stats",
    "florentine_business",
    "load_edge_list",
]

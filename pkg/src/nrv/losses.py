"""Reference implementations of the translation-training losses.

All functions are pure and operate on normalized volumes; they exist as
conformance oracles for external training code, so the arithmetic follows
the written formulas as literally as possible. The density multiplier
rescales sums by the foreground extent so that sparse volumes are not
drowned out by empty space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nrv.volume import Kind, Volume3D

__all__ = [
    "LossConfig",
    "TileLossBreakdown",
    "density_multiplier",
    "cycle_loss",
    "hallucination_loss",
    "extended_cycle_loss",
    "adversarial_loss",
    "compose_tile_loss",
    "tile_objective",
]


@dataclass(frozen=True)
class LossConfig:
    fg_threshold: float = 0.1
    lambda_o: float = 10.0
    lambda_y: float = 10.0
    Lambda_O: float = 10.0
    Lambda_Y: float = 10.0
    w1: float = 0.25
    w2: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.fg_threshold <= 1.0:
            raise ValueError("fg_threshold must be in [0, 1]")
        for name in ("lambda_o", "lambda_y", "Lambda_O", "Lambda_Y", "w1", "w2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class TileLossBreakdown:
    gan_o: float
    gan_y: float
    cyc_o: float
    xcyc_y: float
    hallucination: float
    total: float


def _check_pair(a: Volume3D, b: Volume3D):
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims} vs {b.dims}")
    if a.kind != Kind.NORMALIZED or b.kind != Kind.NORMALIZED:
        raise ValueError("loss inputs must be normalized volumes")


def density_multiplier(a: Volume3D, a_rec: Volume3D, cfg: LossConfig) -> float:
    """1 / (totalVoxels - sharedBackground), denominator clamped to >= 1.

    Shared background is the set of voxels at or below the foreground
    threshold in both volumes; the multiplier is symmetric in its arguments.
    """
    _check_pair(a, a_rec)
    t = cfg.fg_threshold
    shared = int(((a.data <= t) & (a_rec.data <= t)).sum())
    total = a.data.size
    return 1.0 / max(1, total - shared)


def cycle_loss(a: Volume3D, a_rec: Volume3D, cfg: LossConfig) -> float:
    """Density-scaled L1 between a volume and its reconstruction."""
    _check_pair(a, a_rec)
    delta = density_multiplier(a, a_rec, cfg)
    diff = np.abs(a_rec.data.astype(np.float64) - a.data.astype(np.float64))
    return delta * float(diff.sum())


def hallucination_loss(v_O: Volume3D, v_FO: Volume3D, v_Y: Volume3D,
                       v_GY: Volume3D, cfg: LossConfig) -> float:
    """Penalty for structure invented by the translators.

    The young-side term charges intensity present in the translated volume
    but absent from the real young volume; the old-side term charges real
    old intensity the translator failed to keep. Differences are clamped to
    [0, 1] voxel-wise and the sums are density-scaled.
    """
    _check_pair(v_Y, v_GY)
    _check_pair(v_O, v_FO)
    d_y = density_multiplier(v_GY, v_Y, cfg)
    excess_y = np.clip(v_GY.data.astype(np.float64) - v_Y.data.astype(np.float64),
                       0.0, 1.0)
    l_hy = cfg.lambda_y * d_y * float(excess_y.sum())
    d_o = density_multiplier(v_FO, v_O, cfg)
    missing_o = np.clip(v_O.data.astype(np.float64) - v_FO.data.astype(np.float64),
                        0.0, 1.0)
    l_ho = cfg.lambda_o * d_o * float(missing_o.sum())
    return l_ho + l_hy


def extended_cycle_loss(v_GY: Volume3D, v_GprimeY: Volume3D,
                        cfg: LossConfig) -> float:
    """Density-scaled L1 between first- and second-pass translations."""
    _check_pair(v_GY, v_GprimeY)
    delta = density_multiplier(v_GY, v_GprimeY, cfg)
    diff = np.abs(v_GprimeY.data.astype(np.float64) -
                  v_GY.data.astype(np.float64))
    return delta * float(diff.sum())


def adversarial_loss(scores_real, scores_fake) -> tuple[float, float]:
    """Least-squares GAN losses from discriminator scores.

    Returns (loss_D, loss_G): the discriminator pushes real scores to 1 and
    fake scores to 0; the generator pushes fake scores to 1.
    """
    real = np.asarray(scores_real, dtype=np.float64)
    fake = np.asarray(scores_fake, dtype=np.float64)
    if real.size == 0 or fake.size == 0:
        raise ValueError("score lists must be non-empty")
    loss_d = float(((real - 1.0) ** 2).mean() + (fake ** 2).mean())
    loss_g = float(((fake - 1.0) ** 2).mean())
    return loss_d, loss_g


def compose_tile_loss(gan_o: float, gan_y: float, cyc_o: float, xcyc_y: float,
                      hallucination: float, cfg: LossConfig) -> TileLossBreakdown:
    """Combine one tile's loss terms into its training total."""
    total = (gan_o + gan_y + cfg.Lambda_O * cyc_o + hallucination
             + cfg.Lambda_Y * xcyc_y)
    return TileLossBreakdown(gan_o, gan_y, cyc_o, xcyc_y, hallucination, total)


def tile_objective(corners, center: TileLossBreakdown, cfg: LossConfig) -> float:
    """Spatial-consistency objective: w1 times the four quadrant totals plus
    w2 times the center total."""
    corners = tuple(corners)
    if len(corners) != 4:
        raise ValueError(f"expected 4 corner breakdowns, got {len(corners)}")
    return (cfg.w1 * sum(part.total for part in corners)
            + cfg.w2 * center.total)

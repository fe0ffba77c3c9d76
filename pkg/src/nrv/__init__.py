"""nrv: volumetric neurite tooling.

Phantom generation, overlap tiling, translation-loss arithmetic, vesselness
filtering, component morphing, view extraction, and an HTTP facade over the
lot. See the README for the CLI surface.
"""

from nrv.volume import Kind, Provenance, Volume3D, load_volume, save_volume

__version__ = "0.1.0"

__all__ = [
    "Kind",
    "Provenance",
    "Volume3D",
    "load_volume",
    "save_volume",
    "__version__",
]

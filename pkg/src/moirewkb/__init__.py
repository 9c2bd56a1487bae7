"""Semiclassical spectra of one-dimensional moire models."""

__version__ = "0.1.0"

from .symbols import PhaseSpaceSymbol, moyal_product, eval_symbol, rescale_to_well, NormalForm  # noqa: E402
from .models import ModelParams, harper_symbol, lowenergy_symbol, find_wells  # noqa: E402
from .spectra import circle_quantize, tight_binding_bloch, lowenergy_bloch, band_sweep  # noqa: E402
from .wkb import wkb_recurrence, resonant_expansion  # noqa: E402

__all__ = ["PhaseSpaceSymbol", "moyal_product", "eval_symbol", "rescale_to_well", "NormalForm",
           "ModelParams", "harper_symbol", "lowenergy_symbol", "find_wells", "circle_quantize",
           "tight_binding_bloch", "lowenergy_bloch", "band_sweep", "wkb_recurrence", "resonant_expansion"]

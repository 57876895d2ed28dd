"""Export self-attention tensors from a diffusion backbone to ATN1 files."""

from .backbone import BLOCK_MODULES, DEFAULT_BLOCKS, BackboneRunner, load_sd_backbone
from .errors import BackboneUnavailableError, ExportError
from .export import export, parse_blocks

__version__ = "0.1.0"

__all__ = [
    "BLOCK_MODULES",
    "DEFAULT_BLOCKS",
    "BackboneRunner",
    "BackboneUnavailableError",
    "ExportError",
    "export",
    "load_sd_backbone",
    "parse_blocks",
    "__version__",
]

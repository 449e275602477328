"""h5ad-to-native-matrix converter for the hemalearn pipeline."""

from .convert import ConversionError, ConversionManifest, convert, read_mapping_csv

__all__ = ["ConversionError", "ConversionManifest", "convert", "read_mapping_csv"]
__version__ = "0.1.0"

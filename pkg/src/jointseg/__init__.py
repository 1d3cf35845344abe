"""Joint canonical morphological segmentation with compositional word vectors."""

__version__ = "0.1.0"

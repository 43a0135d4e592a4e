"""Contrastive earnings transformer: CPC pre-training on minute bars and earnings reports."""

__version__ = "0.1.0"

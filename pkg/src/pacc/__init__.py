"""Multimodal drug-sensitivity prediction with attention-based SMILES encoders."""

__version__ = "0.1.0"

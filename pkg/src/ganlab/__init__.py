"""Diagnostics for GAN finetuning on toy data, plus a checkpoint-selection toolkit."""

__version__ = "0.1.0"

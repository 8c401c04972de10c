"""Two-stage CNN fine-tuning companion for the earbench toolkit."""

__version__ = "0.1.0"

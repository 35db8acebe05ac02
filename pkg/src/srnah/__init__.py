"""Super-resolution near-field acoustic holography: plate synthesis, SRCNN and an ESM baseline."""

__version__ = "0.1.0"

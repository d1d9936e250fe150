"""Latent-space compression pipeline for streaming intrusion detection.

Edge probes project normalized traffic records through a single trained
matrix (the first hidden layer of a supervised autoencoder) and stream the
low-dimensional latents to a central server, where a random forest issues
verdicts.  Training, search, transport, and reporting all live here.
"""

__version__ = "0.1.0"

"""evocap: desk-scale emotional video captioning with a step-synchronized
emotion evolution path and an intensity-gated caption decoder."""

__version__ = "0.1.0"

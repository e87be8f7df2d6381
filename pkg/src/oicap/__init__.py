"""High- and low-SNR capacity tools for MIMO optical intensity channels."""

from .channel import (
    ChannelError,
    ChannelMatrix,
    IntensityProfile,
    NoiseLevel,
    ReducedChannel,
    energy_ratios,
    epsilon_rank,
    reduce,
    validate,
)

__version__ = "0.1.0"

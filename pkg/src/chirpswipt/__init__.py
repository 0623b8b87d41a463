"""Simulation of wireless information and power transfer with superimposed chirps.

Modules: ``waveform`` (chirp and multisine symbols), ``channel`` (fading and
pilot estimation), ``orderstat`` (ordered Gamma moments), ``txscheme``
(subband selection, power allocation, precoding), ``harvester`` (diode
energy model), ``infodec`` (SINR and BPSK information), ``simkit``
(reproducible Monte Carlo sweeps) and ``cli``.
"""
from .channel import SystemConfig
from .harvester import DiodeModel
from .waveform import WaveformSpec

__all__ = ["SystemConfig", "DiodeModel", "WaveformSpec"]
__version__ = "0.1.0"

"""Automated analysis of single-tone spectroscopy heatmaps of qubit-resonator cells."""

from stsfit.model import HamiltonianParams, TransmonEnergyParams

__all__ = ["HamiltonianParams", "TransmonEnergyParams"]
__version__ = "0.1.0"

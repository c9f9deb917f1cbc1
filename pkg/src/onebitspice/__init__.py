"""One-bit weighted SPICE estimators for sparse range-Doppler imaging.

Submodules: ``operators`` (implicit dictionaries), ``waveforms`` (LFMCW and
PMCW simulation), ``quantizer`` (one-bit comparators), ``hpspice``
(high-precision SPICE, LIKES, SLIM, IAA), ``onebit`` (1bSPICE, 1bLIKES,
1bSLIM, 1bIAA), ``numerics`` (Gaussian tails, CGLS) and ``bench``.
"""

from .onebit import OneBitConfig, OneBitState, run
from .operators import DenseDictionary, Fourier2D, Kronecker
from .quantizer import Threshold, signc

__version__ = "0.1.0"
__all__ = ["OneBitConfig", "OneBitState", "run", "DenseDictionary", "Fourier2D", "Kronecker",
           "Threshold", "signc"]

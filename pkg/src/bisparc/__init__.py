"""BiSPARC unsourced random access: link-level simulator.

Submodules:

``config``      scenario dataclass, validation, seeded random streams
``dictionary``  shared sensing dictionary (Gaussian or subsampled DFT)
``sparc``       bits <-> section supports <-> transmit signals
``outer``       LDPC outer code and sum-product SISO decoder
``channel``     Rayleigh block-fading MAC and the PUPE metric
``detector``    BiGAMP joint support / channel detector
``receiver``    detection, decoding and interference cancellation loop
``harness``     Monte-Carlo trials, sweeps and CSV output
``cli``         ``bisparc`` command line
"""

from .config import RngStream, SystemConfig, ds1_config, eb_n0_db, validate, with_eb_n0_db
from .errors import (
    BisparcError,
    DegenerateError,
    DimensionError,
    EmptyTruthError,
    LengthError,
    NumericalError,
)

__version__ = "0.1.0"

__all__ = [
    "RngStream",
    "SystemConfig",
    "ds1_config",
    "eb_n0_db",
    "validate",
    "with_eb_n0_db",
    "BisparcError",
    "DegenerateError",
    "DimensionError",
    "EmptyTruthError",
    "LengthError",
    "NumericalError",
]

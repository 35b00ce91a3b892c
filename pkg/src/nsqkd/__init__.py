"""Device-independent key distribution secure against no-signaling adversaries.

Modules by concern: :mod:`boxcore` (boxes and the chained Bell variable),
:mod:`quantum` (honest noisy-singlet boxes), :mod:`stats` (types and
concentration), :mod:`protocol` (end-to-end runs), :mod:`security` (rates and
bounds), :mod:`lpverify` (adversary linear programs) and :mod:`cli`.
"""

from .boxcore import ConditionalBox, NBox, bc_value, check_nonsignaling
from .kernels import BACKEND
from .protocol import ProtocolParams, Transcript, run_protocol
from .quantum import EprParams, epr_box
from .security import asymptotic_rate, output_length, p_min

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConditionalBox",
    "EprParams",
    "NBox",
    "ProtocolParams",
    "Transcript",
    "asymptotic_rate",
    "bc_value",
    "check_nonsignaling",
    "epr_box",
    "output_length",
    "p_min",
    "run_protocol",
]

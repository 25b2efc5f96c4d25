"""Edge-offloaded security functions for constrained IoT devices.

Devices run only Diffie-Hellman and AES-GCM; security agents run the
pairing-based group signatures and attribute-based encryption for them.
"""

from .errors import ResiotError
from .groupsig import gs_enroll, gs_open, gs_setup, gs_sign, gs_verify
from .abe import abe_decrypt, abe_encrypt, abe_keygen, abe_setup, parse_policy
from .protocol import (AAAStub, Device, Network, SecurityAgent, attach, run_rsf_abe, run_rsf_gs)
from .sim import Fault, transcript_view
from .harness import inject_fault, load_scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ResiotError", "gs_enroll", "gs_open", "gs_setup", "gs_sign", "gs_verify",
    "abe_decrypt", "abe_encrypt", "abe_keygen", "abe_setup", "parse_policy",
    "AAAStub", "Device", "Network", "SecurityAgent", "attach", "run_rsf_abe", "run_rsf_gs",
    "Fault", "transcript_view", "inject_fault", "load_scenario", "run_scenario",
]

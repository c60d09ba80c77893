"""Cyclic teleportation of cat states over three Bell coherent pairs.

The coherent-state algebra in :mod:`cyclicqt.coherent` is the main engine;
:mod:`cyclicqt.fock` is an independent truncated Fock-space oracle used to
cross-check it.
"""

from .protocol import (
    CaseId,
    DetectionEvent,
    ProtocolParams,
    classify_event,
    enumerate_outcomes,
    plan_correction,
    resolve,
)

__all__ = [
    "CaseId",
    "DetectionEvent",
    "ProtocolParams",
    "classify_event",
    "enumerate_outcomes",
    "plan_correction",
    "resolve",
]
__version__ = "0.1.0"

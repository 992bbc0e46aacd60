"""Equity-constrained AC load-shedding optimization."""

from .case import AdmittanceMatrix, Branch, Bus, Generator, NetworkCase, build_ybus, from_pu, to_pu
from .jsoncase import parse_json_case, serialize_json
from .matpower import case14, parse_matpower_case

__version__ = "0.1.0"

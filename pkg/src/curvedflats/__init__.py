"""Curved flats in symmetric spaces: dressing, Lax checks, conservation laws and Cartan's test."""
from .algebra import SymmetricPair, check_pair, pair_from_config, sun_son
from .config import load_config
from .conservation import flow_family, q_generate
from .dressing import RationalLoop, birkhoff_factor, dress, make_reality_loop, q_expand
from .eds import Flag, involutivity_report
from .grid import Grid, GridField
from .lax import cartan_lift, curved_flat, flat_abelian, parallel_frame, uu0_residual

__version__ = "0.1.0"

__all__ = [
    "Flag", "Grid", "GridField", "RationalLoop", "SymmetricPair",
    "birkhoff_factor", "cartan_lift", "check_pair", "curved_flat", "dress",
    "flat_abelian", "flow_family", "involutivity_report", "load_config",
    "make_reality_loop", "pair_from_config", "parallel_frame", "q_expand",
    "q_generate", "sun_son", "uu0_residual",
]

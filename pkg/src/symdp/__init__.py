"""Symbolic planning for factored MDPs: SPUDD, symbolic LAO*, RTDP and sRTDP."""

__version__ = "0.1.0"

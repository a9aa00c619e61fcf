"""Ransomware campaign detection on incrementally built alert graphs."""

from __future__ import annotations

__version__ = "0.1.0"

"""Desk-scale coronary CTA screening pipeline on synthetic phantoms."""

__version__ = "0.1.0"

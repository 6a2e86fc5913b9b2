"""irt: a refinement type checker with implicit function and pair types."""

__version__ = "0.1.0"

"""Cross-modal association of biometric clusters with sniffed device identifiers."""

__version__ = "0.1.0"

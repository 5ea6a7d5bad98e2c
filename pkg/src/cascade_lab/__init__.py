"""Learning influence functions of network diffusions from incomplete cascades."""

__version__ = "0.1.0"

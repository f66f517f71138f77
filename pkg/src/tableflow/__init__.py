"""tableflow: structured sub-task planning + flow-matching action chunks
in a synthetic kinematic tabletop world."""

__version__ = "0.1.0"

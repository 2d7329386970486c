"""Visual-textual emotion analysis over timed comment ("danmu") streams."""

__version__ = "0.1.0"

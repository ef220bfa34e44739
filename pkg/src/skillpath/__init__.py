"""skillpath: turn a tracked human demonstration plus a CAD contour into a
validated robot motion program."""

__version__ = "0.1.0"

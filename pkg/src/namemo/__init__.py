"""Classroom name-indication engine.

Scans a lecture hall with a pan-tilt camera (real or simulated), stitches
the tiles into a panorama, matches detected faces against an enrolled
gallery, and serves the annotated result to a teacher dashboard on a fixed
refresh cycle.
"""

__version__ = "0.1.0"

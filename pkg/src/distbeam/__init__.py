"""Distributed microphone beamforming without clock synchronisation.

A reference chirp removes per-device clock offsets up to a bounded window;
cross-correlation peaks inside that window, disambiguated with the triangle
identity between microphone pairs, give sample-accurate relative delays for
delay-and-sum enhancement of any target point.
"""

import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

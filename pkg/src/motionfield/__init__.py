"""motionfield package.

Implicit motion fields: one sinusoidal network that maps a canonical point
and a time to its position, trained on trajectories or scans.
"""

__version__ = "0.1.0"

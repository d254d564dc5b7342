"""Short-term facial pore change simulation.

Detect pores in skin images, clean clinical index series, fit a random
forest of pore-area change per time window, and shrink or enlarge the
detected pores with a local scaling warp.
"""

__version__ = "0.1.0"

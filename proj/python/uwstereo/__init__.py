"""Dense stereo for underwater scenes with bubbles.

Images are float32 arrays in [0, 1], shaped (H, W) or (H, W, C). Disparity
maps are float32 (H, W) with +inf marking invalid pixels. Masks are uint8.
"""

from ._uwstereo import *  # noqa: F401,F403
from ._uwstereo import __doc__  # noqa: F401

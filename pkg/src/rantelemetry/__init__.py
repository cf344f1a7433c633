"""RAN control-channel telemetry toolkit.

Decodes DCI traces into per-UE capacity estimates, streams them to an
application-side bitrate scheduler and ships a simulated gNB for ground truth.
"""

__version__ = "0.1.0"

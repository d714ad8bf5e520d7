"""Turning region confidences into waypoints and detecting arrival.

An external vision-language model scores the left, centre and right thirds
of the image.  Confident scores steer towards the best region and shorten
the step; low scores mean "explore straight ahead".

    python demos/vln_waypoints.py
"""

from crossnav.geometry import Pose2D
from crossnav.vln import ArrivalDetector, ConfidenceRecord, run_stream

frames = [
    (0.0, 0.30, 0.40, 0.20),  # nothing recognised yet
    (0.5, 0.72, 0.30, 0.10),  # target appears on the left
    (1.0, 0.20, 0.85, 0.10),  # now centred and close
    (1.5, 0.10, 0.90, 0.05),
    (2.0, 0.10, 0.92, 0.05),
]
records = [ConfidenceRecord(*f) for f in frames]
rows, det = run_stream(records, Pose2D(0.0, 0.0, 0.0), ArrivalDetector(k=3))
for t, cmd, wp, reached in rows:
    print(f"t={t:.1f}s  d={cmd.d_cmd:.2f} m  theta={cmd.theta_cmd:+.2f} rad  "
          f"waypoint=({wp[0]:+.2f}, {wp[1]:+.2f})  {'ARRIVED' if reached else ''}")

"""One full revolution of a disk about the box center, level set only.

Prints the relative enclosed-volume error and the worst interface shift
(in cells) per grid, plus the fitted order in h.

    python demos/rotation_volume.py
"""
from tumorflow.verify import rotation_volume_study

rep = rotation_volume_study((32, 64, 128))
for N, e, s in zip(rep.parameters, rep.metrics["volume_error"], rep.metrics["shape_error_h"]):
    print(f"N = {N:4d}: volume error {100 * e:.3f} %, interface shift {s:.3f} h")
print(f"order {rep.slopes['volume_error'][0]:.2f}")

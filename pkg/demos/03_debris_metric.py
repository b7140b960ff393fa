"""Accumulating detections over time into the debris metric.

A single-date detection can be foam, a wake, or a passing ship.  The
metric multiplies how often a pixel fires over an interval (detection
percentage D) with how confidently it fires (mean probability Pbar), so
persistent debris scores near 100 x 1 while one-off false alarms decay.
"""

import datetime
from pathlib import Path

import numpy as np

from mdmap import Band, SceneRaster, ThresholdPreset, align_stack, mdm, write_mdm_csv
from mdmap import GeoGrid

out = Path(__file__).parent / "_out" / "03_metric"
out.mkdir(parents=True, exist_ok=True)

grid = GeoGrid(width=20, height=20, origin_x=24.0, origin_y=35.02,
               pixel_size_x=0.001, pixel_size_y=-0.001)
rng = np.random.default_rng(3)
base = datetime.date(2021, 6, 1)

# Six acquisition dates.  Pixel (5, 5) holds persistent debris; pixel
# (12, 12) fires once (a wake); date 3 is half lost to cloud.
rasters = []
for k in range(6):
    probs = rng.uniform(0.0, 0.2, grid.shape).astype(np.float32)
    probs[5, 5] = rng.uniform(0.9, 1.0)
    if k == 2:
        probs[12, 12] = 0.97
    if k == 3:
        probs[:10, :] = np.nan  # masked: no observation there
    rasters.append(SceneRaster(grid, [Band("prob", probs)],
                               base + datetime.timedelta(days=5 * k)))

stack = align_stack(rasters)
print(f"stack: {len(stack)} dates on a common {grid.width}x{grid.height} grid")

result = mdm(stack, ThresholdPreset.opt(), min_obs=3)
n = result.obs_count
print(f"observations per pixel: cloudy rows {int(n[5, 5])}, clear rows {int(n[12, 12])}")

for label, (r, c) in (("persistent debris", (5, 5)),
                      ("single wake", (12, 12)),
                      ("open water", (0, 15))):
    print(f"  {label:18s} D={result.detection_pct[r, c]:6.2f}"
          f"  Pbar={result.mean_prob[r, c]:.3f}"
          f"  MDM={result.mdm[r, c]:6.2f}")

# The wake scores an order of magnitude below the debris pixel even
# though its one detection was confident; water sits at exactly zero.
assert result.mdm[5, 5] > 5 * result.mdm[12, 12]
assert result.mdm[0, 15] == 0.0

write_mdm_csv(result, out / "mdm.csv")
print(f"per-pixel table written to {out / 'mdm.csv'}")

"""Reach into a faint arm that has no density peak of its own.

A dense core is joined by a thin arm whose density falls steadily away from the core.
Peak picking on the smoothed density only ever sees the core. Particles that repel at
long range spread along the arm and leave seeds out there.
"""
import numpy as np

from salr import fixtures as fx
from salr.pipeline import PipelineConfig, detect_scatter, run_baseline_density_peaks

arm = fx.rare_arm()
half = arm.centers[1, 0]
cfg = PipelineConfig(rs=4.0, std_scale=False, bin_width=1.0, strategy="uniform-random", replicates=5)

peaks = run_baseline_density_peaks(arm.points, cfg)
print(f"density peaks: {np.round(peaks, 1).tolist()}")

for run in range(5):
    res = detect_scatter(arm.points, cfg.replace(rng_seed=1000 * run))
    far = [s.position for s in res.seeds if s.position[0] > half]
    print(f"run {run}: {len(res.seeds)} seeds, {len(far)} beyond x = {half:g}",
          np.round(far, 1).tolist())

"""
From resampled volumes to group statistics
==========================================

SUVr in a toy PET volume, nuisance regression on a toy fMRI series, and a
Welch t-test between two simulated groups.
"""

import numpy as np

from mmreg.biomarkers import RegionSpec, nuisance_regress, suvr, welch_ttest
from mmreg.volio import LabelVolume, Volume

rng = np.random.default_rng(0)

# --- SUVr: cerebellar grey matter (8, 47) as reference
seg = np.zeros((12, 12, 12), dtype=np.int32)
seg[:4] = 8
seg[4:8] = 1008      # left superior parietal
seg[8:] = 2008       # right superior parietal
regions = [RegionSpec("cerebellar_gm", {8, 47}, reference=True), RegionSpec("parietal", {1008, 2008})]


def pet_for(amyloid):
    img = np.where(seg == 8, 1.0, 1.0 + amyloid) + rng.normal(0, 0.05, seg.shape)
    return Volume(img)


# amyloid load varies between subjects far more than voxel noise does
patients = [suvr(pet_for(a), LabelVolume(seg), regions).value("session", "parietal")
            for a in rng.normal(0.45, 0.15, 12)]
controls = [suvr(pet_for(a), LabelVolume(seg), regions).value("session", "parietal")
            for a in rng.normal(0.25, 0.10, 15)]
t, p, dof = welch_ttest(patients, controls)
print(f"parietal SUVr: patients {np.mean(patients):.3f}, controls {np.mean(controls):.3f}")
print(f"Welch t = {t:.2f}, p = {p:.2e}, dof = {dof:.1f}")

# --- nuisance regression: a slow drift plus motion contaminating a signal
n = 200
time = np.arange(n)
motion = rng.normal(size=(n, 6)).cumsum(axis=0) * 0.01
drift = time / n
signal = np.sin(2 * np.pi * time / 25)
series = signal + 3 * drift + motion @ rng.normal(size=6)
clean = nuisance_regress(series, np.column_stack([motion, drift]))
print("correlation with signal before:", np.corrcoef(series, signal)[0, 1].round(3),
      "after:", np.corrcoef(clean, signal)[0, 1].round(3))

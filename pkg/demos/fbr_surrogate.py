# %% [markdown]
# # Hot-to-cold ratio on a simulated two-compartment scan
#
# Hot spheres at four times the activity of a water-filled cylinder are
# blurred, perturbed with noise and downsampled to a coarse grid. The coarse
# image is then brought back to the fine grid, once plainly and once with
# fake nodes. The segmentation comes from k-means on a synthetic CT image.
# Each trial measures how far the recovered ratio is from the true value of 4.

# %%
import numpy as np

from fakeres.experiments import run_experiment2_surrogate

rep = run_experiment2_surrogate(trials=20, seed=20240101)
err_plain = np.array([r["abs_error_plain"] for r in rep.rows])
err_fake = np.array([r["abs_error_fake"] for r in rep.rows])
print(f"mean |FBr-4| plain {err_plain.mean():.4f}, fake {err_fake.mean():.4f}")
print(f"Welch t {rep.summary['welch_t']:.3g}, p {rep.summary['welch_p']:.3g}")

# %% [markdown]
# Neither pipeline recovers 4: blurring before downsampling spreads activity
# out of the small spheres, and no correction for that is applied. The fake
# pipeline still keeps the cylinder wall from bleeding into the water, so it
# ends up consistently closer to the truth.

# %%
print(rep.to_text())

# %% [markdown]
# # Plain versus segment-aware oversampling on a 3D head phantom
#
# A 32-node Shepp-Logan head is oversampled to 64 nodes twice. The first run
# uses ordinary trilinear interpolation. The second stacks one block per
# segment first. Because every voxel has a known reference value, the mean
# error of each segment can be read off directly.

# %%
import numpy as np

from fakeres import (
    GridSpec,
    ResamplePlan,
    fake_resample,
    rasterize_phantom,
    resample_volume,
    segment_stats,
    shepp_logan,
    trilinear_kernel,
)
from fakeres.phantom import SHEPP_LOGAN_VALUES

lo, hi = GridSpec.cube(32, -1, 1), GridSpec.cube(64, -1, 1)
phantom = shepp_logan()
f_lo, m_lo = rasterize_phantom(phantom, lo)
_, m_hi = rasterize_phantom(phantom, hi)
kernel = trilinear_kernel(lo.spacing[0])

# %% [markdown]
# The plain interpolant mixes neighbouring tissues wherever a cell straddles a
# boundary, so thin structures pick up the values around them.

# %%
plain = resample_volume(f_lo, ResamplePlan(lo, hi, kernel))
fake = fake_resample(f_lo, m_hi, kernel, low_mask=m_lo)

ref = np.asarray(SHEPP_LOGAN_VALUES)
sp = segment_stats(plain, m_hi, ref)
sf = segment_stats(fake, m_hi, ref)
print(f"{'segment':>8} {'voxels':>8} {'plain err':>12} {'fake err':>12}")
for s in range(6):
    print(f"{s:>8} {sp.voxel_count[s]:>8} {sp.abs_error[s]:>12.4g} {sf.abs_error[s]:>12.4g}")

# %% [markdown]
# The fake-node errors sit at rounding level. Each segment only ever sees its
# own samples, and a constant is reproduced exactly by the trilinear basis.
# The plain result spills values across every edge it meets, which is easy to
# see along a single line through the phantom centre.

# %%
truth = ref[m_hi.labels[20:44, 32, 32]]
print("plain deviation along x:", np.round(plain.values[20:44, 32, 32] - truth, 3) + 0.0)
print("fake  deviation along x:", np.round(fake.values[20:44, 32, 32] - truth, 3) + 0.0)

"""
The four preprocessing flows
============================

Variant a only standardizes the image. Variants b to d filter with a Gabor
bank, split every response into its positive and negative parts and then
standardize each channel.
"""

import numpy as np

from gaborcnn.dataset import ViewCondition, render_view
from gaborcnn.pipeline import apply_pipeline, build_pipeline, rectified

img = render_view(ViewCondition(object_id=2, distance=47.0, height=22.0, angle=30.0), size=(64, 64), seed=0)

for variant in "abcd":
    spec = build_pipeline(variant)
    x = apply_pipeline(spec, img)
    print(f"{variant}: {x.shape}, channel means ~{np.abs(x.mean(axis=(1, 2))).max():.1e}, "
          f"stds {x.std(axis=(1, 2)).min():.3f}..{x.std(axis=(1, 2)).max():.3f}")

# rectification makes the paired channels non-negative with disjoint support
raw = rectified(build_pipeline("b"), img)
pos, neg = raw[0::2], raw[1::2]
print("min rectified value", raw.min(), "| overlap of +/- parts", np.count_nonzero(pos * neg))

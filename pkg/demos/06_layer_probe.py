"""
Probing a residual network block by block
=========================================

Train a MiniResNet8, then fit a linear SVM on the pooled output of every
residual block and see how separable the classes are at each depth.
"""

import numpy as np

from gaborcnn.dataset import DatasetConfig, SplitSpec, generate_dataset, split_by_distance
from gaborcnn.experiment import train_model
from gaborcnn.nn import build_model
from gaborcnn.optim import OptimConfig
from gaborcnn.pipeline import build_pipeline
from gaborcnn.probe import probe_curve

ds = generate_dataset(DatasetConfig.desk(catalogue=(1, 4)), 0)
train, test = split_by_distance(ds, SplitSpec.for_dataset(ds, 47.0))
spec = build_pipeline("a")

model = build_model("MiniResNet8", spec.channels, ds.n_objects, seed=0, input_size=32)
train_model(model, train, spec, 32, OptimConfig(total_epochs=10), 8, np.random.default_rng(1))

result = probe_curve(model, train, test, spec, 32)
for row in result.rows:
    print(f"block {row.block_index}: dim {row.feature_dim:3d}  train {row.train_accuracy:.3f}  "
          f"test {row.test_accuracy:.3f}")
print("network head on the test split:", result.head_test_accuracy)

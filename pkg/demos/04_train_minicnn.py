"""
Train a small CNN at one distance
=================================

The whole recipe in miniature: SGD with Nesterov momentum, five warmup
epochs then cosine decay, random flips and crops during training, and
evaluation on distances never seen in training. Takes about half a minute.
"""

from gaborcnn.dataset import DatasetConfig, generate_dataset
from gaborcnn.experiment import ExperimentConfig, run_cell
from gaborcnn.optim import OptimConfig, lr_at

optim = OptimConfig(total_epochs=10)
print("learning rates:", " ".join(f"{lr_at(e, optim):.4f}" for e in range(optim.total_epochs)))

cfg = ExperimentConfig(
    dataset=DatasetConfig.desk(),
    variants=("a", "d"),
    architectures=("MiniCNN",),
    train_distances=(47.0,),
    trials=1,
    optim=optim,
    batch_size=8,
    net_size=32,
)
ds = generate_dataset(cfg.dataset, 0)

for variant in cfg.variants:
    row = run_cell(cfg, ds, "MiniCNN", variant, 47.0, trial=0)
    print(f"variant {variant}: train {row.train_acc:.3f}  other distances {row.test_acc:.3f}  "
          f"({row.epoch_seconds:.2f}s/epoch)")

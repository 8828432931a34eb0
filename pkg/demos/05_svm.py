"""
One-vs-rest linear SVM
======================

Squared hinge loss, L2 penalty, an unpenalized bias. The solver is
deterministic and never lets the objective go up.
"""

import numpy as np

from gaborcnn.svm import svm_fit, svm_predict

rng = np.random.default_rng(0)
centres = np.array([[0.0, 3.0], [-2.6, -1.5], [2.6, -1.5]])
y = np.repeat(np.arange(3), 30)
X = centres[y] + 0.8 * rng.standard_normal((90, 2))

m = svm_fit(X, y)
print("training accuracy", np.mean(svm_predict(m, X) == y))
for k, trace in enumerate(m.objective_trace):
    print(f"class {k}: {m.n_iter[k]} iterations, objective {trace[0]:.2f} -> {trace[-1]:.4f}, "
          f"|grad| {m.grad_norm[k]:.1e}")

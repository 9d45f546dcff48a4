"""
FID and segmentation scores
===========================

FID compares Gaussians fitted to feature vectors. For diagonal covariances it
reduces to squared mean differences plus squared differences of standard
deviations, which makes a handy sanity check. mIoU and pixel accuracy come
from a confusion matrix between ground truth and predicted label maps.
"""

import numpy as np

from edgegan.metrics import ConfusionMatrix, GaussianStats, fid, miou_acc

rng = np.random.default_rng(0)
m1, m2 = rng.normal(size=4), rng.normal(size=4)
v1, v2 = rng.uniform(0.5, 2, 4), rng.uniform(0.5, 2, 4)
closed_form = ((m1 - m2) ** 2).sum() + ((np.sqrt(v1) - np.sqrt(v2)) ** 2).sum()
print("fid", fid(GaussianStats(m1, np.diag(v1), 100), GaussianStats(m2, np.diag(v2), 100)))
print("closed form", closed_form)

# Segmentation scores: a prediction that gets one row wrong
truth = np.zeros((4, 4), dtype=int)
truth[2:] = 1
pred = truth.copy()
pred[1] = 1
miou, acc = miou_acc(ConfusionMatrix.from_maps(truth, pred, num_classes=2))
print(f"mIoU {miou:.3f}  pixel accuracy {acc:.3f}")

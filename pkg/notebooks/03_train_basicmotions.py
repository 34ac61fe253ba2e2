"""
Training ConvTran on BasicMotions
=================================

Four activities recorded by a wrist accelerometer and gyroscope: 40 train and
40 test series of 6 channels x 100 steps.
"""
# %%
import numpy as np

from convtran.autodiff import count_parameters
from convtran.data import find_uea_split, parse_ts
from convtran.training import TrainSettings, run_experiment

train = parse_ts(find_uea_split("BasicMotions", "TRAIN"))
test = parse_ts(find_uea_split("BasicMotions", "TEST"))
print(train.samples.shape, train.class_names)

# %%
record, net = run_experiment(train, test, seed=0, settings=TrainSettings(znorm=False))
print(f"test accuracy {record.test_accuracy:.3f} after {record.epochs_run} epochs "
      f"(best epoch {record.best_epoch}), {count_parameters(net)} parameters")

# %% [markdown]
# Confusion matrix on the test split.

# %%
pred = net.predict(test.samples)
cm = np.zeros((test.n_classes, test.n_classes), dtype=int)
np.add.at(cm, (test.labels, pred), 1)
print(cm)

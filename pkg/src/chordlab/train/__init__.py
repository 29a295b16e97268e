"""Training loop, cross-validation, search and run tracking."""

from chordlab.train.loop import EarlyStopping, TrainConfig, TrainResult, train_model
from chordlab.train.crossval import SearchSpace, best_record, cross_validate, search
from chordlab.train.tracking import RunRecord, list_runs, record_run

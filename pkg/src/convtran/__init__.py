"""ConvTran for multivariate time series classification, built on a small numpy autodiff engine."""
from .attention import AttentionLayer, attend, attend_erpe, attend_shaw, attend_vector
from .data import TimeSeriesDataset, TsFormatError, parse_ts, stratified_split, synth_order_task, write_ts, znormalize
from .encodings import build_learned_ape, build_tape, build_vanilla_ape, similarity_curve
from .model import ConvTranNet, ModelConfig, load_checkpoint, save_checkpoint
from .training import RunRecord, TrainSettings, run_experiment

__version__ = "0.1.0"

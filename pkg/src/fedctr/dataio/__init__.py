from .history import BehaviorStore, pad_histories
from .io import DatasetError, load_dataset, read_meta, save_dataset
from .pretrained import load_pretrained_embeddings
from .records import AdRecord, BehaviorRecord, Dataset, Impressions, TrainingSample
from .split import chronological_split, subsample
from .synthetic import DAY, SpecError, SyntheticSpec, calibrate_bias, generate_synthetic
from .vocab import OOV, PAD, Vocab, detokenize, tokenize

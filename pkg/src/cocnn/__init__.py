"""Attack detection on blockchain transactions from grey-image encodings.

Pipeline: raw transaction -> EVM disassembly -> 33x32 grey image (bytecode
plus a value row) -> small numpy CNN, trained centrally or by several
simulated mining nodes that average gradients every round.
"""

from .collab import TrainConfig, evaluate_model, train_centralized, train_collaborative
from .datagen import GenSpec, generate_dataset
from .estimators import CNNClassifier, CollaborativeCNNClassifier, TransactionImageEncoder
from .evmdecode import decode_bytecode
from .imaging import preprocess_transaction
from .nn import ArchConfig, init_model, predict
from .txcore import ClassLabel, Dataset, Transaction, load_dataset, save_dataset

__version__ = "0.1.0"

__all__ = [
    "ArchConfig", "CNNClassifier", "ClassLabel", "CollaborativeCNNClassifier", "Dataset", "GenSpec",
    "TrainConfig", "Transaction", "TransactionImageEncoder", "decode_bytecode", "evaluate_model",
    "generate_dataset", "init_model", "load_dataset", "predict", "preprocess_transaction",
    "save_dataset", "train_centralized", "train_collaborative",
]

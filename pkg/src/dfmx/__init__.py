"""Dominant frequency maps (DFMs) and DFM-X augmentation.

A DFM is the per-class set of Fourier frequencies a classifier needs to keep
its accuracy on that class. DFM-X filters a share of the training images
each epoch with the DFM of a different class, so the model cannot lean on
one class's narrow frequency set alone.
"""

from .attacks import AttackConfig, AttackReport, attack_accuracy, fgsm, pgd
from .augment import DfmxAugmenter, DfmxConfig, EpochView, dfmx_transform, make_epoch_view
from .config import ExperimentConfig, load_config, parse_config
from .corruptions import CorruptionKind, CorruptionReport, corrupt, corruption_report, mce, rce
from .datasets import (DatasetBundle, LabeledSet, SyntheticSpec, generate_synthetic,
                       load_cifar10, read_cifar10_batch)
from .dfm import DfmSearchConfig, DominantFrequencyMap, compute_all_dfms, compute_dfm
from .model import (ClassifierModel, TrainConfig, evaluate, forward, input_gradient, predict,
                    small_cnn, train)
from .seeding import derive_seed
from .spectral import dft2, filter_image, idft2

__version__ = "0.1.0"

"""Edge-guided semantic image synthesis at desk scale."""

from .config import Config, load_config
from .data import encode_onehot, decode_onehot, extract_canny_edges, load_batch, make_toy_dataset
from .discriminator import MultiscaleDiscriminator
from .extractor import PerceptualExtractor
from .generator import Generator, GeneratorOutputs
from .metrics import count_parameters, fid, miou_acc
from .trainer import Trainer, lr_at_epoch, run_ablation

__version__ = "0.1.0"

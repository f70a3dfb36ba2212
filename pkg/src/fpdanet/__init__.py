"""FPDANet: fetal ultrasound standard-plane classification.

Residual backbone, parallel position/channel attention, bilateral
multi-scale fusion, batch-scaled learning-rate schedule, metrics, and a
synthetic desk-scale dataset for end-to-end verification on a CPU.
"""

from .attention import ChannelAttention, DualAttention, PositionAttention
from .backbone import Backbone, BackboneConfig, ConvBlock, IdentityBlock
from .data import (CLASS_TAXONOMY, DatasetManifest, SynthSpec, scan_dataset,
                   split_manifest, synth_generate)
from .fpan import ClassifierHead, Fpan, FpanConfig
from .metrics import EvalReport, compute_report, topk_accuracy
from .model import (FPDANet, ModelConfig, build_model, desk_config,
                    full_config, load_checkpoint, save_checkpoint)
from .schedule import LRBounds, LRScheduleConfig, compute_lr_bounds, lr_at_epoch
from .trainer import TrainConfig, cross_entropy_loss, evaluate, train

__version__ = "0.1.0"

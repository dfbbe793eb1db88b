from .stages import StagedProposal, stage_augment, stage_units, pooling_weights, pyramid_feature, non_local
from .model import LnModel
from .losses import LossWeights, OhemBatch, classification_loss, completeness_loss, multitask_loss, ohem_sample
from .trainer import LocalizationConfig, LnSample, build_ln_samples, train_ln
from .inference import Detection, ranking_score, rank_and_detect

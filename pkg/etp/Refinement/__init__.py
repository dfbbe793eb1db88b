from .units import Unit, UnitConfig, crop_units, unit_feature, span_feature, unit_sequence, snap_to_grid
from .regression import RegressionTarget, regression_target, apply_offsets, apply_offsets_continuous
from .model import RnModel, encode_regress
from .trainer import RefinementConfig, LabelledProposal, build_samples, train_rn, refine_proposals

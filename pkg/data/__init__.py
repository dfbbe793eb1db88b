from .dataset_io import (FeatureKind, write_feature_file, read_feature_file, feature_path, load_features, load_scores,
                         AnnotationDoc, VideoMeta, load_annotations, save_annotations, DocItem, write_interval_doc,
                         read_interval_doc, interval_doc_path)
from .checkpoint import ModelKind, save_checkpoint, load_checkpoint, save_state, load_state, encode_state, decode_state
from .synth import SynthConfig, SynthVideo, synth_generate, write_synth

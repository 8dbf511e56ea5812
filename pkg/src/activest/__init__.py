"""Active self-training for weakly supervised point-cloud semantic segmentation.

An iterative loop trains a per-point classifier from a sparse, strategically
queried set of annotations, propagates labels through super-voxels, augments
training with confidence-filtered pseudo-labels, and serves a live annotation
loop to a human operator.
"""

from ._kernels import HAVE_NUMBA
from .cloud import AugmentParams, Cloud, augment, estimate_normals, load_cloud, save_cloud
from .classifier import Model, TrainSchedule, featurize, forward, init_model, train
from .ensemble import EnsembleSummary, predict_ensemble, uncertainty_of
from .labels import Annotation, LabelState, generate_pseudo, propagate, tau_schedule
from .metrics import ConfusionMatrix, confusion, miou, selection_stats
from .pipeline import (ExperimentConfig, ExperimentState, infer_vote,
                       oracle_annotate, run_experiment)
from .sampler import (Budget, QuerySet, allocate, final_sweep_1t1c, select_1t1c,
                      select_random, select_uncertain)
from .supervoxel import Partition, SegmentParams, load_partition, save_partition, segment
from .synth import SceneSpec, generate_synthetic_scene, make_synthetic_dataset

__version__ = "0.1.0"

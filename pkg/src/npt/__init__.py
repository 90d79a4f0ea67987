"""Neural pose transfer for triangle meshes.

Transfers the posture of one mesh onto the body shape of another with a
conditioned normalization network, trained on synthetically generated
articulated-body pairs. Everything runs on a self-contained numpy-backed
autodiff core.
"""

from .body import (DEFAULT_JOINT_RANGES, IdentityParams, KinematicBody,
                   PoseParams, make_body, sample_identity, sample_pose,
                   skin_mesh)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .dataset import (Dataset, PairSample, load_dataset, make_dataset,
                      make_pair, save_dataset, skeleton_oracle_transfer)
from .losses import (LossBreakdown, edge_length_loss, pmd, pmd_meshes,
                     reconstruction_loss, total_loss)
from .meshio import (EdgeList, Mesh, MeshError, build_edge_list, index_colors,
                     normalize_unit_sphere, parse_obj, permute_vertices,
                     read_obj, write_obj, write_ply_colored)
from .network import (DESK_WIDTHS, REFERENCE_WIDTHS, ModelConfig, ModelParams,
                      encode_pose, forward, init_params, spadain,
                      spadain_resblock)
from .optim import AdamState, adam_step
from .tensor import (DiffGraph, GradMap, Param, ShapeMismatch, Tensor3,
                     finite_diff_check, tensor3)
from .trainer import (EvalReport, MetricsLog, TrainConfig, TrainingDiverged,
                      evaluate, robustness_probe, run_ablation_suite, train)

__version__ = "0.1.0"

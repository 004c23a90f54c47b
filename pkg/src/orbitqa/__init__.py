"""orbitqa: no-reference point cloud quality assessment from orbital
moving-camera videos.

The pipeline captures a 4x30-frame video by orbiting a virtual camera
around the cloud on four symmetric circular pathways, extracts spatial
features from key frames and temporal features from the clips, fuses them
with learnable linear projections, and regresses a quality score.
"""

from .errors import (FeatureFileError, OrbitQAError, PlyError,
                     TrainingDivergedError, UndefinedMetricError,
                     ValidationError)
from .pointcloud import (PointCloud, bounding_radius, load_ply, mean_center,
                         parse_ply, save_ply, write_ply)
from .trajectory import (CameraPose, Trajectory, build_sequence, choose_radius,
                         generate_pathway, trajectory_table)
from .render import (Clip, RenderConfig, VideoSequence, capture_video,
                     crop_patch, render_frame, resize_clip)
from .keyframes import KeyframeSelection, select_fixed, select_keyframes, select_vmd
from .features import (FusionWeights, fuse, gap, import_features,
                       spatial_extract_ref, temporal_extract_ref,
                       write_feature_file)
from .model import (Adam, QualityScore, RegressionHead, TrainConfig,
                    VideoQualityRegressor, load_checkpoint, mse_loss,
                    predict_clip, predict_pointcloud, save_checkpoint, train)
from .evaluation import (EvaluationReport, LogisticParams, ManifestEntry,
                         evaluate, fit_logistic, kfold_split, krcc,
                         logistic_map, plcc, read_manifest, rmse, srcc)
from .config import PipelineConfig, load_config, parse_config
from .pipeline import CloudFeatures, StudyResult, run_study
from .synthetic import add_geometric_noise, build_toy_dataset, make_shape

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

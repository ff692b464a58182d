"""cloudvet: detection of tampered 3D point clouds, no victim model needed.

Maps any point cloud to a 78-dimensional vector of residual-geometry
statistics (deviations from a spectrally smoothed reference of itself) and
classifies it with a Fisher-discriminant voting ensemble, without ever
querying the model under attack.
"""

from .attacks import AttackSpec, add_points_attack, apply_attack, perturb_attack, remove_points_attack
from .classifier import (FldBase, FldeConfig, FldeModel, ensemble_scores,
                         load_model, predict, save_model, train_fld, train_flde)
from .cloud import (DatasetManifest, ManifestEntry, PointCloud, load_manifest,
                    parse_cloud, read_cloud_file, resample, write_cloud,
                    write_cloud_file, write_manifest)
from .errors import (CloudVetError, DegenerateGeometryError, DegenerateGraphError,
                     EmptyCloudError, ManifestError, ModelFormatError, ParseError)
from .evaluate import (EvalReport, LabeledRow, LabeledSet, SearchGrids, accuracy,
                       bench_timing, greedy_param_search, make_pairs, roc_auc,
                       run_experiment, split)
from .features import (FEATURE_DIM, PRESETS, CalibratedFeatures, FeatureRow,
                       PipelineParams, calibrate, extract_feature_vector,
                       nonlinear_map, read_feature_csv, write_feature_csv)
from .geometry import (GeometricFeatures, curvature_features, estimate_normals,
                       extract_geometric, nvt_features, principal_curvatures)
from .shapes import shape_corpus
from .spectral import (NeighborGraph, SpectralBasis, build_adjacency, eig_sym,
                       gft_smooth, knn_indices, normalized_laplacian,
                       pca_unit_cube)

__version__ = "0.1.0"

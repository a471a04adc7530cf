"""stentmap: IV-OCT stent apposition assessment at desk scale.

Synthetic pullback generation, helical sliding-window augmentation, a 2.5D
segmentation network with dual-layer style-transfer training, strut-level
metrics, and distance-to-hue 3D apposition maps.
"""

from .apposition import (AppositionConfig, AppositionReport, DistanceField,
                         apposition_report, code_to_rgb, color_stents,
                         distance_field, hue_code, lumen_boundary)
from .augment import concat_pullback, seq_to_volume, window_frame, window_pullback
from .meshing import Mesh, export_ply, lumen_mesh
from .metrics import (MatchCounts, StrutInstance, extract_struts, match_struts,
                      strut_metrics, voxel_metrics)
from .net import NetConfig, SpatialMatchNet, build_network
from .phantom import (Optics, PhantomSpec, SegmentScript, Speckle, StentPattern,
                      expected_apposition, generate_phantom)
from .scanconv import cartesian_to_polar, polar_to_cartesian
from .styletransfer import (StyleTransferConfig, build_challenging_dataset,
                            dual_layer_train, harvest_regions, stylize)
from .train import (Checkpoint, TrainConfig, combined_loss, infer_volume,
                    threshold, train, tversky_loss)
from .volume import (CARTESIAN, POLAR, LabelVolume, PolarFrameSeq, Volume,
                     VolumeFormatError, VoxelSpacing, load_case, load_volume,
                     save_volume)

__version__ = "0.1.0"

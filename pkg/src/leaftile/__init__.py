"""Leaf-width-driven adaptive image tiling for object-detection corpora."""

from .annotations import (
    BBox,
    DiseaseClass,
    ImageRecord,
    LabeledRegion,
    Polygon,
    parse_annotation_file,
    polygon_to_bbox,
    serialize_annotation,
)
from .dataset_emit import DatasetManifest, split_dataset
from .detection_eval import EvalReport, average_precision, iou, mean_ap
from .errors import DataError, InternalError, LeafTileError, UsageError
from .leafwidth import (
    LeafWidthRecord,
    RotatedRect,
    connected_components,
    fit_min_area_rect,
    image_leaf_width,
    normalize_width,
    rasterize_polygon,
)
from .partition import SizeGroup, WidthStats, compute_stats, lwf_score, partition_by_quantile
from .tiler import (
    Detection,
    EdgePolicy,
    Tile,
    TileSpec,
    clip_box_to_tile,
    merge_tile_detections,
    tile_image,
    tile_origins,
    window_size,
)
from .width_estimation import MapeReport, WidthPolicy, WidthPrediction, effective_width, mape

__version__ = "0.1.0"

"""Marine debris density mapping from satellite scene time series.

The processing chain: multispectral scenes are read into georeferenced
rasters, reduced to spectral indices, scored into per-pixel detection
probabilities, masked to open water, accumulated over dates into a
debris-metric raster, binned into fixed-area hexagons with trimmed
means, and rendered as an SVG density map.  Segmentation metrics and
PR-curve threshold selection live alongside for model evaluation.
"""

from .catalog import Manifest, RoiSpec, SceneRecord, build_manifest, fetch_scene, query_catalog
from .errors import (
    AlignmentError,
    CatalogParseError,
    ConfigError,
    DegenerateCurveError,
    EmptyRasterError,
    FormatError,
    GeometryError,
    IntegrityError,
    LabelError,
    MdmapError,
    MetadataError,
    NoSolutionError,
    ProjectionError,
    RenderError,
    TransportError,
    ValidationError,
    WriteError,
)
from .evaluation import (
    ClassMetrics,
    ConfusionMatrix,
    MetricSet,
    PRCurve,
    PRPoint,
    confusion,
    format_table,
    metrics,
    pr_curve,
    report_json,
    select_threshold,
)
from .hexbin import (
    HexBinMap,
    HexCell,
    LocalProjection,
    aggregate,
    assign_hex,
    hex_center,
    hexagon_area,
    project_local,
    top_k,
    trimmed_mean,
    unproject_local,
    write_cells_csv,
    write_top_csv,
)
from .indices import BandQuad, IndexRaster, band_quad, fdi, ndvi
from .io import parse_probability_name, probability_path, read_raster, write_raster
from .masking import (
    LandPolygons,
    SceneClassMask,
    ValidityMask,
    apply_scene_mask,
    combine_masks,
    load_land_polygons,
    mask_stack,
    rasterize_land,
    scene_class_validity,
)
from .mdm import MdmRaster, detection_rate, mdm, mean_probability, write_mdm_csv
from .pipeline import PipelineConfig, RunLedger, run_pipeline, validate_config
from .predict import (
    BaselineWeights,
    DetectionRaster,
    ProbabilityRaster,
    ThresholdPreset,
    default_weights,
    ingest_probability,
    load_weights,
    predict_baseline,
    threshold,
)
from .raster import (
    ArgumentError,
    Band,
    DateStack,
    GeoGrid,
    Patch,
    PatchSet,
    SceneRaster,
    align_stack,
    stitch,
    tile,
)
from .render import (
    DEFAULT_CELL_RAMP,
    DEFAULT_POINT_RAMP,
    RampStyle,
    ramp_color,
    render_map,
)

__version__ = "0.1.0"

from dsvpr.clustering.hdbscan import NOISE, hdbscan
from dsvpr.clustering.io import (
    ManifestEntry,
    PartitionFile,
    TrainingGroup,
    load_partition,
    partition_to_dict,
    read_manifest,
    resolve_image_path,
    validate_partition_dict,
    write_manifest,
    write_partition,
)
from dsvpr.clustering.pipeline import (
    AXES,
    DIRECTIONS,
    ClassCluster,
    Partition,
    PartitionConfig,
    UtmLocation,
    angular_difference,
    assign_groups,
    bearing_deg,
    build_partition,
    density_cluster,
    group_indices,
    merge_directions,
    peak_density,
    principal_directions,
    principal_directions_and_focals,
    prune_close,
    radius_retain,
    select_images_toward_focal,
)

__all__ = [
    "AXES", "DIRECTIONS", "NOISE", "ClassCluster", "ManifestEntry", "Partition", "PartitionConfig",
    "PartitionFile", "TrainingGroup", "UtmLocation", "angular_difference", "assign_groups",
    "bearing_deg", "build_partition", "density_cluster", "group_indices", "hdbscan", "load_partition",
    "merge_directions", "partition_to_dict", "peak_density", "principal_directions",
    "principal_directions_and_focals", "prune_close", "radius_retain", "read_manifest",
    "resolve_image_path", "select_images_toward_focal", "validate_partition_dict",
    "write_manifest", "write_partition",
]

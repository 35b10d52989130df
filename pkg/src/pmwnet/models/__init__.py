from .builders import (
    ARCHITECTURES,
    DESK_ARCHITECTURES,
    DeskConfig,
    HeadConfig,
    attach_head,
    build,
    build_inception_s,
    build_inception_v3,
    build_resnet50,
    build_resnet_s,
    build_vgg16,
    build_vgg_s,
)
from .graph import INPUT, FreezeReport, GraphError, ModelGraph, freeze, unfreeze
from .serialize import (
    LoadReport,
    WeightFormatError,
    WeightShapeError,
    load_state,
    load_weights,
    read_tensors,
    save_weights,
    write_tensors,
    tensors_checksum,
)

__all__ = [
    "ARCHITECTURES",
    "DESK_ARCHITECTURES",
    "DeskConfig",
    "FreezeReport",
    "GraphError",
    "HeadConfig",
    "INPUT",
    "LoadReport",
    "ModelGraph",
    "WeightFormatError",
    "WeightShapeError",
    "attach_head",
    "build",
    "build_inception_s",
    "build_inception_v3",
    "build_resnet50",
    "build_resnet_s",
    "build_vgg16",
    "build_vgg_s",
    "freeze",
    "load_state",
    "load_weights",
    "read_tensors",
    "save_weights",
    "tensors_checksum",
    "write_tensors",
    "unfreeze",
]

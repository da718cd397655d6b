"""Scale-aware bottom-up multi-person pose estimation on numpy/numba."""

from .autograd import Parameter, Tensor, no_grad
from .model import ModelConfig, PosePyramidNet, build_model, count_flops, count_params
from .decode import DecodeConfig, decode_image, multi_scale_infer
from .evaluation import evaluate, oks
from .supervision import Annotation, augment, heatmap_loss, make_targets, tag_loss
from .synthdata import SceneConfig, generate_split

__version__ = "0.1.0"

__all__ = [
    "Annotation", "DecodeConfig", "ModelConfig", "Parameter", "PosePyramidNet",
    "SceneConfig", "Tensor", "augment", "build_model", "count_flops",
    "count_params", "decode_image", "evaluate", "generate_split",
    "heatmap_loss", "make_targets", "multi_scale_infer", "no_grad", "oks",
]

"""Light-field saliency detection with micro-lens angular convolutions.

Public surface, by area:

  * tensor     -- numerical core (conv/pool/upsample/loss, SGD, RNG streams)
  * lightfield -- 4D light-field model and micro-lens array geometry
  * augment    -- 48x deterministic augmentation of array+mask samples
  * network    -- MAC blocks, backbone, ASPP head, SaliencyNet
  * metrics    -- PR curves, F / weighted-F measures, MAE, AP
  * cli        -- dataset ingestion, folds, training, prediction, scoring
"""

from .lightfield import (LightField4D, MicroLensArray, MicroLensImage, SubApertureImage,
                         assemble_microlens_array, disassemble_microlens_array,
                         extract_microlens, extract_subaperture, flip_lightfield,
                         pad_angular, rotate_lightfield, sample_viewpoints)
from .network import (AsppConfig, BackboneConfig, MacBlockConfig, SaliencyNet,
                      TrainSettings, build_2d_baseline, build_saliency_net)
from .tensor import (Parameter, RngStream, Stream, get_default_dtype, poly_lr,
                     set_default_dtype, sgd_step, xavier_init)

__version__ = "0.1.0"

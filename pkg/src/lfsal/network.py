"""The saliency network: MAC blocks, backbone, ASPP head, and training step.

A MAC (micro-lens angular convolution) block turns a micro-lens image
array into feature maps with one output pixel per micro-lens, so the
spatial grid after the block equals the sub-aperture resolution. Three
variants exist:

  * mac9x9: one AxA convolution at stride A; every output pixel sees one
    whole micro-lens image.
  * mac3x3: two sxs/stride-s convolutions with a ReLU in between, s*s = A;
    the composed receptive field is again exactly one micro-lens.
  * star:  five parallel branches sampling the star-shaped viewpoint set
    (the center plus the 0/45/90/135-degree lines at increasing radii via
    dilated 3x3 taps), concatenated and fused by a 1x1 convolution.

The backbone is five conv blocks (3x3, ReLU, dropout after every conv,
3x3 ceil-mode max pool per block; strides 2,2,2,1,1; block5 dilated by 2)
for a total spatial reduction of 8. The head is four dilated-conv score
branches whose 2-channel outputs are summed, bilinearly upsampled to the
sub-aperture resolution, and read through a 2-way softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DataError
from .layers import BilinearUpsample, Conv2d, Dropout, MaxPool2d, OffsetCrop, ReLU
from .lightfield import MicroLensArray
from .tensor import Parameter, RngStream, Stream

MAC_VARIANTS = ("mac9x9", "mac3x3", "star", "central2d")


@dataclass(frozen=True)
class MacBlockConfig:
    variant: str = "mac9x9"
    angular_res: int = 9
    in_channels: int = 3
    out_channels: int = 8
    mid_channels: int | None = None      # mac3x3 intermediate width (default: out_channels)
    branch_channels: int | None = None   # star per-branch width (default: out_channels)
    star_rates: tuple = (1, 2, 3, 4)

    def validate(self) -> None:
        if self.variant not in MAC_VARIANTS:
            raise ConfigurationError(f"unknown MAC variant {self.variant!r}")
        a = self.angular_res
        if a < 1:
            raise ConfigurationError(f"angular_res must be >= 1, got {a}")
        if self.variant == "mac3x3":
            s = math.isqrt(a)
            if s * s != a:
                raise ConfigurationError(
                    f"mac3x3 needs a square angular resolution (per-layer stride sqrt(A)), got A={a}")
        if self.variant == "star":
            if a % 2 == 0:
                raise ConfigurationError(f"star variant needs odd A (a center view), got A={a}")
            if self.star_rates and max(self.star_rates) > (a - 1) // 2:
                raise ConfigurationError(
                    f"star rate {max(self.star_rates)} exceeds (A-1)/2 = {(a - 1) // 2}")


@dataclass(frozen=True)
class BackboneConfig:
    conv_counts: tuple = (2, 2, 3, 3, 3)
    channels: tuple = (8, 16, 32, 64, 64)       # paper scale: (64, 128, 256, 512, 512)
    pool_strides: tuple = (2, 2, 2, 1, 1)
    block5_dilation: int = 2
    dropout_p: tuple = (0.1, 0.1, 0.2, 0.2, 0.3, 0.5)

    def validate(self) -> None:
        if len(self.conv_counts) != 5 or len(self.channels) != 5 or len(self.pool_strides) != 5:
            raise ConfigurationError("backbone needs five blocks")
        if len(self.dropout_p) != 6:
            raise ConfigurationError("dropout_p needs six entries (five blocks + score head)")
        if int(np.prod(self.pool_strides)) != 8:
            raise ConfigurationError(
                f"pool strides {self.pool_strides} give output stride "
                f"{int(np.prod(self.pool_strides))}, expected 8")


@dataclass(frozen=True)
class AsppConfig:
    rates: tuple = (1, 2, 3, 4)                 # paper scale: (6, 12, 18, 24)
    branch_channels: int = 64
    num_classes: int = 2

    def validate(self) -> None:
        if self.num_classes != 2:
            raise ConfigurationError("scoring head is binary (salient / non-salient)")
        if not self.rates or min(self.rates) < 1:
            raise ConfigurationError(f"bad atrous rates {self.rates}")


# -------------------------------------------------------------- MAC blocks

class MacBlock9x9:
    def __init__(self, cfg: MacBlockConfig, gen):
        a = cfg.angular_res
        self.conv = Conv2d(cfg.in_channels, cfg.out_channels, a, stride=a,
                           gen=gen, lr_multiplier=10.0)

    def forward(self, x, train=False, gen=None):
        return self.conv.forward(x)

    def backward(self, gout):
        return self.conv.backward(gout)

    def params(self):
        return [("conv." + n, p) for n, p in self.conv.params()]


class MacBlock3x3:
    def __init__(self, cfg: MacBlockConfig, gen):
        s = math.isqrt(cfg.angular_res)
        mid = cfg.mid_channels or cfg.out_channels
        self.conv1 = Conv2d(cfg.in_channels, mid, s, stride=s, gen=gen, lr_multiplier=10.0)
        self.relu = ReLU()
        self.conv2 = Conv2d(mid, cfg.out_channels, s, stride=s, gen=gen, lr_multiplier=10.0)

    def forward(self, x, train=False, gen=None):
        return self.conv2.forward(self.relu.forward(self.conv1.forward(x)))

    def backward(self, gout):
        return self.conv1.backward(self.relu.backward(self.conv2.backward(gout)))

    def params(self):
        return ([("conv1." + n, p) for n, p in self.conv1.params()]
                + [("conv2." + n, p) for n, p in self.conv2.params()])


class MacBlockStar:
    """Center 1x1 branch plus one dilated 3x3 branch per rate, fused 1x1.

    For micro-lens (x, y) a rate-r branch taps input positions
    (A*x + c + r*du, A*y + c + r*dv), du, dv in {-1, 0, 1}, c = (A-1)/2,
    realized by cropping (c - r) leading rows/cols and convolving with
    dilation r at stride A. The union of taps over the default rates is
    exactly the star-shaped viewpoint set.
    """

    def __init__(self, cfg: MacBlockConfig, gen):
        a = cfg.angular_res
        c = (a - 1) // 2
        cb = cfg.branch_channels or cfg.out_channels
        self.rates = tuple(cfg.star_rates)
        self.center_crop = OffsetCrop(c)
        self.center = Conv2d(cfg.in_channels, cb, 1, stride=a, gen=gen, lr_multiplier=10.0)
        self.branch_crops = [OffsetCrop(c - r) for r in self.rates]
        self.branches = [Conv2d(cfg.in_channels, cb, 3, stride=a, dilation=r,
                                gen=gen, lr_multiplier=10.0) for r in self.rates]
        self.fuse = Conv2d(cb * (1 + len(self.rates)), cfg.out_channels, 1,
                           gen=gen, lr_multiplier=10.0)
        self._cb = cb

    def forward(self, x, train=False, gen=None):
        outs = [self.center.forward(self.center_crop.forward(x))]
        for crop, conv in zip(self.branch_crops, self.branches):
            outs.append(conv.forward(crop.forward(x)))
        return self.fuse.forward(np.concatenate(outs, axis=0))

    def backward(self, gout):
        gcat = self.fuse.backward(gout)
        cb = self._cb
        gx = self.center_crop.backward(self.center.backward(gcat[:cb]))
        for i, (crop, conv) in enumerate(zip(self.branch_crops, self.branches)):
            gx += crop.backward(conv.backward(gcat[(i + 1) * cb:(i + 2) * cb]))
        return gx

    def params(self):
        named = [("center." + n, p) for n, p in self.center.params()]
        for r, conv in zip(self.rates, self.branches):
            named += [(f"rate{r}." + n, p) for n, p in conv.params()]
        return named + [("fuse." + n, p) for n, p in self.fuse.params()]


class CentralViewConv:
    """First stage of the 2D baseline: plain 3x3 conv on the central view."""

    def __init__(self, cfg: MacBlockConfig, gen):
        self.conv = Conv2d(cfg.in_channels, cfg.out_channels, 3, stride=1, pad=1,
                           gen=gen, lr_multiplier=10.0)

    def forward(self, x, train=False, gen=None):
        return self.conv.forward(x)

    def backward(self, gout):
        return self.conv.backward(gout)

    def params(self):
        return [("conv." + n, p) for n, p in self.conv.params()]


_MAC_CLASSES = {"mac9x9": MacBlock9x9, "mac3x3": MacBlock3x3,
                "star": MacBlockStar, "central2d": CentralViewConv}


# ---------------------------------------------------------------- backbone

class Backbone:
    def __init__(self, in_channels: int, cfg: BackboneConfig, gen):
        cfg.validate()
        if in_channels != cfg.channels[0]:
            raise ConfigurationError(
                f"first stage delivers {in_channels} channels, block1 expects {cfg.channels[0]}")
        self.blocks = []
        self.pools = []
        prev = in_channels
        for b in range(5):
            dil = cfg.block5_dilation if b == 4 else 1
            layers = []
            for _ in range(cfg.conv_counts[b]):
                layers.append((Conv2d(prev, cfg.channels[b], 3, stride=1, dilation=dil,
                                      pad=dil, gen=gen,
                                      lr_multiplier=10.0 if b == 0 and not layers else 1.0),
                               ReLU(), Dropout(cfg.dropout_p[b])))
                prev = cfg.channels[b]
            self.blocks.append(layers)
            self.pools.append(MaxPool2d(3, cfg.pool_strides[b], pad=1, ceil_mode=True))
        self.out_channels = prev

    def forward(self, x, train=False, gen=None):
        for layers, pool in zip(self.blocks, self.pools):
            for conv, act, drop in layers:
                x = drop.forward(act.forward(conv.forward(x)), train, gen)
            x = pool.forward(x)
        return x

    def backward(self, gout):
        for layers, pool in zip(reversed(self.blocks), reversed(self.pools)):
            gout = pool.backward(gout)
            for conv, act, drop in reversed(layers):
                gout = conv.backward(act.backward(drop.backward(gout)))
        return gout

    def params(self):
        named = []
        for b, layers in enumerate(self.blocks):
            for j, (conv, _, _) in enumerate(layers):
                named += [(f"block{b + 1}.conv{j + 1}." + n, p) for n, p in conv.params()]
        return named


class Aspp:
    """Parallel dilated score branches; the 2-channel scores are summed."""

    def __init__(self, in_channels: int, cfg: AsppConfig, dropout_p: float, gen):
        cfg.validate()
        self.branches = []
        for r in cfg.rates:
            self.branches.append({
                "conv1": Conv2d(in_channels, cfg.branch_channels, 3, dilation=r, pad=r, gen=gen),
                "relu1": ReLU(),
                "drop1": Dropout(dropout_p),
                "conv2": Conv2d(cfg.branch_channels, cfg.branch_channels, 1, gen=gen),
                "relu2": ReLU(),
                "drop2": Dropout(dropout_p),
                "score": Conv2d(cfg.branch_channels, cfg.num_classes, 1, gen=gen,
                                lr_multiplier=10.0),
            })
        self.rates = tuple(cfg.rates)

    def forward(self, x, train=False, gen=None):
        total = None
        for br in self.branches:
            h = br["drop1"].forward(br["relu1"].forward(br["conv1"].forward(x)), train, gen)
            h = br["drop2"].forward(br["relu2"].forward(br["conv2"].forward(h)), train, gen)
            s = br["score"].forward(h)
            total = s if total is None else total + s
        return total

    def backward(self, gout):
        gx = None
        for br in self.branches:
            g = br["score"].backward(gout)
            g = br["conv2"].backward(br["relu2"].backward(br["drop2"].backward(g)))
            g = br["conv1"].backward(br["relu1"].backward(br["drop1"].backward(g)))
            gx = g if gx is None else gx + g
        return gx

    def params(self):
        named = []
        for i, br in enumerate(self.branches):
            for key in ("conv1", "conv2", "score"):
                named += [(f"branch{i}.{key}." + n, p) for n, p in br[key].params()]
        return named


# ---------------------------------------------------------------- network

@dataclass
class TrainSettings:
    base_lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    max_iter: int = 160_000
    poly_power: float = 0.9


class SaliencyNet:
    """MAC block (or central-view conv) -> backbone -> ASPP -> upsampled softmax."""

    def __init__(self, mac_cfg: MacBlockConfig, backbone_cfg: BackboneConfig,
                 aspp_cfg: AsppConfig, *, input_mean=(0.5, 0.5, 0.5), seed: int = 0):
        mac_cfg.validate()
        self.mac_cfg = mac_cfg
        self.backbone_cfg = backbone_cfg
        self.aspp_cfg = aspp_cfg
        self.input_mean = np.asarray(input_mean, dtype=np.float64)
        self.seed = seed
        gen = RngStream(seed, Stream.WEIGHTS).generator()
        self.mac = _MAC_CLASSES[mac_cfg.variant](mac_cfg, gen)
        self.backbone = Backbone(mac_cfg.out_channels, backbone_cfg, gen)
        self.aspp = Aspp(self.backbone.out_channels, aspp_cfg, backbone_cfg.dropout_p[5], gen)
        self.upsample = BilinearUpsample(1, 1)  # target set per forward

    @property
    def is_2d(self) -> bool:
        return self.mac_cfg.variant == "central2d"

    # -------------------------------------------------------------- plumbing

    def parameters(self) -> dict[str, Parameter]:
        named = {}
        for prefix, stage in (("mac", self.mac), ("backbone", self.backbone), ("aspp", self.aspp)):
            for n, p in stage.params():
                named[f"{prefix}.{n}"] = p
        return named

    def parameter_count(self) -> int:
        return int(sum(p.value.size for p in self.parameters().values() if p.learnable))

    def _prepare_input(self, arr: MicroLensArray) -> np.ndarray:
        if arr.channels != self.mac_cfg.in_channels:
            raise ConfigurationError(
                f"array has {arr.channels} channels, network expects {self.mac_cfg.in_channels}")
        if self.is_2d:
            img = arr.central_view()
            x = np.ascontiguousarray(img.transpose(2, 0, 1))
        else:
            if arr.angular_res != self.mac_cfg.angular_res:
                raise ConfigurationError(
                    f"array A={arr.angular_res} but network built for A={self.mac_cfg.angular_res}")
            if arr.height % arr.angular_res or arr.width % arr.angular_res:
                raise DataError("array dimensions not divisible by the angular resolution")
            x = arr.as_tensor()
        mean = self.input_mean.astype(x.dtype)[:, None, None]
        return x - mean

    # -------------------------------------------------------------- forward

    def forward_logits(self, x: np.ndarray, *, train: bool = False,
                       gen: np.random.Generator = None) -> np.ndarray:
        """(2, N_y, N_x) upsampled score maps from a prepared (C, H, W) input."""
        feat = self.mac.forward(x, train, gen)
        out_h, out_w = feat.shape[1:]
        feat = self.backbone.forward(feat, train, gen)
        score = self.aspp.forward(feat, train, gen)
        self.upsample.out_h, self.upsample.out_w = out_h, out_w
        return self.upsample.forward(score)

    def backward(self, gloss: np.ndarray) -> None:
        g = self.upsample.backward(gloss)
        g = self.aspp.backward(g)
        g = self.backbone.backward(g)
        self.mac.backward(g)

    def predict(self, arr: MicroLensArray) -> np.ndarray:
        """Salient-channel probability map (N_y, N_x) in eval mode."""
        logits = self.forward_logits(self._prepare_input(arr))
        shift = logits.max(axis=0)
        e = np.exp(logits - shift)
        return e[1] / e.sum(axis=0)

    # -------------------------------------------------------------- training

    def train_step(self, arr: MicroLensArray, mask: np.ndarray, iteration: int,
                   settings: TrainSettings) -> float:
        """One SGD iteration on one sample; returns the loss."""
        x = self._prepare_input(arr)
        gen = RngStream(self.seed, Stream.DROPOUT).generator(iteration)
        logits = self.forward_logits(x, train=True, gen=gen)
        if logits.shape[1:] != mask.shape:
            raise DataError(f"mask {mask.shape} does not match prediction {logits.shape[1:]}")
        loss, grad = T.softmax_loss(logits, mask)
        self.backward(grad)
        lr = T.poly_lr(settings.base_lr, iteration, settings.max_iter, settings.poly_power)
        T.sgd_step(self.parameters().values(), lr, settings.momentum, settings.weight_decay)
        return loss

    # ---------------------------------------------------------- persistence

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Named tensors for checkpointing, values and momentum buffers."""
        state = {}
        for name, p in self.parameters().items():
            state[name + ".value"] = p.value
            state[name + ".velocity"] = p.velocity
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        for name, p in params.items():
            for suffix, target in ((".value", "value"), (".velocity", "velocity")):
                key = name + suffix
                if key not in state:
                    raise DataError(f"checkpoint is missing tensor {key}")
                arr = state[key]
                if arr.shape != p.value.shape:
                    raise DataError(f"checkpoint tensor {key} has shape {arr.shape}, "
                                    f"expected {p.value.shape}")
                setattr(p, target, arr.astype(p.value.dtype))


# ------------------------------------------------------------ spec surface

def mac_forward_9x9(arr: MicroLensArray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """One AxA/stride-A convolution over the micro-lens array."""
    a = arr.angular_res
    if weights.shape[2:] != (a, a):
        raise ConfigurationError(f"kernel {weights.shape[2:]} does not match A={a}")
    return T.conv2d(arr.as_tensor(), weights, bias, stride=a)


def mac_forward_3x3(arr: MicroLensArray, w1, b1, w2, b2) -> np.ndarray:
    """Two sxs/stride-s convolutions with a ReLU in between (s*s = A)."""
    a = arr.angular_res
    s = math.isqrt(a)
    if s * s != a:
        raise ConfigurationError(f"variant needs a square angular resolution, got A={a}")
    if w1.shape[2:] != (s, s) or w2.shape[2:] != (s, s):
        raise ConfigurationError("kernel sizes must equal the per-layer stride")
    h = T.relu(T.conv2d(arr.as_tensor(), w1, b1, stride=s))
    return T.conv2d(h, w2, b2, stride=s)


def mac_forward_star(arr: MicroLensArray, center_w, center_b, branch_ws, branch_bs,
                     fuse_w, fuse_b, rates=(1, 2, 3, 4)) -> np.ndarray:
    """Functional star block with explicit per-branch weights."""
    a = arr.angular_res
    if a % 2 == 0:
        raise ConfigurationError(f"star variant needs odd A, got {a}")
    if rates and max(rates) > (a - 1) // 2:
        raise ConfigurationError(f"rate {max(rates)} exceeds (A-1)/2")
    c = (a - 1) // 2
    x = arr.as_tensor()
    outs = [T.conv2d(np.ascontiguousarray(x[:, c:, c:]), center_w, center_b, stride=a)]
    for r, w, b in zip(rates, branch_ws, branch_bs):
        o = c - r
        xo = np.ascontiguousarray(x[:, o:, o:]) if o else x
        outs.append(T.conv2d(xo, w, b, stride=a, dilation=r))
    return T.conv2d(np.concatenate(outs, axis=0), fuse_w, fuse_b)


def star_tap_offsets(a: int, rates=(1, 2, 3, 4)) -> set[tuple[int, int]]:
    """The star-shaped viewpoint set inside one AxA micro-lens image."""
    c = (a - 1) // 2
    taps = {(c, c)}
    for r in rates:
        for dv in (-1, 0, 1):
            for du in (-1, 0, 1):
                if du or dv:
                    taps.add((c + r * dv, c + r * du))
    return taps


def build_saliency_net(mac_cfg: MacBlockConfig, backbone_cfg: BackboneConfig = None,
                       aspp_cfg: AsppConfig = None, **kw) -> SaliencyNet:
    return SaliencyNet(mac_cfg, backbone_cfg or BackboneConfig(),
                       aspp_cfg or AsppConfig(), **kw)


def build_2d_baseline(mac_cfg: MacBlockConfig, backbone_cfg: BackboneConfig = None,
                      aspp_cfg: AsppConfig = None, **kw) -> SaliencyNet:
    """Same network with the MAC block replaced by a 3x3 conv on the central view."""
    cfg = MacBlockConfig(variant="central2d", angular_res=mac_cfg.angular_res,
                         in_channels=mac_cfg.in_channels, out_channels=mac_cfg.out_channels)
    return SaliencyNet(cfg, backbone_cfg or BackboneConfig(),
                       aspp_cfg or AsppConfig(), **kw)

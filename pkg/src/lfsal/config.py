"""Run configuration and the on-disk key=value format, plus manifests.

A config file is plain text, one `key=value` per line, `#` comments
allowed. Lists are comma-separated. Unknown keys are rejected so typos
fail loudly. The same text block is embedded verbatim in checkpoints.

A manifest lists the dataset: a header line `A=<int>` followed by one
`array_path,mask_path` line per sample, paths relative to the manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .augment import FLIPS, ROTATIONS, AugmentationSpec
from .errors import ConfigurationError, DataError
from .network import (AsppConfig, BackboneConfig, MacBlockConfig, TrainSettings)

_LIST_SEP = ","


@dataclass
class RunConfig:
    # geometry / architecture
    angular_res: int = 9
    mac_variant: str = "mac9x9"
    in_channels: int = 3
    channels: tuple = (8, 16, 32, 64, 64)
    conv_counts: tuple = (2, 2, 3, 3, 3)
    pool_strides: tuple = (2, 2, 2, 1, 1)
    block5_dilation: int = 2
    dropout: tuple = (0.1, 0.1, 0.2, 0.2, 0.3, 0.5)
    aspp_rates: tuple = (1, 2, 3, 4)
    aspp_channels: int = 64
    mac3x3_mid_channels: int = 0          # 0 = same as first backbone width
    star_channels: int = 0                # 0 = same as first backbone width
    star_rates: tuple = (1, 2, 3, 4)
    # optimization
    base_lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    max_iter: int = 160_000
    poly_power: float = 0.9
    checkpoint_interval: int = 1000
    precision: str = "float32"
    seed: int = 0
    # preprocessing
    input_mean: tuple = (0.5, 0.5, 0.5)
    fold_index: int = -1
    fold_count: int = 5
    # augmentation
    rotations: tuple = ROTATIONS
    flips: tuple = FLIPS
    crop_count: int = 2
    crop_fraction_x: float = 0.724
    crop_fraction_y: float = 0.861
    brightness_factors: tuple = (1.5, 0.6)
    chroma_contrast_factor: float = 1.7   # 0 disables the chroma/contrast variant
    noise_variance: float = 0.01
    expected_variants: int = 48

    # ------------------------------------------------------------ builders

    def mac_config(self) -> MacBlockConfig:
        first = self.channels[0]
        return MacBlockConfig(
            variant=self.mac_variant,
            angular_res=self.angular_res,
            in_channels=self.in_channels,
            out_channels=first,
            mid_channels=self.mac3x3_mid_channels or first,
            branch_channels=self.star_channels or first,
            star_rates=self.star_rates,
        )

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(self.conv_counts, self.channels, self.pool_strides,
                              self.block5_dilation, self.dropout)

    def aspp_config(self) -> AsppConfig:
        return AsppConfig(self.aspp_rates, self.aspp_channels)

    def train_settings(self) -> TrainSettings:
        return TrainSettings(self.base_lr, self.momentum, self.weight_decay,
                             self.max_iter, self.poly_power)

    def augmentation_spec(self, width: int, height: int) -> AugmentationSpec:
        a = self.angular_res
        cw = max(round(self.crop_fraction_x * (width // a)), 1) * a
        ch = max(round(self.crop_fraction_y * (height // a)), 1) * a
        return AugmentationSpec(
            rotations=self.rotations,
            flips=self.flips,
            crop_size=(cw, ch) if self.crop_count else None,
            crop_count=self.crop_count,
            brightness_factors=self.brightness_factors,
            chroma_contrast_factor=self.chroma_contrast_factor or None,
            noise_variance=self.noise_variance,
            expected_count=self.expected_variants,
        )

    def validate(self) -> "RunConfig":
        self.mac_config().validate()
        self.backbone_config().validate()
        self.aspp_config().validate()
        if self.precision not in ("float32", "float64"):
            raise ConfigurationError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.max_iter <= 0:
            raise ConfigurationError("max_iter must be positive")
        if self.base_lr < 0:
            raise ConfigurationError("base_lr must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must be in [0, 1)")
        if self.checkpoint_interval <= 0:
            raise ConfigurationError("checkpoint_interval must be positive")
        if len(self.input_mean) != self.in_channels:
            raise ConfigurationError("input_mean length must match in_channels")
        return self

    # --------------------------------------------------------------- text

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                text = _LIST_SEP.join(x if isinstance(x, str) else repr(x) for x in v)
            else:
                text = repr(v) if not isinstance(v, str) else v
            lines.append(f"{f.name}={text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"config line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
            kwargs[key] = _parse_value(known[key], value)
        return cls(**kwargs).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"missing config file {path}")
        return cls.from_text(path.read_text())

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_text())


def _parse_scalar(default_elem, token: str):
    token = token.strip()
    if isinstance(default_elem, bool):
        return token.lower() in ("1", "true", "yes")
    if isinstance(default_elem, int):
        return int(token)
    if isinstance(default_elem, float):
        return float(token)
    return token


def _parse_value(field_info, value: str):
    default = field_info.default
    if isinstance(default, tuple):
        elem = default[0] if default else 0
        if value == "":
            return ()
        return tuple(_parse_scalar(elem, tok) for tok in value.split(_LIST_SEP))
    return _parse_scalar(default, value)


# ---------------------------------------------------------------- manifest

@dataclass
class Manifest:
    angular_res: int
    entries: list          # [(array_path, mask_path)] as absolute Paths

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"missing manifest file {path}")
        base = path.parent
        a = None
        entries = []
        for lineno, raw in enumerate(path.read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("A="):
                a = int(line[2:])
                continue
            if "," not in line:
                raise DataError(f"manifest line {lineno}: expected array,mask paths")
            arr_rel, mask_rel = (s.strip() for s in line.split(",", 1))
            entries.append(((base / arr_rel).resolve(), (base / mask_rel).resolve()))
        if a is None:
            raise DataError(f"manifest {path} is missing the A=<int> header")
        for arr_p, mask_p in entries:
            if not arr_p.is_file():
                raise DataError(f"missing array file {arr_p}")
            if not mask_p.is_file():
                raise DataError(f"missing mask file {mask_p}")
        return cls(a, entries)

    @staticmethod
    def write(path, angular_res: int, entries) -> None:
        """entries are (array_path, mask_path) pairs; stored relative to the manifest."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        base = path.parent.resolve()
        lines = [f"A={angular_res}"]
        for arr_p, mask_p in entries:
            ar = _relative_to(Path(arr_p).resolve(), base)
            mr = _relative_to(Path(mask_p).resolve(), base)
            lines.append(f"{ar},{mr}")
        path.write_text("\n".join(lines) + "\n")


def _relative_to(target: Path, base: Path) -> str:
    try:
        return target.relative_to(base).as_posix()
    except ValueError:
        import os
        return Path(os.path.relpath(target, base)).as_posix()

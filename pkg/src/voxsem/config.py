"""Architecture and training configuration, plus the symbolic shape planner.

``validate_config`` walks every layer of every network with pure integer
arithmetic and returns the full shape plan, so configuration mistakes
surface before any array is allocated. The canonical text form is a
fixed-order ``key = value`` listing that round-trips exactly; unknown
keys are errors, not warnings.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigError

AXIS_NAMES = ("x", "y", "z")


@dataclass(frozen=True)
class ArchConfig:
    """Shared shape contract for all five networks.

    ``image_shape`` is (horizontal, vertical) and ``volume_shape`` is
    (x, y, z) with y vertical and z pointing away from the camera, so
    image axis 0 lines up with volume axis x and image axis 1 with y.
    Width tuples left empty are derived; see the accessors below.
    """

    image_shape: tuple[int, int] = (320, 240)
    pool_pairs: int = 6
    latent_shape: tuple[int, int, int, int] = (5, 3, 5, 16)
    upsample_layers: int = 4
    volume_shape: tuple[int, int, int] = (80, 48, 80)
    num_categories: int = 12
    image_widths: tuple[int, ...] = ()
    volume_widths: tuple[int, ...] = ()
    generator_widths: tuple[int, ...] = ()
    dense_widths: tuple[int, ...] = (256, 128)
    leaky_slope: float = 0.2

    @property
    def latent_size(self) -> int:
        d, h, w, c = self.latent_shape
        return d * h * w * c

    def image_encoder_widths(self) -> tuple[int, ...]:
        """Per-stage channel widths of the image encoder.

        The last stage is pinned to latent width x channels so the
        encoder output reshapes into the latent block without remainder.
        """
        _, _, w, c = self.latent_shape
        if self.image_widths:
            return self.image_widths
        trunk = tuple(min(8 << i, 64) for i in range(self.pool_pairs - 1))
        return trunk + (w * c,)

    def volume_trunk_widths(self) -> tuple[int, ...]:
        if self.volume_widths:
            return self.volume_widths
        return tuple(min(16 << i, 64) for i in range(self.upsample_layers - 1))

    def vae_encoder_widths(self) -> tuple[int, ...]:
        return self.volume_trunk_widths() + (2 * self.latent_shape[3],)

    def volume_disc_widths(self) -> tuple[int, ...]:
        return self.volume_trunk_widths() + (self.latent_shape[3],)

    def generator_stage_widths(self) -> tuple[int, ...]:
        if self.generator_widths:
            return self.generator_widths + (self.num_categories,)
        c = self.latent_shape[3]
        trunk = tuple(
            max(4 * c >> i, self.num_categories) for i in range(self.upsample_layers - 1)
        )
        return trunk + (self.num_categories,)


@dataclass(frozen=True)
class HyperParams:
    """Training constants. ``positive_weight`` trades missed occupied
    voxels against spurious ones in the voxel cross entropy."""

    positive_weight: float = 0.85
    learning_rate: float = 1e-4
    batch_size: int = 8
    kl_weight: float = 1.0
    gate_threshold: float = 0.15
    gate_on: str = "error"  # compare the threshold against "error" or "accuracy"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 200
    seed: int = 0
    reduction: str = "sum"
    vae_weight: float = 1.0
    adversarial_volume_weight: float = 1.0
    adversarial_latent_weight: float = 1.0
    dtype: str = "float64"

    def validate(self) -> None:
        if not 0.0 < self.positive_weight < 1.0:
            raise ConfigError(f"positive_weight must lie in (0, 1), got {self.positive_weight}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.steps < 0:
            raise ConfigError("steps must be non-negative")
        if self.gate_threshold < 0:
            raise ConfigError("gate_threshold must be non-negative")
        if self.gate_on not in ("error", "accuracy"):
            raise ConfigError(f"gate_on must be 'error' or 'accuracy', got {self.gate_on!r}")
        if self.reduction not in ("sum", "mean"):
            raise ConfigError(f"reduction must be 'sum' or 'mean', got {self.reduction!r}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be 'float64' or 'float32', got {self.dtype!r}")
        for name in ("kl_weight", "vae_weight", "adversarial_volume_weight",
                     "adversarial_latent_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0.0 < self.adam_beta1 < 1.0 or not 0.0 < self.adam_beta2 < 1.0:
            raise ConfigError("Adam betas must lie in (0, 1)")


@dataclass(frozen=True)
class ShapePlan:
    """Per-network layer listings of (label, shape)."""

    image_encoder: tuple[tuple[str, tuple[int, ...]], ...]
    vae_encoder: tuple[tuple[str, tuple[int, ...]], ...]
    generator: tuple[tuple[str, tuple[int, ...]], ...]
    volume_disc: tuple[tuple[str, tuple[int, ...]], ...]
    latent_disc: tuple[tuple[str, tuple[int, ...]], ...]

    def describe(self) -> str:
        lines = []
        for name in ("image_encoder", "vae_encoder", "generator", "volume_disc", "latent_disc"):
            lines.append(f"[{name}]")
            for label, shape in getattr(self, name):
                lines.append(f"  {label}: {'x'.join(str(s) for s in shape)}")
        return "\n".join(lines)


def validate_config(cfg: ArchConfig) -> ShapePlan:
    """Walk every layer symbolically; raise ConfigError naming the first
    layer and axis where the arithmetic stops working out."""
    d, h, w, c = cfg.latent_shape
    if min(cfg.latent_shape) < 1:
        raise ConfigError(f"latent shape must be positive, got {cfg.latent_shape}")
    if min(cfg.volume_shape) < 1 or min(cfg.image_shape) < 1:
        raise ConfigError("image and volume extents must be positive")
    if cfg.num_categories < 2:
        raise ConfigError(f"need at least 2 categories, got {cfg.num_categories}")
    if cfg.pool_pairs < 1 or cfg.upsample_layers < 1:
        raise ConfigError("pool_pairs and upsample_layers must be at least 1")
    if len(cfg.dense_widths) < 1:
        raise ConfigError("dense_widths must name at least one trunk layer")

    widths = cfg.image_encoder_widths()
    if len(widths) != cfg.pool_pairs:
        raise ConfigError(
            f"image_widths has {len(widths)} entries but pool_pairs is {cfg.pool_pairs}"
        )

    # image encoder: conv keeps extents, pooling floor-halves them
    ix, iy = cfg.image_shape
    plan_img: list[tuple[str, tuple[int, ...]]] = [("input", (ix, iy, 2))]
    cur = (ix, iy)
    for i, width in enumerate(widths):
        if cur[0] < 2 or cur[1] < 2:
            raise ConfigError(
                f"image encoder stage {i} cannot pool a {cur[0]}x{cur[1]} map; "
                "too many pool_pairs for this image size"
            )
        cur = (cur[0] // 2, cur[1] // 2)
        plan_img.append((f"conv_pool_{i}", (cur[0], cur[1], width)))
    if cur != (d, h):
        raise ConfigError(
            f"image encoder ends at {cur[0]}x{cur[1]} but the latent block "
            f"needs {d}x{h}; adjust pool_pairs or image_shape"
        )
    if widths[-1] != w * c:
        raise ConfigError(
            f"image encoder ends with {widths[-1]} channels which cannot split "
            f"into latent {w}x{c}"
        )
    plan_img.append(("latent", (d, h, w, c)))

    # generator: each stage doubles every spatial axis
    gen_widths = cfg.generator_stage_widths()
    if len(gen_widths) != cfg.upsample_layers:
        raise ConfigError(
            f"generator_widths implies {len(gen_widths)} stages but "
            f"upsample_layers is {cfg.upsample_layers}"
        )
    if gen_widths[-1] != cfg.num_categories:
        raise ConfigError(
            f"generator must end with {cfg.num_categories} channels, got {gen_widths[-1]}"
        )
    plan_gen: list[tuple[str, tuple[int, ...]]] = [("latent", (d, h, w, c))]
    spatial = [d, h, w]
    for i, width in enumerate(gen_widths):
        spatial = [2 * s for s in spatial]
        plan_gen.append((f"upsample_{i}", (*spatial, width)))
    for axis, (got, want) in enumerate(zip(spatial, cfg.volume_shape)):
        if got != want:
            raise ConfigError(
                f"volume {AXIS_NAMES[axis]} axis: latent {cfg.latent_shape[axis]} doubled "
                f"{cfg.upsample_layers} times gives {got}, but volume_shape says {want}"
            )

    # vae encoder: stride-2 convolutions, extents round up
    vae_widths = cfg.vae_encoder_widths()
    if len(vae_widths) != cfg.upsample_layers:
        raise ConfigError(
            f"volume_widths implies {len(vae_widths)} encoder stages but "
            f"upsample_layers is {cfg.upsample_layers}"
        )
    plan_vae: list[tuple[str, tuple[int, ...]]] = [
        ("input", (*cfg.volume_shape, cfg.num_categories))
    ]
    spatial = list(cfg.volume_shape)
    for i, width in enumerate(vae_widths):
        spatial = [-(-s // 2) for s in spatial]
        plan_vae.append((f"conv_{i}", (*spatial, width)))
    if tuple(spatial) != (d, h, w):
        raise ConfigError(
            f"volume encoder ends at {'x'.join(map(str, spatial))} but the "
            f"latent block needs {d}x{h}x{w}"
        )
    plan_vae.append(("mean_and_log_variance", (d, h, w, 2 * c)))

    # volume discriminator: same trunk, then the dense head
    disc_widths = cfg.volume_disc_widths()
    plan_dvox: list[tuple[str, tuple[int, ...]]] = [
        ("input", (*cfg.volume_shape, cfg.num_categories))
    ]
    spatial = list(cfg.volume_shape)
    for i, width in enumerate(disc_widths):
        spatial = [-(-s // 2) for s in spatial]
        plan_dvox.append((f"conv_{i}", (*spatial, width)))
    flat = spatial[0] * spatial[1] * spatial[2] * disc_widths[-1]
    plan_dvox.append(("flatten", (flat,)))
    for i, width in enumerate(cfg.dense_widths):
        plan_dvox.append((f"dense_{i}", (width,)))
    plan_dvox.append(("score", (1,)))

    plan_dlat: list[tuple[str, tuple[int, ...]]] = [("latent", (d, h, w, c))]
    plan_dlat.append(("flatten", (cfg.latent_size,)))
    for i, width in enumerate(cfg.dense_widths):
        plan_dlat.append((f"dense_{i}", (width,)))
    plan_dlat.append(("score", (1,)))

    return ShapePlan(
        image_encoder=tuple(plan_img),
        vae_encoder=tuple(plan_vae),
        generator=tuple(plan_gen),
        volume_disc=tuple(plan_dvox),
        latent_disc=tuple(plan_dlat),
    )


def full_scale() -> ArchConfig:
    """The full-resolution configuration: 320x240 depth in, 80x48x80 out."""
    return ArchConfig()


def desk_scale() -> ArchConfig:
    """Small enough to train in seconds on a CPU, same topology.

    The latent keeps the full-scale channel count and shrinks only
    spatially, which leaves enough capacity to memorize single scenes."""
    return ArchConfig(
        image_shape=(80, 60),
        pool_pairs=4,
        latent_shape=(5, 3, 5, 16),
        upsample_layers=2,
        volume_shape=(20, 12, 20),
    )


def tiny_scale() -> ArchConfig:
    """Smallest config that still exercises every code path."""
    return ArchConfig(
        image_shape=(40, 30),
        pool_pairs=3,
        latent_shape=(5, 3, 5, 4),
        upsample_layers=1,
        volume_shape=(10, 6, 10),
        dense_widths=(32, 16),
    )


def micro_scale() -> ArchConfig:
    """Gradient-check scale: every extent at most 8."""
    return ArchConfig(
        image_shape=(8, 8),
        pool_pairs=1,
        latent_shape=(4, 4, 4, 2),
        upsample_layers=1,
        volume_shape=(8, 8, 8),
        num_categories=2,
        dense_widths=(16, 8),
    )


PRESETS = {
    "full": full_scale,
    "desk": desk_scale,
    "tiny": tiny_scale,
    "micro": micro_scale,
}


def resolve_preset(name_or_config) -> ArchConfig:
    if isinstance(name_or_config, ArchConfig):
        return name_or_config
    try:
        return PRESETS[name_or_config]()
    except KeyError:
        raise ConfigError(
            f"unknown preset {name_or_config!r}; pick one of {sorted(PRESETS)} "
            "or pass an ArchConfig"
        ) from None


# --- canonical key = value text ---------------------------------------


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float, str)):
        return str(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    raise ConfigError(f"cannot serialize config value {value!r}")


def _parse_like(raw: str, template):
    raw = raw.strip()
    if isinstance(template, bool):
        if raw not in ("true", "false"):
            raise ConfigError(f"expected true/false, got {raw!r}")
        return raw == "true"
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    if isinstance(template, str):
        return raw
    if isinstance(template, tuple):
        if raw == "":
            return ()
        return tuple(int(part) for part in raw.split(","))
    raise ConfigError(f"cannot parse config value for template {template!r}")


def config_to_text(obj, prefix: str = "") -> str:
    """Every field, declaration order, one ``key = value`` line each."""
    lines = []
    for f in fields(obj):
        lines.append(f"{prefix}{f.name} = {_format_value(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config_lines(text: str) -> dict[str, str]:
    """Split canonical text into a key -> raw-value map."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = raw.strip()
    return out


def config_from_mapping(cls, mapping: dict[str, str], prefix: str = ""):
    """Build a dataclass from raw values; reject unknown prefixed keys."""
    defaults = cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, raw in mapping.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix):]
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kwargs[name] = _parse_like(raw, getattr(defaults, name))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return dataclasses.replace(defaults, **kwargs)


def config_from_text(cls, text: str):
    return config_from_mapping(cls, parse_config_lines(text))

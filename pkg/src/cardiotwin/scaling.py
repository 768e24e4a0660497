"""Compound scaling of the classifier family.

One knob, phi, widens/deepens the network and grows its input resolution
together rather than tuning the three axes independently:

    depth(stage)  = ceil(repeats * alpha**phi)
    width(stage)  = max(4, 4 * round(width * beta**phi / 4))
    resolution    = round(base_resolution * gamma**phi), bumped to even

The product alpha * beta^2 * gamma^2 approximates the per-phi cost growth
of the family; configurations whose product leaves [1.8, 2.2] still
resolve, but a warning is emitted because cost no longer roughly doubles
per step.

This module is pure bookkeeping: it turns a base description into the
resolved architecture and prices it in multiply-accumulates (MACs) and
parameters. The network itself lives elsewhere and recounts both numbers
from its actual tensors, which gives an independent cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import ConfigError


class ScalingConstraintWarning(UserWarning):
    """Cost-growth product of the scaling coefficients left its band."""


CONSTRAINT_BAND = (1.8, 2.2)


@dataclass(frozen=True)
class ScalingCoeffs:
    """Per-axis growth rates applied as coeff**phi."""

    alpha: float = 1.2  # depth
    beta: float = 1.1  # width
    gamma: float = 1.15  # resolution

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 1.0:
            raise ConfigError(f"scaling coefficients must be >= 1, got {self}")

    def constraint(self) -> float:
        return self.alpha * self.beta**2 * self.gamma**2


@dataclass(frozen=True)
class StageSpec:
    """Base description of one stage: kernel size, output width, block count."""

    kernel: int = 3
    width: int = 16
    repeats: int = 3

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd and positive, got {self.kernel}")
        if self.width < 4 or self.width % 4 != 0:
            raise ConfigError(
                f"base width must be a positive multiple of 4, got {self.width}"
            )
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")


@dataclass(frozen=True)
class ScalingConfig:
    """Base architecture plus the knob; resolve() gives the concrete family member."""

    phi: float = 0.0
    coeffs: ScalingCoeffs = ScalingCoeffs()
    base_resolution: int = 24
    stages: tuple[StageSpec, ...] = (StageSpec(3, 16, 3), StageSpec(3, 32, 3))
    in_channels: int = 4
    n_classes: int = 2

    def __post_init__(self):
        if not math.isfinite(self.phi) or self.phi < 0:
            raise ConfigError(f"phi must be finite and >= 0, got {self.phi}")
        if self.base_resolution < 8 or self.base_resolution % 2 != 0:
            raise ConfigError(
                f"base_resolution must be an even number >= 8, got {self.base_resolution}"
            )
        if not self.stages:
            raise ConfigError("at least one stage is required")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be >= 2, got {self.n_classes}")

    def resolve(self) -> "ResolvedArch":
        c = self.coeffs
        product = c.constraint()
        lo, hi = CONSTRAINT_BAND
        if not lo <= product <= hi:
            warnings.warn(
                f"coefficient product alpha*beta^2*gamma^2 = {product:.4f} "
                f"outside [{lo}, {hi}]; cost no longer roughly doubles per phi",
                ScalingConstraintWarning,
                stacklevel=2,
            )
        depth_mult = c.alpha**self.phi
        width_mult = c.beta**self.phi
        resolution = round(self.base_resolution * c.gamma**self.phi)
        if resolution % 2 != 0:
            resolution += 1
        stages = tuple(
            ResolvedStage(
                kernel=s.kernel,
                width=max(4, 4 * round(s.width * width_mult / 4)),
                repeats=math.ceil(s.repeats * depth_mult),
            )
            for s in self.stages
        )
        return ResolvedArch(
            phi=self.phi,
            resolution=resolution,
            in_channels=self.in_channels,
            stages=stages,
            n_classes=self.n_classes,
            constraint=product,
        )

    def to_json(self) -> dict:
        return {
            "phi": self.phi,
            "alpha": self.coeffs.alpha,
            "beta": self.coeffs.beta,
            "gamma": self.coeffs.gamma,
            "base_resolution": self.base_resolution,
            "stages": [[s.kernel, s.width, s.repeats] for s in self.stages],
            "in_channels": self.in_channels,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScalingConfig":
        try:
            return cls(
                phi=float(doc["phi"]),
                coeffs=ScalingCoeffs(
                    float(doc["alpha"]), float(doc["beta"]), float(doc["gamma"])
                ),
                base_resolution=int(doc["base_resolution"]),
                stages=tuple(StageSpec(int(k), int(w), int(r)) for k, w, r in doc["stages"]),
                in_channels=int(doc["in_channels"]),
                n_classes=int(doc["n_classes"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scaling config document: {exc}") from None


def compound_scale(
    phi: float,
    coeffs: ScalingCoeffs = ScalingCoeffs(),
    stages: tuple[StageSpec, ...] = (StageSpec(3, 16, 3), StageSpec(3, 32, 3)),
    base_resolution: int = 24,
    in_channels: int = 4,
    n_classes: int = 2,
) -> "ResolvedArch":
    """Resolve one family member directly from the knob and the base."""
    return ScalingConfig(
        phi=phi,
        coeffs=coeffs,
        base_resolution=base_resolution,
        stages=stages,
        in_channels=in_channels,
        n_classes=n_classes,
    ).resolve()


@dataclass(frozen=True)
class ResolvedStage:
    kernel: int
    width: int
    repeats: int


@dataclass(frozen=True)
class ResolvedArch:
    """Concrete family member; every number the builder needs."""

    phi: int
    resolution: int
    in_channels: int
    stages: tuple[ResolvedStage, ...]
    n_classes: int
    constraint: float

    def spatial_after_stem(self) -> int:
        # Stem convolution has stride 2 with 'same' padding.
        return -(-self.resolution // 2)


def count_macs(arch: ResolvedArch) -> int:
    """Analytic multiply-accumulate count of the resolved architecture.

    Counts kernel multiplies of the stem convolution, each depthwise and
    pointwise convolution, and the linear head; activations and pooling are
    free. Must agree with the recount the built network performs on its own
    layer shapes.
    """
    side = arch.spatial_after_stem()
    px = side * side
    first_width = arch.stages[0].width
    macs = px * 3 * 3 * arch.in_channels * first_width
    cin = first_width
    for stage in arch.stages:
        for _ in range(stage.repeats):
            macs += px * stage.kernel * stage.kernel * cin  # depthwise
            macs += px * cin * stage.width  # pointwise
            cin = stage.width
    macs += cin * arch.n_classes
    return macs


def count_params(arch: ResolvedArch) -> int:
    """Analytic weight-plus-bias count, mirroring the builder layer by layer."""
    first_width = arch.stages[0].width
    params = 3 * 3 * arch.in_channels * first_width + first_width
    cin = first_width
    for stage in arch.stages:
        for _ in range(stage.repeats):
            params += stage.kernel * stage.kernel * cin + cin
            params += cin * stage.width + stage.width
            cin = stage.width
    params += cin * arch.n_classes + arch.n_classes
    return params

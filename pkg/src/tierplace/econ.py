"""TCO economics of placing a temporary file on HDD or SSD."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from enum import Enum

from .trace_model import TempFileRecord, avg_iops, io_density


class Tier(str, Enum):
    SSD = "SSD"
    HDD = "HDD"


@dataclass(frozen=True)
class CostModel:
    """Device economics.

    One HDD (``hdd_capacity_tb`` of space, ``hdd_iops_cap`` ops/s) costs
    ``tco_hdd``; one TB of SSD costs ``tco_ssd_per_tb``. A valid model never
    makes HDD bytes dearer than SSD bytes, which is what makes the density
    threshold and the direct cost comparison agree.
    """

    hdd_iops_cap: float = 150.0
    hdd_capacity_tb: float = 10.0
    tco_hdd: float = 1.0
    tco_ssd_per_tb: float = 1.0

    def __post_init__(self):
        for name in ("hdd_iops_cap", "hdd_capacity_tb", "tco_hdd", "tco_ssd_per_tb"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and v != float("inf")):
                raise ValueError(f"CostModel.{name} must be a finite positive number, got {v!r}")
        if self.per_byte_cost_ratio < 1.0:
            raise ValueError(
                "CostModel: SSD cost per byte must be >= HDD cost per byte "
                f"(ratio {self.per_byte_cost_ratio:g})"
            )

    @property
    def per_byte_cost_ratio(self) -> float:
        """SSD cost per TB over HDD cost per TB (10 at defaults)."""
        return self.tco_ssd_per_tb / (self.tco_hdd / self.hdd_capacity_tb)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "CostModel":
        unknown = set(obj) - {"hdd_iops_cap", "hdd_capacity_tb", "tco_hdd", "tco_ssd_per_tb"}
        if unknown:
            raise ValueError(f"CostModel: unknown field(s) {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in obj.items()})


def load_cost_model(path: str | os.PathLike | None) -> CostModel:
    if path is None:
        return CostModel()
    with open(path, encoding="utf-8") as fh:
        return CostModel.from_dict(json.load(fh))


def crossover_density(model: CostModel) -> float:
    """IOPS/TB at which HDD and SSD placement cost the same."""
    return model.hdd_iops_cap * model.tco_ssd_per_tb / model.tco_hdd


def hdd_cost(size_tb: float, iops: float, model: CostModel) -> float:
    # fractional drives: the file shares drives with others
    return model.tco_hdd * max(size_tb / model.hdd_capacity_tb, iops / model.hdd_iops_cap)


def ssd_cost(size_tb: float, model: CostModel) -> float:
    return model.tco_ssd_per_tb * size_tb


def cost_on_hdd(file: TempFileRecord, model: CostModel) -> float:
    return hdd_cost(file.size_tb, avg_iops(file), model)


def cost_on_ssd(file: TempFileRecord, model: CostModel) -> float:
    return ssd_cost(file.size_tb, model)


def threshold_tier(density: float, model: CostModel) -> Tier:
    # strict: a tie keeps the file on the cheaper-to-provision medium
    return Tier.SSD if density > crossover_density(model) else Tier.HDD


def oracle_tier(file: TempFileRecord, model: CostModel) -> Tier:
    """Retrospective tier choice from the file's observed density."""
    return threshold_tier(io_density(file), model)

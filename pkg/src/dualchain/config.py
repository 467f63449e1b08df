"""Run configuration, loadable from TOML or JSON with flag overrides."""

from __future__ import annotations

import dataclasses
import enum
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from dualchain.committees import ConfigError, FaultScript, Timing
from dualchain.domain import MB, STORAGE_MARKET_SIDE_KINDS, DEFAULT_SIDE_KINDS, TxKind
from dualchain.workload import PaymentModality, TrafficMix


class Mode(enum.Enum):
    BASE = "base"
    CHAINBOOST = "chainboost"
    OPBOOST = "opboost"


SIDE_KIND_PRESETS = {
    "storage": STORAGE_MARKET_SIDE_KINDS,
    "all-market": DEFAULT_SIDE_KINDS,
}


@dataclass(frozen=True)
class RunConfig:
    mode: Mode = Mode.CHAINBOOST
    nodes: int = 200
    contracts: int = 16_000
    mc_block_bytes: int = MB
    sc_block_bytes: int = MB // 2
    sc_rounds_per_mc_round: int = 3
    epoch_len_mc_rounds: int = 10
    run_len_mc_rounds: int = 61
    cs: int = 17
    kappa: int = 1
    theta_s: Optional[int] = None
    sc_round_ticks: int = 100
    zeta: int = 25
    eta: int = 50
    delta: int = 5
    k_conf: int = 6
    modality: PaymentModality = PaymentModality.CONTRACT_END
    payment_fraction: float = 0.02
    mix_basis: str = "count"
    payment_quota: float = 0.30
    duration_mean: float = 40.0
    duration_sigma: float = 20.0
    fee_per_round: int = 1
    side_kinds: str = "storage"
    p_lazy: float = 0.0
    p_malicious: float = 0.0
    lazy_mode: str = "absent"
    malicious_mode: str = "absent"
    missing_proof_rate: float = 0.0
    real_por_contracts: int = 0
    opboost_batch_bytes: int = int(1.5 * MB)
    opboost_batch_delay: int = 3
    opboost_contestation: int = 50_400
    fault_script: FaultScript = field(default_factory=FaultScript)
    max_drain_rounds: int = 5_000
    seed: int = 1

    @property
    def timing(self) -> Timing:
        return Timing(self.sc_round_ticks, self.zeta, self.eta, self.delta)

    @property
    def mix(self) -> TrafficMix:
        return TrafficMix.with_payment_fraction(self.payment_fraction, self.mix_basis)

    @property
    def side_kind_set(self) -> frozenset[TxKind]:
        return SIDE_KIND_PRESETS[self.side_kinds]

    @property
    def sc_rounds_per_epoch(self) -> int:
        return self.sc_rounds_per_mc_round * self.epoch_len_mc_rounds

    def validate(self) -> None:
        self.timing.validate()
        if self.mode is Mode.CHAINBOOST and (self.kappa + 1) * self.cs > self.nodes:
            raise ConfigError("(kappa+1)*cs exceeds the node count")
        if self.side_kinds not in SIDE_KIND_PRESETS:
            raise ConfigError(f"unknown side-kind preset {self.side_kinds!r}")
        if self.sc_rounds_per_epoch < 2:
            raise ConfigError("an epoch needs at least one meta-block and a summary-block")
        TrafficMix.with_payment_fraction(self.payment_fraction, self.mix_basis)

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, FaultScript):
                v = [_entry_dict(e) for e in v.entries]
            out[f.name] = v
        return out


def _entry_dict(e) -> dict[str, Any]:
    d = dataclasses.asdict(e)
    d["trigger"] = e.trigger.value
    d["assignments"] = {str(k): v for k, v in e.assignments.items()}
    return d


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(RunConfig)}


def coerce(name: str, value: Any) -> Any:
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    default = getattr(RunConfig(), name)
    if name == "mode":
        return Mode(value)
    if name == "modality":
        return PaymentModality(value)
    if name == "fault_script":
        if isinstance(value, (str, Path)):
            return FaultScript.load(value)
        return FaultScript.from_list(value)
    if name == "theta_s":
        return None if value in (None, "", "none") else int(value)
    if isinstance(default, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(float(value)) if isinstance(value, str) and "e" in value.lower() else int(value)
    if isinstance(default, float):
        return float(value)
    return value


def from_mapping(data: Mapping[str, Any], base: Optional[RunConfig] = None) -> RunConfig:
    cfg = base or RunConfig()
    changes = {k.replace("-", "_"): coerce(k.replace("-", "_"), v) for k, v in data.items()}
    return dataclasses.replace(cfg, **changes)


def load_config(path: Optional[str | Path], overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    data: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if p.suffix == ".toml":
            data = tomllib.loads(p.read_text())
        else:
            data = json.loads(p.read_text())
        data = data.get("run", data)
    cfg = from_mapping(data)
    if overrides:
        cfg = from_mapping(overrides, cfg)
    cfg.validate()
    return cfg

"""Scenario configuration schema (version 1).

A config file is a JSON object. Unknown fields are rejected at every level.
Every field has a default, so ``{}`` is a valid config for an honest
YCSB-A simulation.
"""

import json
from typing import Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..actors import CLIENT_STRATEGIES, SERVER_STRATEGIES
from ..chainsim import ChainParams, GasPrices
from ..cost import OFF, ON, PlacementConfig

SCENARIOS = ("simulation", "worked-example", "worked-example-concurrent", "attack-matrix", "selective-omission",
             "fork-race", "chain-fork", "fee-priority", "crossover", "read-cost", "client-cost", "ads-freshness", "placement", "inactive-clients")


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GasModel(_Model):
    tx_base: int = 21000
    tx_byte: int = 16
    storage_word_write: int = 20000
    storage_word_read: int = 4
    hash_per_word: int = 120
    memory_word: int = 3

    def prices(self) -> GasPrices:
        return GasPrices(**self.model_dump())


class ChainModel(_Model):
    block_time: int = Field(15_000, gt=0)
    finality: int = Field(6, ge=1)
    validation_delay: int = Field(0, ge=0)
    block_capacity: int = Field(30_000_000, gt=0)
    max_txs_per_block: Optional[int] = Field(None, ge=1)
    min_fee: int = Field(1, ge=0)
    drop_window: int = Field(50, ge=0)
    gas: GasModel = GasModel()

    def params(self) -> ChainParams:
        return ChainParams(self.block_time, self.finality, self.validation_delay, self.block_capacity,
                           self.max_txs_per_block, self.min_fee, self.drop_window, self.gas.prices())


Where = Literal["onchain", "offchain"]


class PlacementModel(_Model):
    client_log: Where = "offchain"
    server_log: Where = "onchain"
    persistent_log: Where = "onchain"

    def placement(self) -> PlacementConfig:
        conv = {"onchain": ON, "offchain": OFF}
        return PlacementConfig(conv[self.client_log], conv[self.server_log], conv[self.persistent_log])


class WorkloadModel(_Model):
    kind: Literal["A", "B", "D", "custom"] = "A"
    read_fraction: Optional[float] = Field(None, ge=0.0, le=1.0)
    distribution: Optional[Literal["zipfian", "latest", "uniform"]] = None
    theta: float = Field(0.99, ge=0.0)
    latest_exponent: float = Field(2.0, gt=0.0)
    key_space: Optional[int] = Field(None, ge=1)
    ops_per_epoch: int = Field(140, ge=1)
    epochs: int = Field(81, ge=1)
    load_epochs: int = Field(10, ge=0)
    clients: int = Field(4, ge=1)
    inactive_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    trace: Optional[str] = None  # path of a recorded trace (JSON lines) to replay instead

    def spec(self):
        from .workload import WorkloadSpec
        d = self.model_dump()
        d.pop("trace")
        return WorkloadSpec(**d)


class AgentsModel(_Model):
    server_strategy: str = "Honest"
    client_strategies: Dict[int, str] = {}
    stale_probability: float = Field(0.0, ge=0.0, le=1.0)
    stale_mode: Literal["previous", "initial"] = "previous"
    edits: int = Field(1, ge=1)
    skew: int = 0
    fee: int = Field(10, ge=0)
    fee_ceiling: int = Field(1000, ge=0)
    server_fee: int = Field(1000, ge=0)
    batch_size: Optional[int] = Field(None, ge=1)

    @field_validator("server_strategy")
    @classmethod
    def _server(cls, v):
        if v not in SERVER_STRATEGIES:
            raise ValueError(f"unknown server strategy {v}")
        return v

    @field_validator("client_strategies")
    @classmethod
    def _clients(cls, v):
        for s in v.values():
            if s not in CLIENT_STRATEGIES:
                raise ValueError(f"unknown client strategy {s}")
        return v


class TogglesModel(_Model):
    lock: bool = True
    resubmission: bool = True
    double_signed: bool = True
    wait_for: Literal["active", "all"] = "active"


class ScenarioConfig(_Model):
    version: Literal[1] = 1
    scenario: Literal[SCENARIOS] = "simulation"
    seed: int = Field(0, ge=0, lt=2 ** 64)
    blocks_per_epoch: int = Field(1, ge=1)
    chain: ChainModel = ChainModel()
    placement: PlacementModel = PlacementModel()
    workload: WorkloadModel = WorkloadModel()
    agents: AgentsModel = AgentsModel()
    toggles: TogglesModel = TogglesModel()
    params: Dict[str, object] = {}  # extra knobs for scripted scenarios

    def with_seed(self, seed: Optional[int]) -> "ScenarioConfig":
        return self if seed is None else self.model_copy(update={"seed": seed})


class ConfigError(Exception):
    pass


def parse_config(data) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(str(e)) from None


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from None
    return parse_config(data)

"""Delay terms of the vehicular MEC system model.

All sizes are in bits internally; use :func:`mb_to_bits` at configuration
boundaries (1 MB = 8e6 bits).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidArgument

BITS_PER_MB = 8e6
MIN_LINK_DISTANCE = 1.0  # meters; keeps the inverse-square SNR finite


def mb_to_bits(mb):
    return mb * BITS_PER_MB


@dataclass(frozen=True)
class DelayParams:
    backhaul_rate: float = 5e8  # bit/s
    migration_coeff: float = 1.5  # s per hop
    transmission_coeff: float = 0.3  # s per hop
    noise: float = 1e-13  # W
    unit_gain: float = 1e-5
    bs_bandwidth: float = 20e6  # Hz
    server_capacity: float = 6e10  # cycles/s

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise InvalidArgument(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class TaskSpec:
    data_amount: float  # bits
    compute_density: float  # cycles/bit
    tx_power: float  # W

    def __post_init__(self):
        if not (self.data_amount > 0 and self.compute_density > 0 and self.tx_power > 0):
            raise InvalidArgument(f"task fields must be positive: {self}")


@dataclass(frozen=True)
class ServiceProfile:
    service_data: float  # bits

    def __post_init__(self):
        if not self.service_data > 0:
            raise InvalidArgument(f"service_data must be positive, got {self.service_data}")


@dataclass(frozen=True)
class DelayBreakdown:
    """Per-vehicle delay components for one slot.

    Fields may also hold equal-length arrays (one entry per vehicle); the
    environment uses that form.
    """

    migration: float
    access: float
    backhaul: float
    computation: float

    @property
    def communication(self):
        return self.access + self.backhaul

    @property
    def total(self):
        return self.migration + self.communication + self.computation

    def per_vehicle(self) -> list["DelayBreakdown"]:
        cols = np.broadcast_arrays(self.migration, self.access, self.backhaul, self.computation)
        return [DelayBreakdown(*(float(c[i]) for c in cols)) for i in range(cols[0].size)]


def migration_delay(service: ServiceProfile, hops: int, params: DelayParams) -> float:
    if hops < 0:
        raise InvalidArgument(f"hop count must be non-negative, got {hops}")
    if hops == 0:
        return 0.0
    return service.service_data / params.backhaul_rate + params.migration_coeff * hops


def snr(task: TaskSpec, distance: float, params: DelayParams) -> float:
    """Inverse-square SNR. Distances below 1 m are clamped to 1 m; negative ones are rejected."""
    if distance < 0 or math.isnan(distance):
        raise InvalidArgument(f"distance must be non-negative, got {distance}")
    d = max(distance, MIN_LINK_DISTANCE)
    return task.tx_power * params.unit_gain / (params.noise * d * d)


def access_delay(task: TaskSpec, bandwidth_share: float, snr_value: float) -> float:
    if not bandwidth_share > 0:
        raise InvalidArgument(f"bandwidth share must be positive, got {bandwidth_share}")
    if not snr_value > 0:
        raise InvalidArgument(f"snr must be positive, got {snr_value}")
    return task.data_amount / (bandwidth_share * math.log2(1.0 + snr_value))


def backhaul_delay(task: TaskSpec, hops: int, params: DelayParams) -> float:
    if hops < 0:
        raise InvalidArgument(f"hop count must be non-negative, got {hops}")
    if hops == 0:
        return 0.0
    return task.data_amount / params.backhaul_rate + params.transmission_coeff * hops


def required_cycles(task: TaskSpec) -> float:
    return task.data_amount * task.compute_density


def computation_delay(cycles: float, proportion: float, params: DelayParams) -> float:
    if not proportion > 0:
        raise InvalidArgument(f"resource proportion must be positive, got {proportion}")
    if proportion > 1 + 1e-12:
        raise InvalidArgument(f"resource proportion cannot exceed 1, got {proportion}")
    if cycles < 0:
        raise InvalidArgument(f"cycles must be non-negative, got {cycles}")
    return cycles / (proportion * params.server_capacity)


def slot_total(breakdowns: Iterable[DelayBreakdown]) -> float:
    return float(sum(float(np.sum(b.total)) for b in breakdowns))


# Vectorized forms used by the environment. They mirror the scalar functions
# above term by term; tests pin the two against each other.

def migration_delays(service_bits, hops, params: DelayParams) -> np.ndarray:
    hops = np.asarray(hops)
    val = service_bits / params.backhaul_rate + params.migration_coeff * hops
    return np.where(hops == 0, 0.0, val)


def backhaul_delays(data_bits, hops, params: DelayParams) -> np.ndarray:
    hops = np.asarray(hops)
    val = data_bits / params.backhaul_rate + params.transmission_coeff * hops
    return np.where(hops == 0, 0.0, val)


def snrs(power, distance, params: DelayParams) -> np.ndarray:
    d = np.maximum(distance, MIN_LINK_DISTANCE)
    return power * params.unit_gain / (params.noise * d * d)


def access_delays(data_bits, bandwidth_share, snr_values) -> np.ndarray:
    return data_bits / (bandwidth_share * np.log2(1.0 + snr_values))

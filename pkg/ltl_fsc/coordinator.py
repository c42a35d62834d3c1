"""Coordinators running one synthesis per Rabin pair"""
from __future__ import annotations

import asyncio
from dataclasses import replace
import logging

from .bpi import BpiConfig, BpiReport, find_initial_controller, run_bpi
from .controller import Sfsc
from .exceptions import SynthesisError, SynthesisFailed
from .product import ProductPomdp, select_pair

_LOGGER = logging.getLogger(__name__)


class SynthesisManager:
    """Manages all coordinators of a product (one per Rabin pair)"""

    product: ProductPomdp
    config: BpiConfig
    coordinators: dict[int, SynthesisCoordinator]

    def __init__(
        self,
        product: ProductPomdp,
        config: BpiConfig,
        n_transient: int = 1,
        n_steady: int = 1,
        seed: Sfsc | None = None,
    ) -> None:
        self.product = product
        self.config = config
        self._sizes = (n_transient, n_steady)
        self._seed = seed
        self.coordinators = dict()

    def get_coordinator(self, index: int) -> SynthesisCoordinator:
        """Get a unique coordinator for a Rabin pair"""
        if index not in self.coordinators:
            self.coordinators[index] = SynthesisCoordinator(
                select_pair(self.product, index),
                replace(self.config, rabin_index=index),
                *self._sizes,
                seed=self._seed,
            )
        return self.coordinators[index]

    async def async_synthesize(self) -> SynthesisCoordinator:
        """Synthesize for every pair and return the best coordinator"""
        coordinators = [
            self.get_coordinator(index) for index in range(self.product.n_pairs)
        ]
        await asyncio.gather(
            *(coordinator.async_refresh() for coordinator in coordinators)
        )
        finished = [c for c in coordinators if c.data is not None]
        if not finished:
            raise SynthesisFailed(
                f"Synthesis failed for all {len(coordinators)} Rabin pairs"
            )
        best = max(
            finished,
            key=lambda c: (
                c.data.satisfaction_probability,
                c.data.records[-1].value,
                -c.index,
            ),
        )
        _LOGGER.info(
            "Selected Rabin pair %s with satisfaction probability %.6g",
            best.index,
            best.data.satisfaction_probability,
        )
        return best


class SynthesisCoordinator:
    """Seeds and runs bounded policy iteration for one Rabin pair"""

    product: ProductPomdp
    config: BpiConfig
    data: BpiReport | None = None
    last_exception: Exception | None = None

    def __init__(
        self,
        product: ProductPomdp,
        config: BpiConfig,
        n_transient: int = 1,
        n_steady: int = 1,
        seed: Sfsc | None = None,
    ) -> None:
        self.product = product
        self.config = config
        self.n_transient = n_transient
        self.n_steady = n_steady
        self.seed = seed
        _LOGGER.debug("Creating new coordinator for pair %s", self.index)

    @property
    def index(self) -> int:
        return self.product.rabin_index

    def synthesize(self) -> BpiReport:
        """Blocking synthesis, run on an executor"""
        seed = self.seed
        if seed is None:
            seed = find_initial_controller(
                self.product, self.n_transient, self.n_steady, self.config
            )
        return run_bpi(self.product, seed, self.config)

    async def async_refresh(self) -> None:
        """Run the synthesis and keep the last error instead of raising"""
        loop = asyncio.get_running_loop()
        try:
            self.data = await loop.run_in_executor(None, self.synthesize)
            self.last_exception = None
        except SynthesisError as err:
            self.last_exception = SynthesisFailed(
                f"Error synthesizing pair {self.index}: {err}"
            )
            self.last_exception.__cause__ = err
            _LOGGER.error("%s", self.last_exception)

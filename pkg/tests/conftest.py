import numpy as np
import pytest

from hlsdse.designspace import DesignSpace, PragmaDirective
from hlsdse.oracle import OracleKernelModel, OracleLoop


@pytest.fixture
def toy_model() -> OracleKernelModel:
    return OracleKernelModel(
        kernel_id="toy",
        loops=(OracleLoop("L0", 32, {"load": 2, "add": 1, "mul": 1, "store": 1}),
               OracleLoop("L1", 16, {"add": 2, "mul": 1}, parent="L0")),
        base={"lut": 200, "dsp": 4, "ff": 150, "bram": 8},
        capacities={"lut": 5000, "dsp": 64, "ff": 4000, "bram": 64},
    )


@pytest.fixture
def toy_space() -> DesignSpace:
    return DesignSpace((
        PragmaDirective("unroll@L0", "unroll", "L0", (1, 2, 4, 8)),
        PragmaDirective("pipe@L0", "pipeline", "L0", ("off", "on", "flatten")),
        PragmaDirective("unroll@L1", "unroll", "L1", (1, 2, 4)),
        PragmaDirective("part@A", "array_partition", "A", (1, 2, 4)),
    ))


@pytest.fixture
def small_space() -> DesignSpace:
    # 24 configurations; convenient for exhaustive checks
    return DesignSpace((
        PragmaDirective("unroll@L0", "unroll", "L0", (1, 2, 4, 8)),
        PragmaDirective("pipe@L0", "pipeline", "L0", ("off", "on", "flatten")),
        PragmaDirective("tile@L0", "tile", "L0", (1, 2)),
    ))


@pytest.fixture
def flat_model() -> OracleKernelModel:
    # single-loop kernel matching small_space
    return OracleKernelModel(
        kernel_id="flat",
        loops=(OracleLoop("L0", 64, {"load": 1, "add": 2, "mul": 1, "store": 1}),),
        base={"lut": 120, "dsp": 2, "ff": 90, "bram": 6},
        capacities={"lut": 3000, "dsp": 32, "ff": 2500, "bram": 32},
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)

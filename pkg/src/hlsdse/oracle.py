"""Deterministic synthetic QoR model standing in for an HLS toolchain.

Maps (kernel model, pragma configuration) to latency cycles and LUT/DSP/FF/
BRAM usage through a documented closed form. The model is intentionally
simple and monotone: higher unroll factors trade resources for latency,
turning a pipeline on (and then to flatten) does the same more aggressively,
array partitioning buys memory bandwidth with BRAM/LUT, and tiling trades
logic for BRAM at no latency cost. Those directions make exhaustively
computed Pareto fronts meaningful and keep the pragma-impact guidance given
to exploration backends true inside this artifact's world.

Latency closed form, per loop nest (integer arithmetic throughout):

    iters(L)    = ceil(trip / u_eff),  u_eff = min(unroll, ports * max partition factor)
                  for loops with memory ops, else u_eff = unroll
    chain(L)    = max(1, #ops per iteration)          -- dependence-chain depth
    off:        cycles = iters * (chain + sum cycles(children))
    on:         cycles = chain + iters * max(1, sum cycles(children))
    flatten:    cycles = chain + flat(L),  flat(L) = iters * max(1, sum flat(children))

``on`` and ``flatten`` are additionally clamped to never exceed the previous
level, and total latency is the sum over root loops. Resource growth is
affine in (factor - 1) with coefficients from the model file, so the
identity configuration reproduces the model's base usage exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .designspace import DesignConfiguration, DesignSpace, validate_configuration
from .docio import SchemaError, dump_document, read_document

RESOURCE_KEYS = ("lut", "dsp", "ff", "bram")

# Affine growth coefficients; a model file may override any subset.
DEFAULT_COSTS = {
    "lut_add": 8, "lut_mul": 24, "lut_mem": 4,
    "ff_add": 6, "ff_mul": 16, "ff_mem": 4,
    "pipe_lut": 32, "pipe_ff": 24,
    "part_lut": 8, "part_ff": 4, "part_bram": 1,
    "tile_lut": 6, "tile_ff": 2, "tile_bram": 1,
}


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class OracleLoop:
    loop_id: str
    trip: int
    ops: dict
    parent: str | None = None
    ports: int = 2


@dataclass(frozen=True)
class OracleKernelModel:
    kernel_id: str
    loops: tuple[OracleLoop, ...]
    base: dict
    capacities: dict
    costs: dict = field(default_factory=dict)

    def cost(self, key: str) -> int:
        return int(self.costs.get(key, DEFAULT_COSTS[key]))

    def __post_init__(self):
        if not self.loops:
            raise OracleError(f"{self.kernel_id}: model has no loops")
        for lp in self.loops:
            if lp.trip < 1:
                raise OracleError(f"{self.kernel_id}: loop {lp.loop_id} trip < 1")
        for key in RESOURCE_KEYS:
            if key not in self.base or key not in self.capacities:
                raise OracleError(f"{self.kernel_id}: base/capacities must define {key}")
            if self.capacities[key] <= self.base[key]:
                raise OracleError(f"{self.kernel_id}: capacity {key} must exceed base usage")


@dataclass(frozen=True)
class QorMetrics:
    latency_cycles: int
    lut: int
    dsp: int
    ff: int
    bram: int
    feasible: bool = True

    def as_vector(self) -> np.ndarray:
        return np.array([self.latency_cycles, self.lut, self.dsp, self.ff, self.bram],
                        dtype=np.float64)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _resolve(space: DesignSpace, config: DesignConfiguration):
    """Per-loop unroll/pipeline/tile settings and global partition factors."""
    unroll: dict[str, int] = {}
    pipeline: dict[str, str] = {}
    tile: dict[str, int] = {}
    partitions: list[int] = []
    for d in space.directives:
        v = d.value(config.assignment[d.name])
        if d.kind == "unroll":
            unroll[d.target] = int(v)
        elif d.kind == "pipeline":
            pipeline[d.target] = str(v)
        elif d.kind == "tile":
            tile[d.target] = int(v)
        else:
            partitions.append(int(v))
    return unroll, pipeline, tile, partitions


def evaluate(model: OracleKernelModel, space: DesignSpace,
             config: DesignConfiguration) -> QorMetrics:
    """Closed-form QoR for one configuration; flags capacity overruns as infeasible."""
    validate_configuration(space, config)
    unroll, pipeline, tile, partitions = _resolve(space, config)
    part_max = max(partitions, default=1)

    by_id = {lp.loop_id: lp for lp in model.loops}
    children: dict[str | None, list[OracleLoop]] = {}
    for lp in model.loops:
        children.setdefault(lp.parent, []).append(lp)

    def op(lp: OracleLoop, key: str) -> int:
        return int(lp.ops.get(key, 0))

    def iters(lp: OracleLoop) -> int:
        u = unroll.get(lp.loop_id, 1)
        if op(lp, "load") + op(lp, "store") > 0:
            u = min(u, lp.ports * part_max)
        return _ceil_div(lp.trip, max(1, u))

    def chain(lp: OracleLoop) -> int:
        return max(1, sum(op(lp, k) for k in ("add", "mul", "load", "store")))

    def flat_total(lp: OracleLoop) -> int:
        inner = sum(flat_total(c) for c in children.get(lp.loop_id, []))
        return iters(lp) * max(1, inner)

    def cycles(lp: OracleLoop) -> int:
        inner = sum(cycles(c) for c in children.get(lp.loop_id, []))
        off = iters(lp) * (chain(lp) + inner)
        mode = pipeline.get(lp.loop_id, "off")
        if mode == "off":
            return off
        on = min(off, chain(lp) + iters(lp) * max(1, inner))
        if mode == "on":
            return on
        return min(on, chain(lp) + flat_total(lp))

    latency = sum(cycles(r) for r in children.get(None, []))

    lut = int(model.base["lut"])
    ff = int(model.base["ff"])
    dsp = int(model.base["dsp"])
    bram = int(model.base["bram"])
    for lp in model.loops:
        lut_w = (op(lp, "add") * model.cost("lut_add")
                 + op(lp, "mul") * model.cost("lut_mul")
                 + (op(lp, "load") + op(lp, "store")) * model.cost("lut_mem"))
        ff_w = (op(lp, "add") * model.cost("ff_add")
                + op(lp, "mul") * model.cost("ff_mul")
                + (op(lp, "load") + op(lp, "store")) * model.cost("ff_mem"))
        u = unroll.get(lp.loop_id, 1)
        lut += lut_w * (u - 1)
        ff += ff_w * (u - 1)
        dsp += op(lp, "mul") * (u - 1)
        mode = pipeline.get(lp.loop_id, "off")
        if mode == "on":
            lut += model.cost("pipe_lut") + lut_w
            ff += model.cost("pipe_ff") + ff_w
        elif mode == "flatten":
            lut += 2 * (model.cost("pipe_lut") + lut_w)
            ff += 2 * (model.cost("pipe_ff") + ff_w)
            dsp += op(lp, "mul")
        t = tile.get(lp.loop_id, 1)
        lut += model.cost("tile_lut") * (t - 1)
        ff += model.cost("tile_ff") * (t - 1)
        bram = max(0, bram - model.cost("tile_bram") * (t - 1))
    for f in partitions:
        lut += model.cost("part_lut") * (f - 1)
        ff += model.cost("part_ff") * (f - 1)
        bram += model.cost("part_bram") * (f - 1)

    feasible = (lut <= model.capacities["lut"] and dsp <= model.capacities["dsp"]
                and ff <= model.capacities["ff"] and bram <= model.capacities["bram"])
    return QorMetrics(latency_cycles=max(1, latency), lut=lut, dsp=dsp, ff=ff,
                      bram=bram, feasible=feasible)


def identity_configuration(space: DesignSpace) -> DesignConfiguration:
    """The all-disabled configuration (unroll/partition/tile 1, pipeline off)."""
    assignment = {}
    for d in space.directives:
        disabled = "off" if d.kind == "pipeline" else 1
        if disabled not in d.domain:
            raise OracleError(f"directive {d.name}: domain lacks the disabled value "
                              f"{disabled!r}")
        assignment[d.name] = d.domain.index(disabled)
    return DesignConfiguration(assignment)


def max_latency(model: OracleKernelModel, space: DesignSpace) -> int:
    """Latency of the identity configuration — the formula's maximum."""
    return evaluate(model, space, identity_configuration(space)).latency_cycles


# ---------------------------------------------------------------------------
# kernel description builder
# ---------------------------------------------------------------------------

def describe_kernel(model: OracleKernelModel, space: DesignSpace):
    """Render the oracle model as a kernel description with pragma slots.

    Loop ids, bodies, and nesting mirror the model one-to-one so that graphs
    built from the description agree with the metrics the oracle produces.
    """
    from .cdfg import ArraySpec, KernelDescription, LoopSpec, OP_ORDER

    loop_ids = {lp.loop_id for lp in model.loops}
    arrays = []
    seen = set()
    for d in space.directives:
        if d.kind == "array_partition" and d.target not in seen:
            seen.add(d.target)
            arrays.append(ArraySpec(name=d.target, size=1024))
        elif d.kind != "array_partition" and d.target not in loop_ids:
            raise OracleError(f"directive {d.name} targets unknown loop {d.target!r}")

    slots_for: dict[str, list[str]] = {}
    for d in space.directives:
        slots_for.setdefault(d.target, []).append(d.name)

    children: dict[str | None, list[OracleLoop]] = {}
    for lp in model.loops:
        children.setdefault(lp.parent, []).append(lp)

    lines = [f"void {model.kernel_id}(double *in, double *out) {{"]
    for arr in arrays:
        lines.append(f"  double {arr.name}[{arr.size}];")
        for slot in slots_for.get(arr.name, []):
            lines.append(f"  __PRAGMA({slot})__")

    def emit(lp: OracleLoop, depth: int) -> None:
        pad = "  " * depth
        for slot in slots_for.get(lp.loop_id, []):
            lines.append(f"{pad}__PRAGMA({slot})__")
        var = f"i_{lp.loop_id}"
        lines.append(f"{pad}for (int {var} = 0; {var} < {lp.trip}; {var}++) {{")
        body = "  " * (depth + 1)
        loads = int(lp.ops.get("load", 0))
        for k in range(loads):
            lines.append(f"{body}double t_{lp.loop_id}_{k} = in[{var} + {k}];")
        for k in range(int(lp.ops.get("add", 0))):
            operand = f"t_{lp.loop_id}_{k % loads}" if loads else f"{k + 1}.0"
            lines.append(f"{body}acc_{lp.loop_id} = acc_{lp.loop_id} + {operand};")
        for k in range(int(lp.ops.get("mul", 0))):
            operand = f"t_{lp.loop_id}_{k % loads}" if loads else f"{k + 2}.0"
            lines.append(f"{body}acc_{lp.loop_id} = acc_{lp.loop_id} * {operand};")
        for k in range(int(lp.ops.get("store", 0))):
            lines.append(f"{body}out[{var} + {k}] = acc_{lp.loop_id};")
        for child in children.get(lp.loop_id, []):
            emit(child, depth + 1)
        lines.append(f"{pad}}}")

    for root in children.get(None, []):
        emit(root, 1)
    lines.append("}")

    template = "\n".join(lines) + "\n"
    loops = tuple(LoopSpec(loop_id=lp.loop_id, trip_count=lp.trip,
                           body_op_counts={k: int(lp.ops.get(k, 0)) for k in OP_ORDER
                                           if lp.ops.get(k, 0)},
                           parent_loop_id=lp.parent)
                  for lp in model.loops)
    return KernelDescription(kernel_id=model.kernel_id, source_template=template,
                             loops=loops, arrays=tuple(arrays))


# ---------------------------------------------------------------------------
# model documents
# ---------------------------------------------------------------------------

def model_to_document(model: OracleKernelModel) -> dict:
    loops = []
    for lp in model.loops:
        entry = {"id": lp.loop_id, "trip": lp.trip,
                 "ops": {k: int(v) for k, v in sorted(lp.ops.items()) if v}}
        if lp.parent is not None:
            entry["parent"] = lp.parent
        if lp.ports != 2:
            entry["ports"] = lp.ports
        loops.append(entry)
    doc = {"kernel_id": model.kernel_id, "loops": loops,
           "base": {k: int(model.base[k]) for k in RESOURCE_KEYS},
           "capacities": {k: int(model.capacities[k]) for k in RESOURCE_KEYS}}
    if model.costs:
        doc["costs"] = dict(sorted(model.costs.items()))
    return doc


def model_from_document(doc: dict) -> OracleKernelModel:
    if not isinstance(doc.get("loops"), list) or not doc["loops"]:
        raise SchemaError("loops", "expected a non-empty list")
    for key in ("base", "capacities"):
        if not isinstance(doc.get(key), dict):
            raise SchemaError(key, "expected an object")
        for res in RESOURCE_KEYS:
            v = doc[key].get(res)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise SchemaError(f"{key}.{res}", "expected a non-negative integer")
    loops = []
    for i, entry in enumerate(doc["loops"]):
        path = f"loops[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(path, "expected an object")
        trip = entry.get("trip")
        if not isinstance(trip, int) or isinstance(trip, bool) or trip < 1:
            raise SchemaError(f"{path}.trip", "expected a positive integer")
        ops = entry.get("ops", {})
        if not isinstance(ops, dict):
            raise SchemaError(f"{path}.ops", "expected an object")
        loops.append(OracleLoop(
            loop_id=str(entry.get("id", f"L{i}")),
            trip=trip,
            ops={k: int(v) for k, v in ops.items()},
            parent=entry.get("parent"),
            ports=int(entry.get("ports", 2))))
    costs = doc.get("costs", {})
    unknown = sorted(set(costs) - set(DEFAULT_COSTS))
    if unknown:
        raise SchemaError(f"costs.{unknown[0]}", "unknown key")
    try:
        return OracleKernelModel(
            kernel_id=str(doc.get("kernel_id", "kernel")),
            loops=tuple(loops),
            base={k: int(doc["base"][k]) for k in RESOURCE_KEYS},
            capacities={k: int(doc["capacities"][k]) for k in RESOURCE_KEYS},
            costs=dict(costs))
    except OracleError as exc:
        raise SchemaError("model", str(exc)) from exc


def write_model(path: str | Path, model: OracleKernelModel) -> None:
    Path(path).write_text(dump_document(model_to_document(model)), encoding="utf-8")


def read_model(path: str | Path) -> OracleKernelModel:
    return model_from_document(read_document(path))

"""Deployment memory accounting for flat and hierarchical classifier stacks.

Every tensor value is 4 bytes and a megabyte is 2**20 bytes. Parameter
memory counts weight tensors only (biases excluded). Activation ("data")
memory is floored at 0.01 MB per layer so no populated layer accounts as
zero; per-layer cells display rounded half-up to 2 decimals, while the data
total sums the floored exact values before rounding. Parameter totals sum
the rounded per-layer values. Batched data memory scales the rounded
per-image total.

A hierarchical deployment charges both stages' parameters once but shares a
single activation buffer, sized by the larger stage.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

__all__ = [
    "LayerSpec",
    "NetworkSpec",
    "MemoryReport",
    "layer_data_memory",
    "layer_param_memory",
    "network_memory",
    "hierarchical_memory",
    "builtin_network",
    "builtin_names",
    "network_from_json",
    "network_to_json",
    "format_mb",
    "report_to_text",
    "report_to_csv",
    "check_dims",
]

BYTES_PER_VALUE = 4
MB = Decimal(2) ** 20
DATA_FLOOR_MB = Decimal("0.01")
CENT = Decimal("0.01")

WEIGHTLESS_KINDS = frozenset({"input", "relu", "norm", "pool"})
WEIGHTFUL_KINDS = frozenset({"conv", "fc", "prob"})
KINDS = WEIGHTLESS_KINDS | WEIGHTFUL_KINDS


def _q2(value: Decimal) -> Decimal:
    return value.quantize(CENT, rounding=ROUND_HALF_UP)


def format_mb(value: Decimal | float) -> str:
    """Two-decimal half-up value with trailing zeros stripped: 144, 97.1, 0.09."""
    d = _q2(Decimal(str(value)) if isinstance(value, float) else value)
    text = f"{d:.2f}".rstrip("0").rstrip(".")
    return text if text else "0"


@dataclass(frozen=True)
class LayerSpec:
    """One row of a network's memory table.

    ``out_*`` describe the output tensor (fully connected layers use
    1 x 1 x units); ``kernel_h/kernel_w/in_c/out_units`` describe the weight
    tensor and are zero for weightless kinds. ``tunable`` marks layers that
    are optimized during fine-tuning rather than frozen.
    """

    name: str
    kind: str
    out_h: int
    out_w: int
    out_c: int
    kernel_h: int = 0
    kernel_w: int = 0
    in_c: int = 0
    out_units: int = 0
    stride: int = 1
    stage: int = 0
    tunable: bool = False

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if min(self.out_h, self.out_w, self.out_c) < 1:
            raise ValueError(f"{self.name}: output dims must be >= 1")
        weight_dims = (self.kernel_h, self.kernel_w, self.in_c, self.out_units)
        if self.kind in WEIGHTLESS_KINDS:
            if any(weight_dims):
                raise ValueError(f"{self.name}: weightless layer with weight dims")
        elif min(weight_dims) < 1:
            raise ValueError(f"{self.name}: weightful layer needs all weight dims >= 1")

    @property
    def data_bytes(self) -> int:
        return self.out_h * self.out_w * self.out_c * BYTES_PER_VALUE

    @property
    def param_bytes(self) -> int:
        if self.kind in WEIGHTLESS_KINDS:
            return 0
        return self.kernel_h * self.kernel_w * self.in_c * self.out_units * BYTES_PER_VALUE


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple[LayerSpec, ...]

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network has no layers")
        if layers[0].kind != "input":
            raise ValueError("first layer must be the input")
        object.__setattr__(self, "layers", layers)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        first = self.layers[0]
        return (first.out_h, first.out_w, first.out_c)


def check_dims(spec: NetworkSpec) -> None:
    """Verify each weightful layer consumes the previous layer's output.

    Convolutions must match channel counts; fully connected layers must
    consume the full previous volume. Advisory: some bundled reference specs
    intentionally carry reduced bookkeeping widths and fail this check.
    """
    prev = spec.layers[0]
    for layer in spec.layers[1:]:
        if layer.kind == "conv" and layer.in_c != prev.out_c:
            raise ValueError(
                f"{spec.name}/{layer.name}: conv in_c {layer.in_c} != previous out_c {prev.out_c}"
            )
        if layer.kind in ("fc", "prob"):
            volume = prev.out_h * prev.out_w * prev.out_c
            consumed = layer.kernel_h * layer.kernel_w * layer.in_c
            if consumed != volume:
                raise ValueError(
                    f"{spec.name}/{layer.name}: consumes {consumed} values, previous outputs {volume}"
                )
        prev = layer


def _data_mb_floored(layer: LayerSpec) -> Decimal:
    exact = Decimal(layer.data_bytes) / MB
    return max(exact, DATA_FLOOR_MB)


def layer_data_memory(layer: LayerSpec) -> float:
    """Activation memory in MB: 4-byte values, floored at 0.01, 2 decimals."""
    return float(_q2(_data_mb_floored(layer)))


def layer_param_memory(layer: LayerSpec) -> float:
    """Weight memory in MB (biases excluded), rounded half-up to 2 decimals."""
    return float(_q2(Decimal(layer.param_bytes) / MB))


@dataclass(frozen=True)
class MemoryReport:
    network: str
    batch_size: int
    rows: tuple[tuple[LayerSpec, float, float], ...]
    data_per_image: float
    data_total: float
    params_total: float
    total: float


def network_memory(spec: NetworkSpec, batch: int = 1) -> MemoryReport:
    """Per-layer and total memory for one network at a given batch size."""
    if batch < 1:
        raise ValueError("batch size must be >= 1")
    rows = []
    data_sum = Decimal(0)
    params_sum = Decimal(0)
    for layer in spec.layers:
        data_mb = _q2(_data_mb_floored(layer))
        params_mb = _q2(Decimal(layer.param_bytes) / MB)
        rows.append((layer, float(data_mb), float(params_mb)))
        data_sum += _data_mb_floored(layer)
        params_sum += params_mb
    data_per_image = _q2(data_sum)
    data_total = _q2(data_per_image * batch)
    params_total = _q2(params_sum)
    return MemoryReport(
        network=spec.name,
        batch_size=batch,
        rows=tuple(rows),
        data_per_image=float(data_per_image),
        data_total=float(data_total),
        params_total=float(params_total),
        total=float(_q2(params_total + data_total)),
    )


def hierarchical_memory(
    hier_spec: NetworkSpec,
    assign_spec: NetworkSpec,
    batch: int = 1,
) -> float:
    """Total MB for a two-stage deployment sharing one activation buffer.

    Both stages' parameters are resident; the shared data buffer is sized by
    the stage with the larger batched data requirement.
    """
    if hier_spec.input_shape != assign_spec.input_shape:
        raise ValueError(
            f"input shapes differ: {hier_spec.input_shape} vs {assign_spec.input_shape}"
        )
    hier = network_memory(hier_spec, batch)
    assign = network_memory(assign_spec, batch)
    shared_data = max(hier.data_total, assign.data_total)
    total = Decimal(str(hier.params_total)) + Decimal(str(assign.params_total)) + Decimal(str(shared_data))
    return float(_q2(total))


def _tl_spec(
    name: str,
    fc6: int,
    fc7_in: int,
    fc7: int,
    prob_in: int,
    prob: int,
    tunable: frozenset[str],
) -> NetworkSpec:
    def tun(layer_name: str) -> bool:
        return layer_name in tunable

    layers = [
        LayerSpec("Input", "input", 224, 224, 3, stage=0),
        LayerSpec("Conv1", "conv", 54, 54, 64, 11, 11, 3, 64, stride=4, stage=1),
        LayerSpec("ReLU1", "relu", 54, 54, 64, stage=1),
        LayerSpec("norm1", "norm", 54, 54, 64, stage=1),
        LayerSpec("Pool1", "pool", 27, 27, 64, stride=2, stage=1),
        LayerSpec("Conv2", "conv", 27, 27, 256, 5, 5, 64, 256, stage=2, tunable=tun("Conv2")),
        LayerSpec("ReLU2", "relu", 27, 27, 256, stage=2),
        LayerSpec("norm2", "norm", 27, 27, 256, stage=2),
        LayerSpec("Pool2", "pool", 13, 13, 256, stride=2, stage=2),
        LayerSpec("Conv3", "conv", 13, 13, 256, 3, 3, 256, 256, stage=3, tunable=tun("Conv3")),
        LayerSpec("ReLU3", "relu", 13, 13, 256, stage=3),
        LayerSpec("Conv4", "conv", 13, 13, 256, 3, 3, 256, 256, stage=4, tunable=tun("Conv4")),
        LayerSpec("ReLU4", "relu", 13, 13, 256, stage=4),
        LayerSpec("Conv5", "conv", 13, 13, 256, 3, 3, 256, 256, stage=5, tunable=tun("Conv5")),
        LayerSpec("ReLU5", "relu", 13, 13, 256, stage=5),
        LayerSpec("Pool5", "pool", 6, 6, 256, stride=2, stage=5),
        LayerSpec("Fc6", "fc", 1, 1, fc6, 6, 6, 256, fc6, stage=6, tunable=tun("Fc6")),
        LayerSpec("ReLU6", "relu", 1, 1, fc6, stage=6),
        LayerSpec("Fc7", "fc", 1, 1, fc7, 1, 1, fc7_in, fc7, stage=7, tunable=tun("Fc7")),
        LayerSpec("ReLu7", "relu", 1, 1, fc7, stage=7),
        LayerSpec("prob", "prob", 1, 1, prob, 1, 1, prob_in, prob, stage=8, tunable=tun("prob")),
    ]
    return NetworkSpec(name, tuple(layers))


def _builtins() -> dict[str, NetworkSpec]:
    # TL2 and TL4 count Fc7 weights at the reduced width on both sides and
    # prob at the routed class count; their dims do not chain (check_dims).
    frozen = frozenset()
    return {
        "CNN_TL1": _tl_spec("CNN_TL1", 4096, 4096, 4096, 4096, 1000, frozen),
        "CNN_TL2": _tl_spec("CNN_TL2", 4096, 2048, 2048, 2048, 89, frozenset({"Fc7", "prob"})),
        "CNN_TL3": _tl_spec(
            "CNN_TL3", 2048, 2048, 2048, 2048, 89, frozenset({"Fc6", "Fc7", "prob"})
        ),
        "CNN_TL4": _tl_spec(
            "CNN_TL4", 2048, 1024, 1024, 1024, 41,
            frozenset({"Conv4", "Conv5", "Fc6", "Fc7", "prob"}),
        ),
        "CNN_TL5": _tl_spec(
            "CNN_TL5", 1024, 1024, 1024, 1024, 41,
            frozenset({"Conv2", "Conv3", "Conv4", "Conv5", "Fc6", "Fc7", "prob"}),
        ),
    }


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_builtins()))


def builtin_network(name: str) -> NetworkSpec:
    """Bundled reference architectures CNN_TL1..CNN_TL5."""
    specs = _builtins()
    try:
        return specs[name]
    except KeyError:
        raise ValueError(
            f"unknown built-in network {name!r}; available: {', '.join(sorted(specs))}"
        ) from None


def network_to_json(spec: NetworkSpec) -> str:
    payload = {
        "name": spec.name,
        "layers": [
            {
                "name": layer.name,
                "kind": layer.kind,
                "out_h": layer.out_h,
                "out_w": layer.out_w,
                "out_c": layer.out_c,
                "kernel_h": layer.kernel_h,
                "kernel_w": layer.kernel_w,
                "in_c": layer.in_c,
                "out_units": layer.out_units,
                "stride": layer.stride,
                "stage": layer.stage,
                "tunable": layer.tunable,
            }
            for layer in spec.layers
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def network_from_json(source: str | Path) -> NetworkSpec:
    """Load a network spec from a JSON file path or literal JSON text."""
    text = source if isinstance(source, str) and source.lstrip().startswith("{") else Path(source).read_text(encoding="utf-8")
    payload = json.loads(text)
    layers = tuple(
        LayerSpec(
            name=entry.get("name", entry["kind"]),
            kind=entry["kind"],
            out_h=entry["out_h"],
            out_w=entry["out_w"],
            out_c=entry["out_c"],
            kernel_h=entry.get("kernel_h", 0),
            kernel_w=entry.get("kernel_w", 0),
            in_c=entry.get("in_c", 0),
            out_units=entry.get("out_units", 0),
            stride=entry.get("stride", 1),
            stage=entry.get("stage", 0),
            tunable=entry.get("tunable", False),
        )
        for entry in payload["layers"]
    )
    return NetworkSpec(name=payload["name"], layers=layers)


def report_to_text(report: MemoryReport) -> str:
    """Aligned table: stage, layer, output dims, data MB, weight dims, params MB."""
    header = (
        f"{report.network}  batch={report.batch_size}  "
        f"total={format_mb(report.total)} MB"
    )
    lines = [
        header,
        f"{'Lyr':>3} {'Function':<8} {'Out':>14} {'Data MB':>8} {'Weights':>18} {'Params MB':>10}",
    ]
    for layer, data_mb, params_mb in report.rows:
        out = f"{layer.out_h}x{layer.out_w}x{layer.out_c}"
        if layer.kind in WEIGHTFUL_KINDS:
            weights = f"{layer.kernel_h}x{layer.kernel_w}x{layer.in_c}x{layer.out_units}"
        else:
            weights = "-"
        lines.append(
            f"{layer.stage:>3} {layer.name:<8} {out:>14} {format_mb(data_mb):>8} "
            f"{weights:>18} {format_mb(params_mb):>10}"
        )
    lines.append(
        f"{'':>3} {'Total':<8} {'':>14} {format_mb(report.data_per_image):>8} "
        f"{'':>18} {format_mb(report.params_total):>10}"
    )
    if report.batch_size != 1:
        lines.append(
            f"batched data ({report.batch_size}x): {format_mb(report.data_total)} MB, "
            f"grand total: {format_mb(report.total)} MB"
        )
    return "\n".join(lines) + "\n"


def report_to_csv(report: MemoryReport) -> str:
    lines = ["stage,function,out_h,out_w,out_c,data_mb,kernel_h,kernel_w,in_c,out_units,params_mb"]
    for layer, data_mb, params_mb in report.rows:
        lines.append(
            f"{layer.stage},{layer.name},{layer.out_h},{layer.out_w},{layer.out_c},"
            f"{format_mb(data_mb)},{layer.kernel_h},{layer.kernel_w},{layer.in_c},"
            f"{layer.out_units},{format_mb(params_mb)}"
        )
    lines.append(
        f"total,,,,,{format_mb(report.data_per_image)},,,,,{format_mb(report.params_total)}"
    )
    lines.append(
        f"batch_{report.batch_size},,,,,{format_mb(report.data_total)},,,,,"
        f"{format_mb(report.total)}"
    )
    return "\n".join(lines) + "\n"

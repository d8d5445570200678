"""Multiply-accumulate and parameter accounting for a single input feature map.

Only kernel multiplications count: conv and fully-connected layers. Batch
norm, ReLU, pooling, interpolation and cross-path additions cost nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .multioct import group_dims
from .network import LayerSpec, NetworkConfig, layer_specs

CSV_HEADER = "layer,c_in,h_in,w_in,c_out,h_out,w_out,maccs,params"


def layer_maccs(spec: LayerSpec) -> int:
    """MACCs of one layer.

    A multi-octave layer sums ``c_i * k**2 * c_j * h * w`` over its paths, with
    ``(h, w)`` the output dims at the coarser of the two groups' scales.
    """
    if spec.kind == "fc":
        return spec.in_channels * spec.out_channels
    k2 = spec.k * spec.k
    total = 0
    for ci, ti in zip(spec.in_counts, spec.in_octaves):
        for cj, tj in zip(spec.out_counts, spec.out_octaves):
            h, w = group_dims(*spec.out_dims, max(ti, tj), spec.rounding)
            total += ci * k2 * cj * h * w
    return total


def layer_params(spec: LayerSpec) -> int:
    """Kernel weights plus biases; identical for vanilla and multi-octave layers."""
    if spec.kind == "fc":
        return spec.in_channels * spec.out_channels + spec.out_channels
    kernel = sum(ci * cj for ci in spec.in_counts for cj in spec.out_counts) * spec.k * spec.k
    return kernel + spec.out_channels


def kernel_params(spec: LayerSpec) -> int:
    return layer_params(spec) - spec.out_channels


def to_millions(maccs: int) -> str:
    return str((Decimal(maccs) / Decimal(10**6)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class CostRow:
    layer: str
    c_in: int
    h_in: int
    w_in: int
    c_out: int
    h_out: int
    w_out: int
    maccs: int
    params: int


@dataclass
class CostReport:
    rows: list[CostRow]
    config: NetworkConfig
    label: str = ""
    reference_m: float | None = None  # published value, when known
    total: int = field(init=False)

    def __post_init__(self):
        if not self.rows:
            raise ValueError("a cost report needs at least one layer row")
        self.total = sum(r.maccs for r in self.rows)

    @property
    def total_m(self) -> str:
        return to_millions(self.total)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)


def network_cost(cfg_or_net, label: str = "", reference_m: float | None = None) -> CostReport:
    cfg = getattr(cfg_or_net, "config", cfg_or_net)
    rows = []
    for s in layer_specs(cfg):
        if s.kind == "fc":
            row = CostRow(s.name, s.in_channels, 1, 1, s.out_channels, 1, 1, layer_maccs(s), layer_params(s))
        else:
            row = CostRow(s.name, s.in_channels, *s.in_dims, s.out_channels, *s.out_dims,
                          layer_maccs(s), layer_params(s))
        rows.append(row)
    return CostReport(rows, cfg, label, reference_m)


def render_csv(report: CostReport) -> str:
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(f"{r.layer},{r.c_in},{r.h_in},{r.w_in},{r.c_out},{r.h_out},{r.w_out},{r.maccs},{r.params}")
    lines.append(f"total,,,,,,,{report.total},{report.total_params}")
    return "\n".join(lines) + "\n"


def _detail(report: CostReport) -> str:
    head = ("layer", "c_in", "in", "c_out", "out", "MACCs", "params")
    body = [(r.layer, str(r.c_in), f"{r.h_in}x{r.w_in}", str(r.c_out), f"{r.h_out}x{r.w_out}",
             f"{r.maccs:,}", f"{r.params:,}") for r in report.rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    fmt = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    lines = []
    if report.label:
        lines.append(report.label)
    lines += [fmt(head), "  ".join("-" * w for w in widths)]
    lines += [fmt(row) for row in body]
    lines.append(f"total {report.total_m} M")
    return "\n".join(lines) + "\n"


def render_table(reports) -> str:
    """Text rendering: per-layer detail for one report, one summary row per report otherwise."""
    reports = list(reports)
    if not reports:
        raise ValueError("render_table needs at least one report")
    if len(reports) == 1:
        return _detail(reports[0])
    head = ("config", "MACCs", "M", "published M", "diff %")
    body = []
    for r in reports:
        ref = "" if r.reference_m is None else f"{r.reference_m:.1f}"
        diff = "" if r.reference_m is None else f"{100 * (r.total / 1e6 - r.reference_m) / r.reference_m:+.2f}"
        body.append((r.label or "-", f"{r.total:,}", r.total_m, ref, diff))
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    fmt = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    return "\n".join([fmt(head), "  ".join("-" * w for w in widths), *(fmt(b) for b in body)]) + "\n"


def render_summary_csv(reports) -> str:
    reports = list(reports)
    if not reports:
        raise ValueError("render_summary_csv needs at least one report")
    lines = ["config,maccs,maccs_m,published_m"]
    for r in reports:
        ref = "" if r.reference_m is None else f"{r.reference_m:.1f}"
        lines.append(f"{r.label},{r.total},{r.total_m},{ref}")
    return "\n".join(lines) + "\n"

"""Analytical energy model for spike-driven and ANN-equivalent inference.

FLOP figures are multiply-accumulate counts of the dense-equivalent operator
for one timestep (one MAC = one FLOP; a single energy constant is charged per
FLOP). A spike-driven layer costs ``E_AC * T * R * FL`` where ``R`` is its
input firing statistic; the stem convolution consumes dense pixels and is
charged ``E_MAC * T * R * FL``. Attention scaling and the (absent) softmax
cost nothing on the spike-driven side.

Two readings of ``R`` are carried through every report:

``mean_integer`` (default)
    mean emitted integer per element, no extra ``D`` factor. This equals the
    exact number of accumulate events once integers are expanded to unit
    spikes.
``fraction_x_d``
    nonzero fraction multiplied by ``D``, the literal product form of the
    headline SNN energy formula. Always >= the first reading.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .spiketensor import FiringStats

PJ_PER_MJ = 1e9

OP_CLASSES = (
    "first_conv_mac",
    "conv_ac",
    "linear_ac",
    "attention_qkv",
    "attention_product",
    "softmax_absent",
    "scale_absent",
)
SPIKE_DRIVEN = ("conv_ac", "linear_ac", "attention_qkv", "attention_product")
READINGS = ("mean_integer", "fraction_x_d")


@dataclass(frozen=True)
class EnergyModel:
    e_mac: float = 4.6  # pJ
    e_ac: float = 0.9  # pJ
    technology: str = "45nm"

    def __post_init__(self):
        if self.e_mac <= 0 or self.e_ac <= 0:
            raise ValueError("energy constants must be positive")


@dataclass(frozen=True)
class LayerEnergyRecord:
    name: str
    op_class: str
    flops: float
    timesteps: int = 1
    d_cap: int = 4
    firing: FiringStats = field(default_factory=FiringStats.dense)
    branch: str = "search"
    ann_flops: float | None = None  # dense-ANN FLOPs per timestep when they differ (attention)
    table_rate: float | None = None  # rate taken verbatim from an imported SFR table

    def __post_init__(self):
        if self.flops < 0:
            raise ValueError(f"{self.name}: negative FLOPs")


def firing_rate(rec: LayerEnergyRecord, reading: str = "mean_integer") -> float:
    if reading not in READINGS:
        raise ValueError(f"unknown SFR reading {reading!r}")
    if rec.op_class == "first_conv_mac":
        r = rec.table_rate if rec.table_rate is not None else rec.firing.mean_integer
        return r  # dense pixel input: no D factor under either reading
    if rec.table_rate is not None:
        return rec.table_rate if reading == "mean_integer" else rec.table_rate * rec.d_cap
    if reading == "mean_integer":
        return rec.firing.mean_integer
    return rec.firing.nonzero_fraction * rec.d_cap


def layer_energy(rec: LayerEnergyRecord, m: EnergyModel = EnergyModel(), reading: str = "mean_integer") -> float:
    """Spike-driven energy of one layer in pJ."""
    if rec.op_class not in OP_CLASSES:
        raise ValueError(f"unknown op class {rec.op_class!r}")
    if rec.op_class in ("softmax_absent", "scale_absent"):
        return 0.0
    r = firing_rate(rec, reading)
    e = m.e_mac if rec.op_class == "first_conv_mac" else m.e_ac
    return e * rec.timesteps * r * rec.flops


def ann_energy(flops: float, m: EnergyModel = EnergyModel()) -> float:
    if flops < 0:
        raise ValueError("negative FLOPs")
    return flops * m.e_mac


def layer_ann_energy(rec: LayerEnergyRecord, m: EnergyModel = EnergyModel()) -> float:
    fl = rec.flops if rec.ann_flops is None else rec.ann_flops
    return ann_energy(fl * rec.timesteps, m)


def amortize_template(template_total: float, interval: int) -> float:
    if interval < 1:
        raise ValueError("update interval must be >= 1")
    return template_total / interval


class EnergyTrace:
    """Per-run accumulator of layer records, tagged by branch."""

    def __init__(self):
        self.records: list[LayerEnergyRecord] = []

    def add(self, rec: LayerEnergyRecord):
        self.records.append(rec)

    def extend(self, other: "EnergyTrace"):
        self.records.extend(other.records)

    def branch(self, name: str) -> list[LayerEnergyRecord]:
        return [r for r in self.records if r.branch == name]

    def flops(self, branch: str | None = None) -> float:
        return sum(r.flops * r.timesteps for r in self.records if branch is None or r.branch == branch)


@dataclass
class EnergyReport:
    rows: list[dict]
    totals: dict
    interval: int

    def to_json(self, path):
        Path(path).write_text(json.dumps({"layers": self.rows, "totals": self.totals, "interval": self.interval}, indent=1))

    def to_text(self) -> str:
        lines = [
            "energy report (pJ unless noted); FL = dense-equivalent MACs per timestep",
            f"E_MAC={self.totals['e_mac']} pJ  E_AC={self.totals['e_ac']} pJ  template update interval={self.interval}",
            f"{'layer':44s} {'branch':8s} {'class':18s} {'FL':>11s} {'T':>2s} {'nz_frac':>7s} {'mean_int':>8s} {'E[mean_int]':>12s} {'E[frac*D]':>12s}",
        ]
        for r in self.rows:
            lines.append(
                f"{r['name'][:44]:44s} {r['branch']:8s} {r['op_class']:18s} {r['flops']:11.0f} {r['timesteps']:2d} "
                f"{r['nonzero_fraction']:7.4f} {r['mean_integer']:8.4f} {r['energy_pj']:12.1f} {r['energy_pj_fraction_x_d']:12.1f}"
            )
        t = self.totals
        for reading, key in (("mean_integer", "snn"), ("fraction_x_d", "snn_fraction_x_d")):
            lines.append(
                f"[{reading}] search {t[key]['search_mj']:.6f} mJ, template {t[key]['template_mj']:.6f} mJ "
                f"(amortized {t[key]['template_amortized_mj']:.6f} mJ/frame), per-frame {t[key]['per_frame_mj']:.6f} mJ"
            )
        lines.append(
            f"ANN-equivalent per-frame {t['ann']['per_frame_mj']:.6f} mJ; SNN/ANN ratio {t['snn_ann_ratio']:.4f} "
            f"(frac*D reading {t['snn_ann_ratio_fraction_x_d']:.4f})"
        )
        return "\n".join(lines)


def _branch_totals(records, energy_of, interval):
    search = sum(energy_of(r) for r in records if r.branch != "template")
    template = sum(energy_of(r) for r in records if r.branch == "template")
    amort = amortize_template(template, interval)
    return {
        "search_pj": search,
        "template_pj": template,
        "template_amortized_pj": amort,
        "per_frame_pj": search + amort,
        "search_mj": search / PJ_PER_MJ,
        "template_mj": template / PJ_PER_MJ,
        "template_amortized_mj": amort / PJ_PER_MJ,
        "per_frame_mj": (search + amort) / PJ_PER_MJ,
    }


def energy_report(trace: EnergyTrace | list, m: EnergyModel = EnergyModel(), interval: int = 25) -> EnergyReport:
    records = trace.records if isinstance(trace, EnergyTrace) else list(trace)
    rows = []
    for r in records:
        rows.append(
            {
                "name": r.name,
                "branch": r.branch,
                "op_class": r.op_class,
                "flops": r.flops,
                "timesteps": r.timesteps,
                "d_cap": r.d_cap,
                "nonzero_fraction": r.firing.nonzero_fraction if r.table_rate is None else r.table_rate,
                "mean_integer": r.firing.mean_integer if r.table_rate is None else r.table_rate,
                "energy_pj": layer_energy(r, m, "mean_integer"),
                "energy_pj_fraction_x_d": layer_energy(r, m, "fraction_x_d"),
                "ann_energy_pj": layer_ann_energy(r, m),
            }
        )
    snn = _branch_totals(records, lambda r: layer_energy(r, m, "mean_integer"), interval)
    snn_a = _branch_totals(records, lambda r: layer_energy(r, m, "fraction_x_d"), interval)
    ann = _branch_totals(records, lambda r: layer_ann_energy(r, m), interval)
    totals = {
        "e_mac": m.e_mac,
        "e_ac": m.e_ac,
        "snn": snn,
        "snn_fraction_x_d": snn_a,
        "ann": ann,
        "snn_ann_ratio": snn["per_frame_pj"] / ann["per_frame_pj"] if ann["per_frame_pj"] else 0.0,
        "snn_ann_ratio_fraction_x_d": snn_a["per_frame_pj"] / ann["per_frame_pj"] if ann["per_frame_pj"] else 0.0,
    }
    return EnergyReport(rows, totals, interval)


# ---------------------------------------------------------------- SFR tables

_CLASS_BY_LAYER = {
    "Head-QKV": "attention_qkv",
    "Head-KV": "attention_qkv",
    "Q_S": "attention_product",
    "K_S": "attention_product",
    "V_S": "attention_product",
    "Linear": "linear_ac",
    "Linear1": "linear_ac",
    "Linear2": "linear_ac",
}


def load_sfr_table(path, d_cap: int = 4, branch: str = "template") -> list[LayerEnergyRecord]:
    """Read a per-layer firing-rate table into energy records.

    Columns: ``stage, block, layer, t1[, t2, ...][, flops][, op_class]``. The
    per-timestep rates are averaged (the record's ``T`` is the number of rate
    columns); ``flops`` defaults to 1 so energies read as pJ per FLOP. The
    downsampling conv of the first stage is the MAC-charged stem.
    """
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if row.strip() and not row.startswith("#"))
        rate_cols = [c for c in reader.fieldnames if c.lower().startswith("t") and c[1:].isdigit()]
        for i, row in enumerate(reader):
            rates = [float(row[c]) for c in rate_cols if row.get(c, "").strip()]
            layer = row["layer"].strip()
            stage = row["stage"].strip()
            op = (row.get("op_class") or "").strip()
            if not op:
                if row["block"].strip() == "DownSampling":
                    op = "first_conv_mac" if stage in ("Stage 1", "1") else "conv_ac"
                else:
                    op = _CLASS_BY_LAYER.get(layer, "conv_ac")
            records.append(
                LayerEnergyRecord(
                    name=f"{i:03d} {stage}/{row['block'].strip()}/{layer}",
                    op_class=op,
                    flops=float(row.get("flops") or 1.0),
                    timesteps=len(rates),
                    d_cap=d_cap,
                    branch=branch,
                    table_rate=sum(rates) / len(rates),
                )
            )
    return records


def stage_energies(records, m: EnergyModel = EnergyModel(), reading: str = "mean_integer") -> dict[str, float]:
    out: dict[str, float] = {}
    for r in records:
        stage = r.name.split(" ", 1)[-1].split("/", 1)[0]
        out[stage] = out.get(stage, 0.0) + layer_energy(r, m, reading)
    return out


def as_dict(rec: LayerEnergyRecord) -> dict:
    return asdict(rec)

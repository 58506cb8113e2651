from importlib import resources

import numpy as np
import pytest

from spiketrack.energy import (
    EnergyModel,
    EnergyTrace,
    LayerEnergyRecord,
    amortize_template,
    ann_energy,
    energy_report,
    firing_rate,
    layer_energy,
    load_sfr_table,
    stage_energies,
)
from spiketrack.spiketensor import FiringStats

TABLE = resources.files("spiketrack") / "data" / "sfr_b256_t3_template.csv"


def test_constants():
    assert ann_energy(1) == 4.6
    rec = LayerEnergyRecord("l", "conv_ac", 1.0, 1, 4, FiringStats(1.0, 1.0, 1, 1))
    assert layer_energy(rec) == 0.9
    with pytest.raises(ValueError):
        ann_energy(-1)
    with pytest.raises(ValueError):
        EnergyModel(e_ac=0)


def test_absent_ops_are_free():
    for cls in ("softmax_absent", "scale_absent"):
        assert layer_energy(LayerEnergyRecord("s", cls, 100.0)) == 0.0


def test_readings():
    st = FiringStats(0.25, 0.5, 100, 1)
    rec = LayerEnergyRecord("l", "linear_ac", 10.0, 2, 4, st)
    assert layer_energy(rec) == pytest.approx(0.9 * 2 * 0.5 * 10)
    assert layer_energy(rec, reading="fraction_x_d") == pytest.approx(0.9 * 2 * 1.0 * 10)
    stem = LayerEnergyRecord("s", "first_conv_mac", 10.0, 1, 4, FiringStats.dense(1))
    assert firing_rate(stem, "fraction_x_d") == firing_rate(stem) == 1.0
    with pytest.raises(ValueError):
        firing_rate(rec, "bogus")


def test_report_totals_are_layer_sums():
    rng = np.random.default_rng(0)
    tr = EnergyTrace()
    for i in range(30):
        br = "template" if i % 3 == 0 else "search"
        nz = rng.uniform(0, 1)
        tr.add(LayerEnergyRecord(f"l{i}", "conv_ac", float(rng.integers(1, 10**6)), 3 if br == "template" else 1, 4,
                                 FiringStats(nz, nz * rng.uniform(1, 4), 10, 1), br))
    rep = energy_report(tr, interval=25)
    s = sum(r["energy_pj"] for r in rep.rows if r["branch"] == "search")
    t = sum(r["energy_pj"] for r in rep.rows if r["branch"] == "template")
    assert rep.totals["snn"]["search_pj"] == pytest.approx(s, rel=1e-6)
    assert rep.totals["snn"]["template_pj"] == pytest.approx(t, rel=1e-6)
    assert rep.totals["snn"]["template_amortized_pj"] == t / 25
    assert rep.totals["snn"]["per_frame_pj"] == pytest.approx(s + t / 25, rel=1e-12)


def test_amortize():
    assert amortize_template(100.0, 25) == 4.0
    with pytest.raises(ValueError):
        amortize_template(1.0, 0)


def test_table_stage1_downsampler():
    recs = load_sfr_table(TABLE)
    ds = [r for r in recs if "Stage 1/DownSampling" in r.name]
    assert len(ds) == 1
    assert ds[0].op_class == "first_conv_mac" and ds[0].timesteps == 3
    assert layer_energy(ds[0]) == 3 * 4.6 * 1.0
    assert layer_energy(ds[0], reading="fraction_x_d") == 3 * 4.6 * 1.0


def test_table_stage_sums():
    recs = load_sfr_table(TABLE)
    st = stage_energies(recs)
    assert sum(st.values()) == pytest.approx(sum(layer_energy(r) for r in recs), rel=1e-12)
    assert all(v >= 0 for v in st.values())
    assert {r.branch for r in recs} == {"template"}


def test_report_text_and_json(tmp_path):
    tr = EnergyTrace()
    tr.add(LayerEnergyRecord("stem", "first_conv_mac", 100.0))
    rep = energy_report(tr)
    rep.to_json(tmp_path / "r.json")
    assert "E_MAC=4.6" in rep.to_text()
    assert (tmp_path / "r.json").read_text().startswith("{")

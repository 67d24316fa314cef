import json
from dataclasses import replace

import numpy as np
import pytest

from defectlab.defect_sim import (CLOSURE_ORDER, CFLError, ConfigError, MonitorSeries, SimConfig, Simulator,
                                  drift_report, parse_seed_spec, run, step, write_outputs)
from defectlab.liouville import DefectParams
from defectlab.reports import ChargeReport

FREE = DefectParams(mu=0.0, beta=1.0, kappa=0.0)
COARSE = SimConfig(n=151, dt=0.008, T=1.0)


def write_cfg(tmp_path, text):
    p = tmp_path / "sim.cfg"
    p.write_text(text)
    return p


# ---- configuration

def test_load_flat_config(tmp_path):
    p = write_cfg(tmp_path, "model = bosonic_type1\nL = 3\nn = 151\ndt = 0.008  # comment\nT = 0.5\n"
                  "mu_re = 1\nkappa = 0\nseed_spec = a=2; amp=0.01\ntolerance = 1e-5\n")
    cfg = SimConfig.load(p)
    assert (cfg.model, cfg.n, cfg.dt, cfg.T, cfg.tolerance) == ("bosonic_type1", 151, 0.008, 0.5, 1e-5)
    assert cfg.seed_spec["a"] == 2.0 and cfg.seed_spec["amp"] == 0.01 and cfg.seed_spec["width"] == 0.25


def test_config_roundtrip():
    cfg = SimConfig(model="bosonic_type2", n=201, dt=0.005, T=0.3)
    again = SimConfig.from_mapping({k: str(v) for k, v in cfg.to_mapping().items()})
    assert again.to_mapping() == cfg.to_mapping()


@pytest.mark.parametrize("text", [
    "model = bosonic_type2\ncolour = red\n",
    "model = nonsense\n",
    "n = 8\n",
    "n = many\n",
    "seed_spec = amp\n",
    "seed_spec = spin=1\n",
    "dt = -1\n",
])
def test_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        SimConfig.load(write_cfg(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        SimConfig.load(tmp_path / "absent.cfg")


def test_cfl_violation_rejected_before_stepping():
    with pytest.raises(CFLError):
        SimConfig(n=151, dt=0.02)


def test_seed_spec_defaults():
    spec = parse_seed_spec("")
    assert spec["a"] == 3.0 and spec["fwidth"] == 0.2


def test_super_model_forces_kappa():
    cfg = SimConfig(model="super_type2", params=DefectParams(mu=1.0, beta=1.0, kappa=0.0))
    assert cfg.params.kappa == -1


# ---- stepping

def test_free_packet_transmits():
    cfg = SimConfig(n=301, dt=0.004, T=2.0, params=FREE)
    sim = Simulator(cfg)
    st = sim.initial_state()
    for _ in range(500):
        st = step(st, cfg, sim)
    x = sim.x2
    moved = 0.05 * np.exp(-((x - 1.0) / 0.25) ** 2)
    assert np.max(np.abs(st.f["phi2"] - moved)) < 1e-5
    assert np.max(np.abs(st.f["phi1"])) < 1e-6


def test_free_zero_data_stays_zero():
    cfg = SimConfig(n=151, dt=0.008, T=0.5, params=FREE, seed_spec={"amp": 0.0})
    sim = Simulator(cfg)
    st = sim.initial_state()
    for _ in range(20):
        st = sim.step(st, cfg.dt)
    assert np.max(np.abs(st.f["phi1"])) == 0 and np.max(np.abs(st.f["phi2"])) == 0
    assert st.boundary_block["phi1(0)"] == st.boundary_block["phi2(0)"]


def test_trivial_gluing_conserves_canonical_charges():
    rep = drift_report(run(SimConfig(n=301, dt=0.004, T=2.0, params=FREE)))
    assert rep["drift"]["E"]["rel"] <= 1e-5 and rep["drift"]["P"]["rel"] <= 1e-5


def test_closure_residual_order():
    res = []
    for n, dt in ((151, 0.008), (301, 0.004)):
        rep = drift_report(run(SimConfig(n=n, dt=dt, T=1.0)))
        res.append(max(rep["closure_residual_max"].values()))
    assert np.log2(res[0] / res[1]) >= CLOSURE_ORDER - 0.5


def test_super_step_keeps_parity():
    cfg = SimConfig(model="super_type2", n=151, dt=0.008, T=0.04)
    sim = Simulator(cfg)
    st = sim.initial_state()
    for _ in range(5):
        st = sim.step(st, cfg.dt)
    for k in ("psi1", "psibar1", "psi2", "psibar2", "f1"):
        assert st.f[k].parity() == 1
    for k in ("phi1", "phi2", "lam"):
        assert st.f[k].parity() in (0, None)


# ---- runs and monitors

def test_zero_time_single_row():
    series = run(replace(COARSE, T=0.0))
    assert len(series.rows) == 1
    ref = Simulator(COARSE)
    first = ref.charges(ref.initial_state())
    assert series.rows[0].E_mod == first.E_mod and series.rows[0].P == first.P


def test_type2_modified_charges_conserved():
    rep = drift_report(run(COARSE))
    assert rep["passed"]
    assert rep["drift"]["E_mod"]["rel"] <= 1e-6 and rep["drift"]["P_mod"]["rel"] <= 1e-6
    assert min(rep["ratio_unmodified_to_modified"].values()) >= 1e3


def test_type1_modified_momentum_conserved():
    rep = drift_report(run(replace(COARSE, model="bosonic_type1")))
    assert rep["drift"]["P_mod"]["rel"] <= 1e-6
    assert rep["drift"]["P"]["rel"] > 1e-3


def test_injected_sign_error_fails():
    rep = drift_report(run(replace(COARSE, perturb=True)))
    assert not rep["passed"]
    assert max(rep["ratio_unmodified_to_modified"].values()) < 10


def test_disabled_defect_terms_drift():
    rep = drift_report(run(replace(COARSE, disable_defect_terms=True)))
    assert not rep["passed"]
    assert rep["drift"]["E_mod"]["rel"] == rep["drift"]["E"]["rel"] > 1e-2


def test_empty_series_rejected():
    with pytest.raises(ValueError):
        drift_report(MonitorSeries(COARSE, [], []))


def test_write_outputs(tmp_path):
    series = run(replace(COARSE, T=0.04))
    summary = drift_report(series)
    paths = write_outputs(series, summary, tmp_path / "out")
    header = open(paths["csv"]).readline().strip().split(",")
    assert header[0] == "t" and "E_mod_re" in header and "closure:d phi-" in header
    assert len(open(paths["csv"]).read().splitlines()) == len(series.rows) + 1
    assert json.loads(open(paths["json"]).read())["model"] == "bosonic_type2"


def test_super_csv_has_coefficient_columns(tmp_path):
    series = run(SimConfig(model="super_type2", n=151, dt=0.008, T=0.016))
    cols = series.to_csv(tmp_path / "s.csv")
    assert any(c.startswith("Q_mod[s1]") for c in cols) or any(c.startswith("Q_mod[s2]") for c in cols)
    assert isinstance(series.rows[0], ChargeReport)

"""
Test the experiment classes end to end on small configurations
"""

import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from experiments import EXPERIMENT_CLASSES, build_initial_field, create_experiment
from field_checkpoint import load_checkpoint
from integrator import certified_timestep
from lattice_field import enstrophy, in_region_U
from run_config import EXPERIMENTS, RunConfig


def _run(ini: str, tmp: str):
    cfg = RunConfig.from_ini(ini).with_overrides(out=tmp)
    experiment = create_experiment(cfg, Path(tmp))
    paths = experiment.run()
    return cfg, {p.relative_to(tmp).as_posix() for p in paths}


def test_every_experiment_has_a_class():
    assert set(EXPERIMENT_CLASSES) == set(EXPERIMENTS)


def test_initial_data_kinds():
    base = "[physics]\nk_max = 4\n[experiment]\n"
    assert build_initial_field(RunConfig.from_ini(base + "init = zero\n")).is_zero()
    pair = build_initial_field(RunConfig.from_ini(base + "init = pair\ninit_mode = 0, 2\ninit_amplitude = 3\n"))
    assert pair.amplitude((0, 2)) == 3.0
    assert enstrophy(pair) == pytest.approx(9.0)
    cfg = RunConfig.from_ini(base + "init = saturating\nprofile = ascending\n")
    assert in_region_U(build_initial_field(cfg), cfg.norm_params())
    assert enstrophy(build_initial_field(RunConfig.from_ini(base + "init = enstrophy\nPhi0 = 2.5\n"))) == \
        pytest.approx(2.5)
    a = build_initial_field(RunConfig.from_ini(base + "init = random\n"))
    b = build_initial_field(RunConfig.from_ini(base + "init = random\n"))
    assert np.array_equal(a.amplitudes, b.amplitudes)


SIMULATE = """
[physics]
k_max = 8
reynolds = 0.0
[numerics]
h = 0.001
T = 0.2
sample_every = 10
[io]
checkpoint_interval = 50
[experiment]
name = simulate
init = pair
D_grid = 2.0, 4.0
"""


def test_simulate_pair_decay():
    with tempfile.TemporaryDirectory() as tmp:
        cfg, names = _run(SIMULATE, tmp)
        assert {"trajectory.csv", "final_field.csv"} <= names
        assert sum(name.startswith("checkpoints/") for name in names) == 4
        frame = pd.read_csv(Path(tmp) / "trajectory.csv")
        expected = np.exp(-2.0 * frame["t"].to_numpy())
        assert np.max(np.abs(frame["Phi"].to_numpy() - expected)) <= 1e-10
        assert {"in_U_decay", "minimal_D", "in_U_2", "in_U_4", "enstrophy_flux_residual"} <= set(frame.columns)
        final = load_checkpoint(Path(tmp) / "final_field.csv")
        assert final.amplitude((1, 0)) == pytest.approx(math.exp(-0.2), rel=1e-10)


def test_simulate_certified_writes_certificates():
    tau = certified_timestep(2.0, 3.5, 0.05)
    ini = f"""
[physics]
k_max = 4
reynolds = 0.0
[numerics]
mode = certified
T = {2 * tau!r}
picard_grid = 16
[experiment]
name = simulate
init = pair
"""
    with tempfile.TemporaryDirectory() as tmp:
        _, names = _run(ini, tmp)
        assert "certificates.csv" in names
        certificates = pd.read_csv(Path(tmp) / "certificates.csv")
        assert len(certificates) == 2
        assert certificates["short_time_bounds_hold"].all()
        assert certificates["D"].iloc[0] == 2.0
        assert certificates["D"].iloc[1] == pytest.approx(2.0 * math.exp(-0.5 * tau), rel=1e-12)


def test_ensemble_linear_mode_variance():
    ini = """
[physics]
k_max = 4
reynolds = 10.0
[numerics]
h = 0.05
T = 0.2
nonlinear = false
[mc]
n_traj = 400
threads = 2
[experiment]
name = ensemble
init = pair
mode_k = 1, 0, 1, 1, 0, 2
sample_times = 0.1, 0.2
D_grid = 1.0, 3.0
"""
    with tempfile.TemporaryDirectory() as tmp:
        _, names = _run(ini, tmp)
        assert {"ensemble.csv", "region_membership.csv", "region_membership.json", "mode_variance.csv",
                "mode_variance.json"} <= names
        rows = pd.read_csv(Path(tmp) / "mode_variance.csv")
        assert list(zip(rows["kx"], rows["ky"], rows["t"])) == [
            (1, 0, 0.1), (1, 0, 0.2), (1, 1, 0.1), (1, 1, 0.2), (0, 2, 0.1), (0, 2, 0.2)]
        for _, row in rows.iterrows():
            assert abs(row["mean_mode_power"] - row["linear_oracle"]) <= 5 * row["std_error"] + 1e-12
        assert rows["linear_oracle"].iloc[1] != rows["linear_oracle"].iloc[0]
        curve = pd.read_csv(Path(tmp) / "region_membership.csv")
        assert curve["p_hat"].is_monotonic_increasing


def test_verify_conservation_passes():
    ini = "[physics]\nk_max = 8\n[experiment]\nname = verify-conservation\nn_fields = 5\n"
    with tempfile.TemporaryDirectory() as tmp:
        _, names = _run(ini, tmp)
        assert names == {"conservation.csv", "conservation.json"}
        summary = json.loads((Path(tmp) / "conservation.json").read_text())
        assert summary["pass"] is True
        assert summary["n_fields"] == 5


def test_lemma1_artifacts():
    ini = """
[physics]
k_max = 4
reynolds = 10.0
[numerics]
h = 0.01
[mc]
n_traj = 20
[experiment]
name = lemma1
Phi0 = 2.0
t = 0.5
D_grid = 1.0, 2.0
n_checks = 4
"""
    with tempfile.TemporaryDirectory() as tmp:
        _, names = _run(ini, tmp)
        assert {"lemma1_tail.csv", "lemma1_tail.json", "exp_moment.json", "corollary.json"} <= names
        tail = json.loads((Path(tmp) / "lemma1_tail.json").read_text())
        assert [r["parameters"]["D"] for r in tail["results"]] == [1.0, 2.0]
        assert all(r["n_traj"] == 20 for r in tail["results"])


def test_lemma2_artifacts():
    ini = """
[physics]
k_max = 4
reynolds = 5.0
[mc]
n_traj = 50
[experiment]
name = lemma2
tau = 0.01
B_grid = 1.0, 2.0
D_grid = 1.0, 5.0
"""
    with tempfile.TemporaryDirectory() as tmp:
        _, names = _run(ini, tmp)
        assert {"ou_sup.csv", "ou_sup.json", "a_d.csv", "a_d.json"} <= names
        a_d = pd.read_csv(Path(tmp) / "a_d.csv")
        assert a_d["p_hat"].iloc[0] <= a_d["p_hat"].iloc[1]


def test_proposition_and_ladder_artifacts():
    prop = """
[physics]
k_max = 4
reynolds = 2.0
[numerics]
h = 0.01
[mc]
n_traj = 3
[experiment]
name = proposition
D_grid = 2.0
n_checks = 5
"""
    ladder = """
[physics]
k_max = 4
reynolds = 1.0
[numerics]
h = 0.01
[mc]
n_traj = 2
[experiment]
name = theorem-ladder
levels = 2
ladder_offset = 1
"""
    with tempfile.TemporaryDirectory() as tmp:
        _, names = _run(prop, tmp)
        assert {"proposition.csv", "proposition.json"} <= names
    with tempfile.TemporaryDirectory() as tmp:
        _, names = _run(ladder, tmp)
        rows = pd.read_csv(Path(tmp) / "ladder.csv")
        assert list(rows["n"]) == [0, 1]
        assert list(rows["m"]) == [1, 2]
        assert set(rows["profile"]) <= {"smooth", "ascending", "descending"}


def test_time_average_and_spectrum_artifacts():
    average = """
[physics]
k_max = 4
reynolds = 10.0
[numerics]
h = 0.01
T = 0.1
[mc]
n_traj = 2
[experiment]
name = time-average
t = 0.1
D_grid = 0.3, 2.0
"""
    spectrum = """
[physics]
k_max = 8
reynolds = 10.0
[numerics]
h = 0.01
[mc]
n_traj = 2
[experiment]
name = spectrum
T_burn = 0.2
spacing = 0.1
n_snapshots = 4
k_lo = 2
k_hi = 6
"""
    with tempfile.TemporaryDirectory() as tmp:
        _, names = _run(average, tmp)
        rows = pd.read_csv(Path(tmp) / "time_average.csv")
        assert rows["p_hat"].iloc[0] == 1.0
    with tempfile.TemporaryDirectory() as tmp:
        _, names = _run(spectrum, tmp)
        assert {"spectrum.csv", "spectrum_report.json", "analyticity.csv"} <= names
        report = json.loads((Path(tmp) / "spectrum_report.json").read_text())
        assert report["bound_exponent"] == -4.0
        assert len(pd.read_csv(Path(tmp) / "analyticity.csv")) == 4


def test_picard_certify_matches_production():
    ini = """
[physics]
k_max = 8
reynolds = 10.0
[experiment]
name = picard-certify
init = saturating
fill = 0.5
"""
    with tempfile.TemporaryDirectory() as tmp:
        _, names = _run(ini, tmp)
        assert {"picard.json", "picard_trajectory.csv"} <= names
        report = json.loads((Path(tmp) / "picard.json").read_text())
        assert report["contraction_ok"] is True
        assert report["short_time_bounds_hold"] is True
        assert report["production_deviation"] <= 1e-8


if __name__ == "__main__":
    test_simulate_pair_decay()
    test_verify_conservation_passes()
    test_picard_certify_matches_production()
    print("experiment tests passed")

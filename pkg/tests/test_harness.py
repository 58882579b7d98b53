import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from mvsim.energetics import CSV_HEADER
from mvsim.errors import ConfigError
from mvsim.fields import linf_norm
from mvsim.harness import RunConfig, parse_config, run_simulation, serialize_config
from mvsim.harness.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, EXIT_VERIFY, main
from mvsim.harness.driver import choose_dt, format_csv
from mvsim.harness.scenarios import build_scenario
from mvsim.harness.verify import observed_order, sweep
from mvsim.operators import divergence_vector
from mvsim.deformation import div_matrix_monitor


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = RunConfig()
        assert parse_config(serialize_config(cfg)) == cfg

    @given(nx=st.integers(4, 64), eps=st.floats(1e-6, 1.0), dt=st.none() | st.floats(1e-6, 1e-2),
           hv=st.booleans(), scen=st.sampled_from(["rest", "vortex+bubble", "shear", "offsphere-relax"]),
           amp=st.floats(-3, 3), seed=st.integers(0, 2**31))
    def test_round_trip(self, nx, eps, dt, hv, scen, amp, seed):
        cfg = RunConfig(nx=nx, ny=nx + 1, eps=eps, dt=dt, hyperviscosity_on=hv, scenario=scen,
                        vortex_amp=amp, seed=seed)
        text = serialize_config(cfg)
        again = parse_config(text)
        assert again == cfg and serialize_config(again) == text

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# comment\n\nnx = 8   # trailing\nny=8\ndt = auto\nhyperviscosity_on = off\n")
        assert (cfg.nx, cfg.ny, cfg.dt, cfg.hyperviscosity_on) == (8, 8, None, False)

    @pytest.mark.parametrize("text", [
        "bogus = 1\n", "nx = 8\nnx = 16\n", "nx = 8.5\n", "nx\n", "eps = \n", "eps = -1\n",
        "scenario = tornado\n", "hext = spiral\n", "hyperviscosity_on = maybe\n", "nx = 3\n",
        "output_stride = 0\n", "cfl_safety = 1.5\n", "advection = weno\n", "threads = 0\n",
    ])
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match="line 2: unknown key 'colour'"):
            parse_config("nx = 8\ncolour = red\n")

    def test_thread_override(self, monkeypatch):
        cfg = RunConfig(threads=2)
        monkeypatch.delenv("MVSIM_THREADS", raising=False)
        assert cfg.effective_threads() == 2
        monkeypatch.setenv("MVSIM_THREADS", "3")
        assert cfg.effective_threads() == 3
        monkeypatch.setenv("MVSIM_THREADS", "x")
        with pytest.raises(ConfigError):
            cfg.effective_threads()


class TestScenarios:
    @pytest.mark.parametrize("scen", ["rest", "shear", "vortex", "bubble", "vortex+bubble", "shear+vortex"])
    @pytest.mark.parametrize("f0", ["identity", "curl"])
    def test_invariants(self, scen, f0):
        sc = build_scenario(RunConfig(nx=24, ny=20, Lx=1.2, scenario=scen, f0=f0, f0_amp=0.2))
        assert linf_norm(divergence_vector(sc.u0)) <= 1e-12
        assert div_matrix_monitor(sc.F0)[1] <= 1e-12
        assert np.max(np.abs(sc.M0.norm() - 1.0)) <= 1e-12
        assert np.all(sc.u0.u[[0, -1]] == 0) and np.all(sc.u0.v[:, [0, -1]] == 0)

    def test_offsphere_violates_constraint(self):
        sc = build_scenario(RunConfig(scenario="offsphere-relax", offsphere_amp=2.0))
        assert np.all(sc.M0.norm() == 2.0)

    def test_external_presets(self):
        assert build_scenario(RunConfig(hext="zero")).Hext is None
        H = build_scenario(RunConfig(hext="uniform", hext_amp=0.5)).Hext
        assert np.all(H.data[2] == 0.5) and np.all(H.data[:2] == 0)

    def test_auto_dt_hits_t_end(self):
        cfg = RunConfig(nx=16, ny=16, t_end=0.01)
        sc = build_scenario(cfg)
        from mvsim.fields import ScalarField, StateSnapshot
        dt, steps = choose_dt(cfg, StateSnapshot(0.0, sc.u0, ScalarField.zeros(cfg.domain()), sc.F0, sc.M0))
        assert dt * steps == pytest.approx(0.01, rel=1e-14)
        assert dt <= 0.5 * cfg.domain().h ** 2 / 8


class TestRun:
    def test_rest_rows_zero(self, tmp_path):
        cfg = RunConfig(nx=16, ny=16, scenario="rest", dt=1e-4, t_end=1e-3, output_dir=str(tmp_path))
        res = run_simulation(cfg)
        assert res.steps == 10
        rows = read_rows(tmp_path / "diagnostics.csv")
        assert len(rows) == 11
        for r in rows:
            assert float(r["max_abs_M"]) == 1.0
            assert all(float(v) == 0.0 for k, v in r.items() if k not in ("t", "max_abs_M"))

    def test_csv_header_and_stride(self, tmp_path):
        cfg = RunConfig(nx=16, ny=16, t_end=0.002, dt=1e-4, output_stride=7)
        res = run_simulation(cfg, out_dir=tmp_path)
        text = (tmp_path / "diagnostics.csv").read_text()
        assert text.splitlines()[0] == CSV_HEADER
        ts = [float(r["t"]) for r in read_rows(tmp_path / "diagnostics.csv")]
        assert ts[0] == 0.0 and ts[-1] == pytest.approx(0.002) and len(ts) == 1 + 20 // 7 + 1
        assert res.summary.startswith("OK t_end=0.002 residual=")

    def test_snapshots_written(self, tmp_path):
        from mvsim.fields import read_field
        cfg = RunConfig(nx=8, ny=8, t_end=4e-4, dt=1e-4, snapshot_stride=2)
        res = run_simulation(cfg, out_dir=tmp_path)
        names = sorted(p.name for p in tmp_path.glob("snap_*_M.txt"))
        assert names == ["snap_000000_M.txt", "snap_000002_M.txt", "snap_000004_M.txt"]
        _, M, t = read_field(tmp_path / "snap_000004_M.txt")
        assert t == pytest.approx(4e-4) and np.array_equal(M.data, res.final.M.data)

    def test_deterministic(self, tmp_path):
        cfg = RunConfig(nx=16, ny=16, t_end=0.005, hext="gradient", hext_amp=0.3, f0="curl")
        run_simulation(cfg, out_dir=tmp_path / "a")
        run_simulation(cfg, out_dir=tmp_path / "b")
        assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()

    def test_offsphere_penalty_column(self):
        # uniform relaxation on a coarse box: the penalty column follows the
        # explicit scalar recurrence exactly and the scalar ODE to first order
        base = RunConfig(Lx=8.0, Ly=8.0, nx=4, ny=4, eps=1.0, scenario="offsphere-relax", offsphere_amp=2.0,
                         evolve_u=False, t_end=1.0)
        ode = solve_ivp(lambda t, q: -2 * (q - 1) * q, (0, 1), [4.0], rtol=1e-12, atol=1e-14)
        exact = 64.0 * (ode.y[0, -1] - 1.0) ** 2 / 4.0
        errs = []
        for dt in (0.01, 0.005, 0.0025):
            res = run_simulation(base.with_(dt=dt), write=False)
            s = 2.0
            for _ in range(res.steps):
                s = s - dt * (s * s - 1.0) * s
            pen = res.rows[-1]["e_penalty"]
            assert pen == pytest.approx(64.0 * (s * s - 1.0) ** 2 / 4.0, rel=1e-12)
            errs.append(abs(pen - exact))
        assert np.all(np.abs(observed_order(errs) - 1.0) < 0.1)

    def test_hyperviscosity_small_effect(self):
        energies = []
        for hv in (True, False):
            cfg = RunConfig(nx=32, ny=32, eps=1e-3, t_end=0.05, hyperviscosity_on=hv, output_stride=1000)
            energies.append(run_simulation(cfg, write=False).ledger.energy)
        assert abs(energies[0] - energies[1]) <= 0.05 * energies[1]

    def test_format_normalizes_negative_zero(self):
        row = {c: 0.0 for c in CSV_HEADER.split(",")}
        row["residual"] = -0.0
        assert "-0" not in format_csv([row])


class TestSweep:
    def test_repeated_eps_gives_zero_proxy(self, tmp_path):
        cfg = RunConfig(nx=8, ny=8, scenario="offsphere-relax", offsphere_profile="vortex", t_end=2e-3)
        rep = sweep(cfg, [1e-2, 1e-2, 1e-2], tmp_path)
        rows = read_rows(tmp_path / "sweep.csv")
        assert [k for k in rows[0]] == ["eps", "defect_l2_sup", "energy_final", "proxy"]
        assert np.isnan(float(rows[0]["proxy"]))
        assert all(float(r["proxy"]) == 0.0 for r in rows[1:])
        assert rows[0]["defect_l2_sup"] == rows[2]["defect_l2_sup"]
        assert rep.passed and "distinct" in rep.data["fit_skipped"]


class TestCli:
    def test_run(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "nx = 16\nny = 16\nt_end = 0.002\n")
        assert main(["run", cfg, "--out", str(tmp_path / "out")]) == EXIT_OK
        line = capsys.readouterr().out.strip()
        assert line.startswith("OK t_end=0.002 residual=") and " maxM=" in line
        assert (tmp_path / "out" / "diagnostics.csv").exists()

    def test_config_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "nx = 16\nwidth = 2\n")
        assert main(["run", cfg]) == EXIT_CONFIG
        assert "ConfigError" in capsys.readouterr().err
        assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG

    def test_unstable_dt_is_config_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "nx = 32\nny = 32\ndt = 0.01\nt_end = 0.02\n")
        assert main(["run", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG
        assert "[stage magnetization, step 1]" in capsys.readouterr().err

    def test_solver_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "nx = 16\nny = 16\nevolve_M = false\nevolve_F = false\n"
                                  "vortex_amp = 1e200\ndt = 0.01\nt_end = 0.02\n")
        with np.errstate(over="ignore", invalid="ignore"):
            assert main(["run", cfg, "--out", str(tmp_path)]) == EXIT_SOLVER
        assert "NonFiniteError" in capsys.readouterr().err

    def test_verify(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "nx = 16\nny = 16\n")
        assert main(["verify", cfg]) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and "PASS transport gap u=0: 0.000000e+00" in out

    def test_verify_failure(self, tmp_path, capsys):
        # at 4x4 the refinement is far from asymptotic and the shrink checks fail
        cfg = write_cfg(tmp_path, "nx = 4\nny = 4\n")
        assert main(["verify", cfg, "--refine"]) == EXIT_VERIFY
        assert "FAIL" in capsys.readouterr().out

    def test_sweep_needs_eps(self, tmp_path):
        cfg = write_cfg(tmp_path, "nx = 8\nny = 8\n")
        with pytest.raises(SystemExit):
            main(["sweep", cfg])
        with pytest.raises(SystemExit):
            main(["sweep", cfg, "--eps", "a,b"])

    def test_sweep_too_few_eps(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "nx = 8\nny = 8\nscenario = offsphere-relax\nt_end = 0.001\n")
        code = main(["sweep", cfg, "--eps", "0.1,0.01", "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert "at least 3 eps" in capsys.readouterr().err


def test_csv_is_parseable_numbers(tmp_path):
    cfg = RunConfig(nx=8, ny=8, t_end=5e-4, dt=1e-4)
    run_simulation(cfg, out_dir=tmp_path)
    body = (tmp_path / "diagnostics.csv").read_text()
    data = np.loadtxt(io.StringIO(body), delimiter=",", skiprows=1)
    assert data.shape == (6, 13) and np.all(np.isfinite(data))

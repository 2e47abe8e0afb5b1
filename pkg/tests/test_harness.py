import numpy as np
import pytest

from projsqp import ConfigInvalid, EmptyTrajectory, NotPositiveDefinite
from projsqp.cli import main
from projsqp.harness import (
    CSV_HEADER,
    ExperimentConfig,
    apply_overrides,
    config_from_mapping,
    iters_per_epoch,
    load_checkpoint,
    parse_config_file,
    run_experiment,
    run_sweep,
    substream,
)


def quick_config(**kw):
    base = dict(problem="linear", optimizer="sqp-adam", iters=50, alpha=0.1)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfigParsing:
    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(
            "# comment line\n"
            "problem=circle\n"
            "optimizer=sqp-adam\n"
            "iters=100\n"
            "alpha=0.01  # trailing comment\n"
            "widths=1,8,1\n"
        )
        mapping = parse_config_file(path)
        config = config_from_mapping(mapping)
        assert config.problem == "circle"
        assert config.alpha == 0.01
        assert config.widths == (1, 8, 1)
        override = config_from_mapping(apply_overrides(mapping, ["alpha=0.5", "seed=9"]))
        assert override.alpha == 0.5
        assert override.seed == 9

    def test_unknown_key(self):
        with pytest.raises(ConfigInvalid) as err:
            config_from_mapping({"problem": "circle", "optimizer": "sqp",
                                 "iters": "1", "alpha": "0.1", "learning_rate": "3"})
        assert err.value.field == "learning_rate"

    def test_field_level_messages(self):
        with pytest.raises(ConfigInvalid) as err:
            quick_config(alpha=2.0).validate()
        assert err.value.field == "hyper"
        with pytest.raises(ConfigInvalid) as err:
            quick_config(iters=0).validate()
        assert err.value.field == "iters"
        with pytest.raises(ConfigInvalid) as err:
            quick_config(problem="banana").validate()
        assert err.value.field == "problem"

    def test_missing_required_key(self):
        with pytest.raises(ConfigInvalid):
            config_from_mapping({"problem": "circle"})

    def test_epochs_sugar(self):
        mapping = dict(problem="spring", optimizer="sqp-adam", epochs="10",
                       alpha="0.0005", batch_fraction="0.5")
        config = config_from_mapping(mapping)
        assert config.iters == 20  # two batches of 15 per epoch
        assert iters_per_epoch("spring", 0.5) == 2
        assert iters_per_epoch("circle", 1.0) == 1
        with pytest.raises(ConfigInvalid):
            config_from_mapping({**mapping, "iters": "5"})


class TestRunExperiment:
    def test_single_iteration_single_record(self):
        result = run_experiment(quick_config(iters=1))
        assert len(result.records) == 1
        assert result.records[0].k == 1

    def test_stride_plus_final(self):
        result = run_experiment(quick_config(iters=12, stride=5))
        assert [r.k for r in result.records] == [5, 10, 12]

    def test_byte_identical_reruns(self, tmp_path):
        config = quick_config(problem="circle", optimizer="sqp-adam", iters=200,
                              noise_sigma=0.05, seed=3,
                              out=str(tmp_path / "a"))
        run_experiment(config)
        first_csv = (tmp_path / "a.csv").read_bytes()
        first_ckpt = (tmp_path / "a.ckpt").read_bytes()
        run_experiment(config)
        assert (tmp_path / "a.csv").read_bytes() == first_csv
        assert (tmp_path / "a.ckpt").read_bytes() == first_ckpt

    def test_csv_schema(self, tmp_path):
        config = quick_config(out=str(tmp_path / "r"))
        run_experiment(config)
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[0] == "k,f,cviol_l1,proj_grad_sq,merit,dnorm,eta,wall_s"
        # deterministic timing default: wall column is zero
        assert all(line.rsplit(",", 1)[1] == "0.0" for line in lines[1:])

    def test_checkpoint_round_trip(self, tmp_path):
        config = quick_config(iters=30, out=str(tmp_path / "c"))
        result = run_experiment(config)
        widths, theta, state = load_checkpoint(tmp_path / "c.ckpt")
        assert widths is None  # analytic problem
        np.testing.assert_array_equal(theta, result.final_theta)
        assert state.k == 30
        np.testing.assert_array_equal(state.r, result.final_state.r)
        np.testing.assert_array_equal(state.s, result.final_state.s)

    def test_spring_checkpoint_keeps_widths(self, tmp_path):
        config = ExperimentConfig(problem="spring", optimizer="sqp-heavyball",
                                  iters=3, alpha=5e-4, widths=(1, 4, 1),
                                  out=str(tmp_path / "s"))
        result = run_experiment(config)
        widths, theta, state = load_checkpoint(tmp_path / "s.ckpt")
        assert widths == (1, 4, 1)
        assert theta.shape == result.final_theta.shape
        assert not hasattr(state, "s")

    def test_rank_deficiency_reports_iteration(self):
        config = quick_config(problem="circle", x0=(0.0, 0.0), iters=5)
        with pytest.raises(NotPositiveDefinite) as err:
            run_experiment(config)
        assert "iteration 1" in str(err.value)

    def test_feasibility_tracked(self):
        result = run_experiment(quick_config(problem="circle", iters=400, alpha=0.01))
        assert result.max_feas_viol <= 1e-7

    def test_unconstrained_run_records_violation(self):
        result = run_experiment(quick_config(problem="circle", optimizer="adam-unc",
                                             iters=50, alpha=0.05))
        assert result.max_feas_viol == 0.0  # nothing to track without constraints
        assert result.records[-1].cviol_l1 > 0.0  # but the metric is still reported

    def test_timing_mode_breaks_no_schema(self, tmp_path):
        config = quick_config(iters=5, timing=True, out=str(tmp_path / "t"))
        run_experiment(config)
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert float(lines[-1].rsplit(",", 1)[1]) > 0.0


class TestSeedStreams:
    def test_named_streams_are_stable(self):
        a = substream(7, "init").standard_normal(4)
        b = substream(7, "init").standard_normal(4)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent(self):
        init = substream(7, "init").standard_normal(4)
        _ = substream(7, "batch").standard_normal(100)
        _ = substream(7, "noise").standard_normal(100)
        np.testing.assert_array_equal(init, substream(7, "init").standard_normal(4))

    def test_different_seeds_differ(self):
        assert not np.array_equal(
            substream(1, "init").standard_normal(4),
            substream(2, "init").standard_normal(4),
        )


class TestSweep:
    def test_five_seed_summary(self, tmp_path):
        from dataclasses import replace
        base = quick_config(problem="circle", iters=150, noise_sigma=0.1, alpha=0.02)
        configs = [replace(base, seed=s) for s in range(5)]
        outcome = run_sweep(configs, summary_path=tmp_path / "sum.csv")
        assert len(outcome.summary_rows) == 1
        row = outcome.summary_rows[0]
        assert row["n"] == 5
        finals = [r.final_record.cviol_l1 for r in outcome.results]
        assert row["final_cviol_mean"] == pytest.approx(np.mean(finals))
        assert row["final_cviol_std"] == pytest.approx(np.std(finals, ddof=1))
        header = (tmp_path / "sum.csv").read_text().splitlines()[0]
        assert header.startswith("group,n,failures,final_f_mean")

    def test_empty_sweep_rejected(self):
        with pytest.raises(EmptyTrajectory):
            run_sweep([])

    def test_failures_isolated(self):
        from dataclasses import replace
        base = quick_config(problem="circle", iters=20)
        good = replace(base, seed=0)
        bad = replace(base, seed=1, x0=(0.0, 0.0))  # rank-deficient from start
        outcome = run_sweep([good, bad])
        assert outcome.errors[0] is None
        assert "NotPositiveDefinite" in outcome.errors[1]
        assert outcome.summary_rows[0]["failures"] == 1
        assert outcome.summary_rows[0]["n"] == 1

    def test_parallel_matches_sequential(self, tmp_path):
        from dataclasses import replace
        base = quick_config(problem="circle", iters=100, noise_sigma=0.05)
        seq_configs = [replace(base, seed=s, out=str(tmp_path / f"seq{s}")) for s in range(2)]
        par_configs = [replace(base, seed=s, out=str(tmp_path / f"par{s}")) for s in range(2)]
        run_sweep(seq_configs, n_jobs=1)
        run_sweep(par_configs, n_jobs=2)
        for s in range(2):
            assert (tmp_path / f"seq{s}.csv").read_bytes() == (tmp_path / f"par{s}.csv").read_bytes()


class TestCli:
    def test_run_and_exit_codes(self, tmp_path, capsys):
        cfg = tmp_path / "ok.cfg"
        cfg.write_text("problem=linear\noptimizer=sqp\niters=20\nalpha=0.1\n")
        assert main(["run", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "run finished" in out

    def test_config_error_is_exit_one(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("problem=linear\noptimizer=sqp\niters=20\nalpha=7\n")
        assert main(["run", "--config", str(cfg)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_numerical_failure_is_exit_two(self, tmp_path, capsys):
        cfg = tmp_path / "sing.cfg"
        cfg.write_text("problem=circle\noptimizer=sqp\niters=5\nalpha=0.1\nx0=0,0\n")
        assert main(["run", "--config", str(cfg)]) == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_set_overrides(self, tmp_path):
        cfg = tmp_path / "o.cfg"
        cfg.write_text("problem=linear\noptimizer=sqp\niters=5\nalpha=0.1\n")
        out = tmp_path / "traj"
        assert main(["run", "--config", str(cfg), "--set", f"out={out}"]) == 0
        assert (tmp_path / "traj.csv").exists()
        assert (tmp_path / "traj.ckpt").exists()

    def test_sweep_cli(self, tmp_path, capsys):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("problem=circle\noptimizer=sqp-adam\niters=30\nalpha=0.05\n"
                       f"out={tmp_path / 'run'}\n")
        assert main(["sweep", "--config", str(cfg), "--seeds", "3"]) == 0
        for seed in range(3):
            assert (tmp_path / f"run_seed{seed}.csv").exists()
        assert (tmp_path / "run_summary.csv").exists()
        assert "n=3" in capsys.readouterr().out

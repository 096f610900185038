import io

import pandas as pd
import pytest
import yaml

from ismdp.cli import main


def write_config(tmp_path, body, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(body))
    return str(path)


@pytest.fixture
def exponential_config():
    return {"distribution": {"family": "exponential", "rate": 1.0}, "seed": 3}


def test_rate_structured(tmp_path, exponential_config):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "rate": {"p": 0.05, "q_grid": [0.01], "z_grid": [0.0, 1.0]},
        },
    )
    out = tmp_path / "rate.yaml"
    status = main(
        ["rate", "--config", config, "--out", str(out), "--format", "structured"]
    )
    assert status == 0
    record = yaml.safe_load(out.read_text())
    assert record["sigma_p_sq"] == pytest.approx(39.0, abs=1e-6)
    assert record["sigma_qp_sq"][0]["value"] == pytest.approx(18.4845, abs=1e-3)
    assert record["es_rate"][0] == {"z": 0.0, "value": 0.0}


def test_rate_tilted_kappa(tmp_path, exponential_config):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "scheme": {"family": "exponential", "rate": 0.5},
            "rate": {"p": 0.05, "q_grid": [0.1], "delta_grid": [0.5]},
        },
    )
    out = tmp_path / "rate.csv"
    assert main(["rate", "--config", config, "--out", str(out)]) == 0
    table = pd.read_csv(out)
    kappa3 = table.loc[table["quantity"] == "kappa3", "value"].iloc[0]
    assert kappa3 == pytest.approx(3.88637, abs=1e-4)


def test_estimate(tmp_path, exponential_config, capsys):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "estimate": {
                "target": {"kind": "expected_shortfall", "p": 0.05},
                "n": 20000,
            },
        },
    )
    assert main(["estimate", "--config", config]) == 0
    table = pd.read_csv(io.StringIO(capsys.readouterr().out))
    row = table.iloc[0]
    assert row["truth"] == pytest.approx(3.995732, abs=1e-6)
    assert row["estimate"] == pytest.approx(3.995732, abs=0.25)
    assert row["half_width"] == pytest.approx(
        (2 * 39.0 * 2.995732274 / 20000) ** 0.5, rel=1e-6
    )
    assert row["total_mass"] == pytest.approx(1.0)
    assert row["effective_sample_size"] == pytest.approx(20000)
    assert not row["mass_deficient"]


@pytest.mark.slow
def test_estimate_large_sample(tmp_path, exponential_config):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "estimate": {
                "target": {"kind": "expected_shortfall", "p": 0.05},
                "n": 1_000_000,
            },
        },
    )
    out = tmp_path / "estimate.yaml"
    status = main(
        ["estimate", "--config", config, "--out", str(out), "--format", "structured"]
    )
    assert status == 0
    record = yaml.safe_load(out.read_text())
    assert record["estimate"] == pytest.approx(3.995732, abs=0.03)


def test_estimate_dumps_atoms(tmp_path, exponential_config):
    dump = tmp_path / "atoms.csv"
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "estimate": {
                "target": {"kind": "quantile", "p": 0.1},
                "n": 100,
                "dump": str(dump),
            },
        },
    )
    assert main(["estimate", "--config", config, "--out", str(tmp_path / "e.csv")]) == 0
    assert dump.read_text().startswith("# n=100\n")


def test_malformed_config_writes_nothing(tmp_path, exponential_config):
    config = write_config(tmp_path, {**exponential_config, "rate": {"p": 2.0}})
    out = tmp_path / "never.csv"
    assert main(["rate", "--config", config, "--out", str(out)]) == 2
    assert not out.exists()
    unknown = write_config(tmp_path, {**exponential_config, "colour": 1}, "u.yaml")
    assert main(["rate", "--config", unknown, "--out", str(out)]) == 2
    assert not out.exists()


def test_missing_section_is_a_config_error(tmp_path, exponential_config):
    config = write_config(tmp_path, exponential_config)
    assert main(["experiment", "--config", config]) == 2


def test_infeasible_scheme_exits_3(tmp_path, exponential_config, capsys):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "scheme": {"family": "exponential", "rate": 2.0},
            "estimate": {"target": {"kind": "quantile", "p": 0.1}, "n": 100},
        },
    )
    assert main(["estimate", "--config", config]) == 3
    assert "diverges" in capsys.readouterr().err


def test_numeric_failure_exits_4(tmp_path):
    config = write_config(
        tmp_path,
        {
            "distribution": {"family": "pareto", "alpha": 1.5},
            "rate": {"p": 0.05},
        },
    )
    assert main(["rate", "--config", config]) == 4


def test_heavy_pareto_audit_fails(tmp_path):
    config = write_config(
        tmp_path,
        {"distribution": {"family": "pareto", "alpha": 1.5, "scale": 1.0}, "audit": {}},
    )
    out = tmp_path / "audit.yaml"
    status = main(
        ["audit", "--config", config, "--out", str(out), "--format", "structured"]
    )
    assert status == 5
    record = yaml.safe_load(out.read_text())
    assert record["checks"]["A1"]["verdict"] == "fail"


def test_audit_passes_with_karamata(tmp_path):
    config = write_config(
        tmp_path,
        {
            "distribution": {"family": "pareto", "alpha": 3.0},
            "audit": {"karamata_grid": [10, 20, 40, 80]},
        },
    )
    out = tmp_path / "audit.csv"
    assert main(["audit", "--config", config, "--out", str(out)]) == 0
    table = pd.read_csv(out).set_index("check")
    assert table.loc["karamata", "verdict"] == "pass"
    assert table.loc["A4", "verdict"] == "pass"


def test_tiny_experiment(tmp_path, exponential_config):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "experiment": {
                "target": {"kind": "expected_shortfall", "p": 0.1},
                "n_grid": [20, 40],
                "replications": 2,
                "delta_grid": [1000.0],
            },
        },
    )
    out = tmp_path / "experiment.csv"
    assert main(["experiment", "--config", config, "--out", str(out)]) == 0
    table = pd.read_csv(out)
    assert list(table["n"]) == [20, 40]
    assert table["censored_1000"].all()
    assert (table["p_hat_1000"] == 0.5).all()


def test_experiment_output_is_reproducible(tmp_path, exponential_config):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "experiment": {
                "target": {"kind": "quantile", "p": 0.1},
                "n_grid": [50, 100],
                "replications": 6,
                "delta_grid": [0.5],
            },
        },
    )
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["experiment", "--config", config, "--seed", "8"]
    status = main([*args, "--out", str(first)])
    assert status == 0
    assert main([*args, "--workers", "2", "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_experiment_structured_has_decay(tmp_path, exponential_config):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "output": {"format": "structured"},
            "experiment": {
                "target": {"kind": "expected_shortfall", "p": 0.1},
                "n_grid": [20, 40, 80],
                "replications": 4,
                "delta_grid": [0.5],
            },
        },
    )
    out = tmp_path / "experiment.yaml"
    assert main(["experiment", "--config", config, "--out", str(out)]) == 0
    record = yaml.safe_load(out.read_text())
    assert len(record["rows"]) == 3
    assert record["decay"][0]["delta"] == 0.5


def test_compare_lists_tilt_first(tmp_path, exponential_config):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "compare": {
                "schemes": ["unit", {"family": "exponential", "rate": 0.5}],
                "target": {"kind": "expected_shortfall", "p": 0.05},
            },
        },
    )
    out = tmp_path / "compare.csv"
    assert main(["compare", "--config", config, "--out", str(out)]) == 0
    table = pd.read_csv(out)
    assert table["scheme"].iloc[0].startswith("exponential_tilt")
    assert table["rank"].iloc[0] == 1


def test_seed_override_changes_estimate(tmp_path, exponential_config, capsys):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "estimate": {"target": {"kind": "quantile", "p": 0.1}, "n": 500},
        },
    )
    main(["estimate", "--config", config, "--seed", "1"])
    first = capsys.readouterr().out
    main(["estimate", "--config", config, "--seed", "2"])
    second = capsys.readouterr().out
    main(["estimate", "--config", config, "--seed", "1"])
    assert capsys.readouterr().out == first
    assert first != second


COMMANDS = ["estimate", "rate", "audit", "experiment", "compare"]


@pytest.mark.parametrize("command", COMMANDS)
def test_help_lists_keys(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for key in ("override_feasibility", "karamata_grid", "n_grid", "--log-level"):
        assert key in text


def test_non_numeric_target_level_exits_2(tmp_path, exponential_config, capsys):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "estimate": {"target": {"kind": "quantile", "p": "abc"}, "n": 100},
        },
    )
    out = tmp_path / "never.csv"
    assert main(["estimate", "--config", config, "--out", str(out)]) == 2
    assert not out.exists()
    assert "must be a number" in capsys.readouterr().err


def test_common_flags_before_the_command(tmp_path, exponential_config):
    config = write_config(
        tmp_path, {**exponential_config, "rate": {"p": 0.05, "q_grid": [0.01]}}
    )
    out = tmp_path / "rate.yaml"
    status = main(
        ["--config", config, "--format", "structured", "rate", "--out", str(out)]
    )
    assert status == 0
    record = yaml.safe_load(out.read_text())
    assert record["sigma_p_sq"] == pytest.approx(39.0, abs=1e-6)


def test_command_flags_override_global_ones(tmp_path, exponential_config, capsys):
    config = write_config(
        tmp_path,
        {
            **exponential_config,
            "estimate": {"target": {"kind": "quantile", "p": 0.1}, "n": 500},
        },
    )
    main(["--seed", "1", "estimate", "--config", config, "--seed", "2"])
    overridden = capsys.readouterr().out
    main(["estimate", "--config", config, "--seed", "2"])
    assert capsys.readouterr().out == overridden


def test_missing_config_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["rate"])
    assert exc.value.code == 2

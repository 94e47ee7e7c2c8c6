"""TOML loading and the four CLI subcommands, run in process.

CLI tests use shrunken configs (coarse grids, short horizons) so the
whole file stays around ten seconds; the full-size default runs are the
acceptance tests' job.
"""
import numpy as np
import pytest

from traitlab import ConfigError
from traitlab.cli import main, make_parser
from traitlab.config import config_from_mapping, load_config

FULL_TOML = """
[run]
model = "sexual_renormalized"
epsilon = 0.25
n_points = 512
t_end = 0.05
x0 = 0.2
k0 = 3
strict_hypotheses = true

[mortality]
kind = "quartic_well"
a = 0.8
b = 0.2
window = 0.6

[sweep]
epsilons = [0.4, 0.3, 0.2]
beta = 1.4
t_star_factor = 2.0

[suite]
n_densities = 4
seed = 99

[asexual]
s_values = [1.0, 3.0]
epsilon = 0.08
n_points = 512
t_end_asexual = 0.8
compare_from = 0.4
"""


def write_toml(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_load_config_defaults():
    cfg = load_config(None)
    assert cfg.run.model == "sexual_full"
    assert cfg.run.mortality.kind == "quadratic"
    assert cfg.sweep_epsilons == (0.4, 0.28, 0.2, 0.14, 0.1, 0.07, 0.05)
    assert cfg.beta == 1.5
    assert cfg.t_star_factor == 10.0
    assert cfg.suite_overrides == {}


def test_load_config_full_file(tmp_path):
    cfg = load_config(write_toml(tmp_path, FULL_TOML))
    run = cfg.run
    assert run.model == "sexual_renormalized"
    assert run.epsilon == 0.25
    assert run.n_points == 512 and isinstance(run.n_points, int)
    assert run.k0 == 3
    assert run.strict_hypotheses is True
    assert run.mortality.kind == "quartic_well"
    assert run.mortality.params == (0.8, 0.2)
    assert run.mortality.window == 0.6
    assert cfg.sweep_epsilons == (0.4, 0.3, 0.2)
    assert cfg.beta == 1.4
    assert cfg.suite_overrides == {"n_densities": 4, "seed": 99}
    assert cfg.contrast.s_values == (1.0, 3.0)
    assert cfg.contrast.epsilon == 0.08


def test_load_config_missing_or_broken_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nowhere.toml"))
    with pytest.raises(ConfigError):
        load_config(write_toml(tmp_path, "[run\nepsilon = "))


@pytest.mark.parametrize("mapping", [
    {"runs": {}},                                   # unknown table
    {"run": {"epsilonn": 0.2}},                     # typo key
    {"run": {"n_points": 512.5}},                   # float for int
    {"run": {"n_points": True}},                    # bool for int
    {"run": {"r": True}},                           # bool for float
    {"run": {"strict_hypotheses": "yes"}},          # string for bool
    {"run": {"model": 3}},                          # number for string
    {"run": 7},                                     # table is not a table
    {"mortality": {"kind": "linear"}},              # unknown profile
    {"mortality": {"kind": "quadratic", "a": 1.0}},  # wrong parameter
    {"mortality": {"kind": "tabulated", "x": [0, 1, 2, 3]}},  # missing m
    {"sweep": {"epsilons": []}},                    # empty ladder
    {"sweep": {"epsilons": 0.2}},                   # scalar ladder
    {"sweep": {"gamma": 1.0}},                      # unknown sweep key
    {"suite": {"n_density": 2}},                    # unknown suite key
    {"asexual": {"s_values": [1.0]}},               # needs two entries
])
def test_invalid_mappings_are_rejected(mapping):
    with pytest.raises(ConfigError):
        config_from_mapping(mapping)


def test_error_messages_name_the_table():
    with pytest.raises(ConfigError, match=r"\[run\]"):
        config_from_mapping({"run": {"epsilonn": 0.2}})
    with pytest.raises(ConfigError, match="allowed"):
        config_from_mapping({"suite": {"n_density": 2}})


def test_parser_subcommands_and_flags():
    parser = make_parser()
    args = parser.parse_args(["sweep", "--config", "x.toml", "--out-dir",
                              "results", "--threads", "2", "--seed", "7"])
    assert args.command == "sweep"
    assert args.config == "x.toml"
    assert args.out_dir == "results"
    assert args.threads == 2
    assert args.seed == 7
    assert args.emit_plots is False
    with pytest.raises(SystemExit):
        parser.parse_args(["transmogrify"])


SIM_TOML = """
[run]
model = "sexual_renormalized"
epsilon = 0.2
n_points = 512
t_end = 0.05

[mortality]
kind = "quadratic"
s = 1.0
"""


def test_cli_simulate_writes_trajectory(tmp_path, capsys):
    cfg = write_toml(tmp_path, SIM_TOML)
    code = main(["simulate", "--config", cfg, "--out-dir",
                 str(tmp_path / "out"), "--emit-plots"])
    assert code == 0
    out = capsys.readouterr().out
    assert "invariants: pass" in out
    traj = tmp_path / "out" / "trajectory.csv"
    assert traj.exists()
    header = traj.read_text().split("\n", 1)[0]
    assert header == ("t,rho,M1,M2c,M4c,M2k0c,W1_to_ansatz,"
                      "mass_drift,min_value")
    assert (tmp_path / "out" / "trajectory.svg").exists()


SWEEP_TOML = """
[run]
model = "sexual_full"
n_points = 512
t_end = 0.3

[sweep]
epsilons = [0.4, 0.2, 0.1]
t_star_factor = 1.0
"""


def test_cli_sweep_writes_records_and_fits(tmp_path, capsys):
    cfg = write_toml(tmp_path, SWEEP_TOML)
    out_dir = tmp_path / "out"
    code = main(["sweep", "--config", cfg, "--out-dir", str(out_dir),
                 "--emit-plots"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "slope" in stdout
    records = (out_dir / "sweep_records.csv").read_text()
    assert records.startswith("epsilon,sup_W1,")
    assert len(records.strip().split("\n")) == 4
    fits = (out_dir / "sweep_fits.csv").read_text()
    assert fits.startswith("field,window,slope,")
    assert (out_dir / "sweep_rates.svg").exists()


FAILING_SWEEP_TOML = """
[run]
model = "asexual_full"
n_points = 512
t_end = 0.3
mutation_std = 0.5

[sweep]
epsilons = [0.4, 0.2, 0.1]
t_star_factor = 1.0
"""


def test_cli_sweep_reports_dropped_point(tmp_path):
    # The smallest epsilon cannot resolve its mutation kernel, so its
    # record is dropped and the exit code flags the incomplete ladder.
    cfg = write_toml(tmp_path, FAILING_SWEEP_TOML)
    out_dir = tmp_path / "out"
    with pytest.warns(UserWarning):
        code = main(["sweep", "--config", cfg, "--out-dir", str(out_dir)])
    assert code == 1
    records = (out_dir / "sweep_records.csv").read_text()
    assert len(records.strip().split("\n")) == 3  # header + 2 rows


VALIDATE_TOML = """
[suite]
n_densities = 2
n_pairs = 2
t_end = 0.1
"""


@pytest.mark.filterwarnings("ignore::traitlab.TailTruncationWarning")
def test_cli_validate_and_seed_flag(tmp_path, capsys):
    cfg = write_toml(tmp_path, VALIDATE_TOML)
    out_dir = tmp_path / "out"
    code = main(["validate", "--config", cfg, "--out-dir", str(out_dir),
                 "--seed", "31415"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert stdout.count(": pass") == 10
    report = (out_dir / "suite_report.csv").read_text()
    assert report.startswith("check_name,pass,value,threshold\n")
    assert report.count(",true,") == 10


ASEXUAL_TOML = """
[asexual]
epsilon = 0.08
n_points = 512
t_end_asexual = 0.8
t_end_sexual = 0.1
compare_from = 0.4
locking_band = 0.06
"""


@pytest.mark.filterwarnings("ignore::traitlab.TailTruncationWarning")
def test_cli_asexual_contrast(tmp_path, capsys):
    cfg = write_toml(tmp_path, ASEXUAL_TOML)
    out_dir = tmp_path / "out"
    code = main(["asexual", "--config", cfg, "--out-dir", str(out_dir),
                 "--emit-plots"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert stdout.count("-> pass") == 3
    table = (out_dir / "asexual_contrast.csv").read_text()
    assert table.startswith("model,s,t,M2c\n")
    assert (out_dir / "asexual_contrast.svg").exists()


def test_cli_configuration_errors_exit_2(tmp_path, capsys):
    code = main(["simulate", "--config", str(tmp_path / "none.toml"),
                 "--out-dir", str(tmp_path)])
    assert code == 2
    assert "configuration error" in capsys.readouterr().err
    bad = write_toml(tmp_path, "[run]\nepsilon = -1.0\n", "bad.toml")
    code = main(["simulate", "--config", bad, "--out-dir", str(tmp_path)])
    assert code == 2
    # Under-resolved sweeps count as configuration errors too.
    coarse = write_toml(tmp_path, """
[run]
n_points = 64
t_end = 0.3
[sweep]
epsilons = [0.4, 0.2, 0.1]
t_star_factor = 1.0
""", "coarse.toml")
    code = main(["sweep", "--config", coarse, "--out-dir", str(tmp_path)])
    assert code == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_determinism_byte_identical_sweeps(tmp_path):
    cfg = write_toml(tmp_path, SWEEP_TOML)
    texts = []
    for sub in ("a", "b"):
        out_dir = tmp_path / sub
        assert main(["sweep", "--config", cfg, "--out-dir",
                     str(out_dir)]) == 0
        texts.append((out_dir / "sweep_records.csv").read_bytes()
                     + (out_dir / "sweep_fits.csv").read_bytes())
    assert texts[0] == texts[1]

import json
import math

import pytest

from dreammap import cli
from dreammap.cli import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, config_tokens, main, parse_args
from dreammap.mapio import save_map
from dreammap.synth import load_dataset
from dreammap.world_model import training

TINY = ["--base-h", "5", "--base-w", "5", "--ap-location", "2,2", "--n-occupants", "2"]
QUICK_TRAIN = ["--epochs", "1", "--episodes-per-epoch", "2", "--max-sequence-len", "3", "--holdout-budget", "2"]


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--out", str(out), "--seed", "7", "-q"] + TINY) == EXIT_OK

    return out


def test_synth_writes_dataset(dataset):
    """Check synth writes three training pairs and one evaluation pair."""

    train_pairs, eval_pairs, manifest = load_dataset(dataset)

    assert (len(train_pairs), len(eval_pairs)) == (3, 1)
    assert manifest["scale"] == 1
    assert manifest["config"]["seed"] == 7
    assert train_pairs[0].shape == (5, 5)


def test_synth_is_reproducible(tmp_path, dataset):
    """Check rerunning synth with one seed writes identical files."""

    again = tmp_path / "again"
    main(["synth", "--out", str(again), "--seed", "7", "-q"] + TINY)

    for path in sorted(dataset.iterdir()):
        assert (again / path.name).read_bytes() == path.read_bytes()


def test_synth_scale(tmp_path):
    """Check the scale option upscales the pairs."""

    out = tmp_path / "data"
    assert main(["synth", "--out", str(out), "--scale", "2", "-q"] + TINY) == EXIT_OK

    train_pairs, _, manifest = load_dataset(out)

    assert manifest["scale"] == 2
    assert train_pairs[0].shape == (10, 10)


def test_bad_scale_is_usage_error(tmp_path):
    """Check an unsupported scale exits with a usage error."""

    assert main(["synth", "--out", str(tmp_path), "--scale", "3"]) == EXIT_USAGE


def test_missing_command_is_usage_error():
    """Check a missing or unknown command exits with a usage error."""

    assert main([]) == EXIT_USAGE
    assert main(["dream"]) == EXIT_USAGE


def test_bad_synth_config_is_usage_error(tmp_path):
    """Check an invalid synthetic config exits with a usage error."""

    assert main(["synth", "--out", str(tmp_path), "--path-loss-exp", "0"]) == EXIT_USAGE


def test_missing_dataset_is_data_error(tmp_path):
    """Check a run without a dataset exits with a data error."""

    assert main(["run", "--out", str(tmp_path / "nothing"), "--methods", "empty_copy", "-q"]) == EXIT_DATA


def test_config_tokens():
    """Check config values become flags."""

    tokens = config_tokens({"budget": 5, "scales": [1, 2], "verbose": True, "quiet": False, "config": "x"})

    assert tokens == ["--budget", "5", "--scales", "1,2", "--verbose"]


def test_config_file_with_override(tmp_path):
    """Check config file options apply and command line options win."""

    config = tmp_path / "run.conf"
    config.write_text("budget = 4\npool_size = 7\nrule = random\n", encoding="utf-8")

    args = parse_args(["run", "--config", str(config), "--budget", "6"])

    assert (args.budget, args.pool_size, args.rule) == (6, 7, "random")


def test_config_unknown_key(tmp_path):
    """Check an unknown config key exits with a usage error."""

    config = tmp_path / "run.conf"
    config.write_text("nonsense = 1\n", encoding="utf-8")

    assert main(["run", "--config", str(config)]) == EXIT_USAGE


def test_train_and_run(dataset):
    """Check train writes a model and run reconstructs the evaluation pair with every method."""

    assert main(["train", "--out", str(dataset), "-q"] + QUICK_TRAIN) == EXIT_OK
    assert (dataset / "model.dmwm").exists()
    assert (dataset / "loss_trace.csv").exists()

    run = ["run", "--out", str(dataset), "--budget", "3", "--pool-size", "6", "--dream-samples", "3"]
    assert main(run + ["--max-points", "25", "-q"]) == EXIT_OK

    summary = json.loads((dataset / "summary.json").read_text())

    assert summary["budget"] == 3
    assert summary["queries"] == 3
    assert list(summary["methods"]) == ["empty_copy", "gp_random_points", "gp_same_points", "world_model"]
    assert summary["methods"]["gp_same_points"]["cells"] == summary["methods"]["world_model"]["cells"]


def test_run_without_model(dataset):
    """Check methods needing the world model fail without one, others run."""

    assert main(["run", "--out", str(dataset), "--methods", "world_model", "-q"]) == EXIT_DATA
    assert main(["run", "--out", str(dataset), "--methods", "empty_copy", "--budget", "2", "-q"]) == EXIT_OK


def test_run_budget_too_large(dataset):
    """Check a budget beyond the grid exits with a usage error."""

    assert main(["run", "--out", str(dataset), "--methods", "empty_copy", "--budget", "26", "-q"]) == EXIT_USAGE


def test_train_divergence_exit_code(monkeypatch, dataset):
    """Check a diverging run exits 3 and leaves the partial loss trace."""

    original = training.episode_loss

    def nan_loss(model, episode, noise, kl_weight):
        total, parts = original(model, episode, noise, kl_weight)
        return total * math.nan, parts

    monkeypatch.setattr(training, "episode_loss", nan_loss)

    assert main(["train", "--out", str(dataset), "-q"] + QUICK_TRAIN) == EXIT_NUMERICAL
    assert (dataset / "loss_trace.csv").read_text().splitlines() == ["epoch,mean_loss,holdout_rmse"]
    assert not (dataset / "model.dmwm").exists()


def test_eval_prints_scores(capsys, dataset):
    """Check eval prints RMSE and MAE as JSON."""

    _, eval_pairs, _ = load_dataset(dataset)
    save_map(dataset / "estimate.remap", eval_pairs[0].occupied)

    code = main(["eval", "--estimate", str(dataset / "estimate.remap"), "--pair", str(dataset / "pair003.json"), "-q"])
    scores = json.loads(capsys.readouterr().out)

    assert code == EXIT_OK
    assert scores == {"rmse": 0.0, "mae": 0.0, "rmse_dbm": 0.0, "mae_dbm": 0.0}


def test_eval_missing_file(tmp_path):
    """Check eval of a missing estimate exits with a data error."""

    missing = str(tmp_path / "missing")

    assert main(["eval", "--estimate", missing, "--pair", missing, "-q"]) == EXIT_DATA


def test_sweep_command(tmp_path):
    """Check a small sweep writes the results CSV."""

    out = tmp_path / "sweep"
    code = main(
        ["sweep", "--out", str(out), "--budgets", "1,2", "--repetitions", "1", "--methods", "empty_copy", "-q"]
    )
    header = (out / "results.csv").read_text().splitlines()[0]

    assert code == EXIT_OK
    assert header == "scale,budget,method,rep,rmse,mae,seconds,seed,config,dataset"


def test_sweep_synthesis_options(tmp_path):
    """Check the sweep synthesizes its dataset with the given synthesis options."""

    out = tmp_path / "sweep"
    args = ["sweep", "--out", str(out), "--budgets", "1", "--repetitions", "1", "--methods", "empty_copy", "-q"]
    code = main(args + ["--base-h", "6", "--base-w", "7", "--n-occupants", "0", "--ap-location", "1,2", "--seed", "5"])
    config = json.loads((out / "datasets/scale1/manifest.json").read_text())["config"]

    assert code == EXIT_OK
    assert (config["base_h"], config["base_w"], config["n_occupants"], config["seed"]) == (6, 7, 0, 5)
    assert config["ap_location"] == [1.0, 2.0]


def test_handler_is_set():
    """Check every command dispatches to its handler."""

    for command, handler in (("synth", cli.cmd_synth), ("train", cli.cmd_train), ("sweep", cli.cmd_sweep)):
        assert parse_args([command]).handler is handler

import numpy as np
import pytest

from neurocut import harness
from neurocut.cli import main
from neurocut.config import load_config, parse_config_text
from neurocut.ilp import read_dataset
from neurocut.nn import NetworkArch, load_checkpoint, save_checkpoint
from neurocut.training import Standardizer
from test_training import expected_init


def tiny_cfg(tmp_path, **extra):
    pairs = dict(out_dir=str(tmp_path), n_items=6, n_knapsacks=2, coeff_hi=30, n_train=12, n_test=6,
                 hidden="8", td3_episodes=60, td3_warmup=20, td3_batch_size=16, td3_eval_every=30,
                 td3_eval_size=6, sweep_step=0.25, bench_repeats=2)
    pairs.update({k: str(v) for k, v in extra.items()})
    return parse_config_text("", pairs)


def test_config_defaults_and_presets(tmp_path):
    cfg = parse_config_text("")
    assert (cfg.n_items, cfg.n_train, cfg.n_test, cfg.coeff_hi) == (16, 5000, 1000, 1000)
    assert cfg.sweep_step == 0.01 and cfg.squeeze == "crelu" and cfg.hidden == (64, 64)
    desk = parse_config_text("preset = desk\n")
    assert (desk.n_items, desk.n_knapsacks, desk.coeff_hi, desk.n_train, desk.n_test) == (10, 2, 100, 500, 100)
    assert desk.tree_cap == 10_000 and desk.d == 32


def test_config_file_and_errors(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\npreset = desk\nseed = 7  # trailing\nintegral_objective = false\n")
    cfg = load_config(p, {"workers": 3})
    assert cfg.seed == 7 and cfg.workers == 3 and cfg.integral_objective is False
    with pytest.raises(ValueError, match="unknown config keys"):
        parse_config_text("bogus = 1\n")
    with pytest.raises(ValueError):
        parse_config_text("preset = huge\n")
    with pytest.raises(ValueError):
        parse_config_text("just a line\n")


def test_config_hash_ignores_workers(tmp_path):
    a = tiny_cfg(tmp_path, workers=1)
    b = tiny_cfg(tmp_path / "x", workers=4)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != tiny_cfg(tmp_path, seed=1).config_hash()


def test_generate_full_defaults(tmp_path):
    cfg = parse_config_text("", {"out_dir": str(tmp_path)})
    assert harness.cmd_generate(cfg) == 0
    train, test = read_dataset(cfg.train_file), read_dataset(cfg.test_file)
    assert (len(train), len(test)) == (5000, 1000)
    assert train[0].n == 16 and not set(train) & set(test)


def test_generate_desk_and_rerun(tmp_path):
    cfg = parse_config_text("preset = desk\n", {"out_dir": str(tmp_path)})
    harness.cmd_generate(cfg)
    first = (cfg.train_file.read_bytes(), cfg.test_file.read_bytes())
    assert (len(read_dataset(cfg.train_file)), len(read_dataset(cfg.test_file))) == (500, 100)
    harness.cmd_generate(cfg)
    assert (cfg.train_file.read_bytes(), cfg.test_file.read_bytes()) == first


def test_mu_grid():
    assert len(harness.mu_grid(0.01)) == 101
    assert harness.mu_grid(0.5) == [0.0, 0.5, 1.0]
    assert harness.mu_grid(0.01)[37] == 0.37


def test_sweep_rows_and_determinism(tmp_path):
    cfg = tiny_cfg(tmp_path, sweep_step=0.5)
    harness.cmd_generate(cfg)
    harness.cmd_sweep(cfg)
    text = cfg.path("sweep.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == f"# config_hash={cfg.config_hash()}"
    assert lines[1] == "mu,mean_tree_size"
    assert [ln.split(",")[0] for ln in lines[2:]] == ["0.0", "0.5", "1.0"]
    harness.cmd_sweep(cfg)
    assert cfg.path("sweep.csv").read_text() == text


def test_sweep_fine_grid_row_count(tmp_path):
    cfg = tiny_cfg(tmp_path, sweep_step=0.01, n_test=2)
    harness.cmd_generate(cfg)
    harness.cmd_sweep(cfg)
    assert len(harness.read_csv(cfg.path("sweep.csv"))) == 101


def test_sweep_workers_do_not_change_output(tmp_path):
    one = tiny_cfg(tmp_path / "a")
    two = tiny_cfg(tmp_path / "b", workers=2)
    for cfg in (one, two):
        harness.cmd_generate(cfg)
        harness.cmd_sweep(cfg)
    assert one.path("sweep.csv").read_bytes() == two.path("sweep.csv").read_bytes()


def test_train_td3_writes_artifacts(tmp_path):
    cfg = tiny_cfg(tmp_path)
    harness.cmd_generate(cfg)
    assert harness.cmd_train(cfg, "td3") == 0
    arch, _ = load_checkpoint(cfg.path("actor_td3.ckpt"))
    assert arch.widths == (cfg.d, 8, 2)
    hist = harness.read_csv(cfg.path("history_td3.csv"))
    assert [int(h["epoch"]) for h in hist] == [0, 30, 60]
    # keep_best selection: the saved actor is never worse than the initial one on the eval set
    assert float(hist[0]["mean_reward"]) <= max(float(h["mean_reward"]) for h in hist)


def test_train_zero_episodes_checkpoint_is_init(tmp_path):
    cfg = tiny_cfg(tmp_path, td3_episodes=0)
    harness.cmd_generate(cfg)
    harness.cmd_train(cfg, "td3")
    arch, params = load_checkpoint(cfg.path("actor_td3.ckpt"))
    init = expected_init(arch, cfg.td3(), np.random.default_rng(cfg.seed))
    X = np.stack([harness.encode(i).vec for i in read_dataset(cfg.train_file)])
    norm = Standardizer.fit(X)
    assert np.allclose(params, norm.fold_into(arch, init))
    assert harness.read_csv(cfg.path("history_td3.csv")) == []


def test_train_cem_single_iteration(tmp_path):
    cfg = tiny_cfg(tmp_path, cem_population=2, cem_iterations=1)
    harness.cmd_generate(cfg)
    harness.cmd_train(cfg, "cem")
    assert len(harness.read_csv(cfg.path("history_cem.csv"))) == 1
    assert cfg.path("actor_cem.ckpt").exists()


def test_train_ste_lt(tmp_path):
    cfg = tiny_cfg(tmp_path, td3_episodes=30, td3_eval_every=30)
    harness.cmd_generate(cfg)
    harness.cmd_train(cfg, "ste_lt")
    assert harness.cmd_evaluate(cfg, "ste_lt") == 0


def test_train_unknown_mode(tmp_path):
    with pytest.raises(ValueError):
        harness.cmd_train(tiny_cfg(tmp_path), "sgd")


def test_evaluate_zero_checkpoint(tmp_path):
    cfg = tiny_cfg(tmp_path)
    harness.cmd_generate(cfg)
    arch = NetworkArch((cfg.d, 8, 2))
    ckpt = tmp_path / "zero.ckpt"
    save_checkpoint(ckpt, arch, np.zeros(arch.W))
    assert harness.cmd_evaluate(cfg, "td3", str(ckpt)) == 0
    rows = {r["method"]: r for r in harness.read_csv(cfg.path("summary_td3.csv"))}
    assert rows["learned_td3"]["mean_tree_size"] == rows["no_cut"]["mean_tree_size"]
    mu, best = harness.best_sweep(cfg)
    assert float(rows["best_sweep"]["mean_tree_size"]) == best and float(rows["best_sweep"]["mu"]) == mu
    per = harness.read_csv(cfg.path("eval_td3.csv"))
    assert len(per) == cfg.n_test
    before = (cfg.path("eval_td3.csv").read_bytes(), cfg.path("summary_td3.csv").read_bytes())
    harness.cmd_evaluate(cfg, "td3", str(ckpt))
    assert (cfg.path("eval_td3.csv").read_bytes(), cfg.path("summary_td3.csv").read_bytes()) == before


def test_evaluate_shape_mismatch(tmp_path):
    cfg = tiny_cfg(tmp_path)
    harness.cmd_generate(cfg)
    arch = NetworkArch((cfg.d + 1, 4, 2))
    ckpt = tmp_path / "bad.ckpt"
    save_checkpoint(ckpt, arch, np.zeros(arch.W))
    with pytest.raises(ValueError, match="does not fit"):
        harness.cmd_evaluate(cfg, "td3", str(ckpt))


def test_bench(tmp_path):
    cfg = tiny_cfg(tmp_path)
    harness.cmd_generate(cfg)
    harness.cmd_bench(cfg, repeats=0)
    rows = harness.read_csv(cfg.path("bench.csv"))
    assert [r["task"] for r in rows] == ["nn_forward", "lp_solve", "lp_over_nn"]
    assert rows[0]["total_seconds"] == rows[1]["total_seconds"] == "0.0"
    assert rows[2]["total_seconds"] == "undefined"
    harness.cmd_bench(cfg, repeats=2)
    rows = harness.read_csv(cfg.path("bench.csv"))
    assert float(rows[2]["total_seconds"]) > 0


def test_bounds_table(tmp_path, capsys):
    cfg = tiny_cfg(tmp_path)
    assert harness.cmd_bounds(cfg) == 0
    rows = harness.read_csv(cfg.path("bounds.csv"))
    names = [r["bound"] for r in rows]
    assert "hyperplanes_M" in names and "pdim_cg_1_relu" in names
    assert all(float(r["value"]) >= 0 for r in rows)
    assert "bound,inputs,value" in capsys.readouterr().out


def test_verify_passes_and_counts_rows(tmp_path):
    cfg = tiny_cfg(tmp_path)
    assert harness.cmd_verify(cfg) == 0
    rows = harness.read_csv(cfg.path("verify.csv"))
    assert len(rows) == len(harness.CHECKS)
    assert all(r["passed"] == "pass" for r in rows)


def test_verify_fault_injection(tmp_path):
    cfg = tiny_cfg(tmp_path, inject_fault="cg_floor")
    assert harness.cmd_verify(cfg) == 1
    rows = {r["check"]: r["passed"] for r in harness.read_csv(cfg.path("verify.csv"))}
    assert rows["cg_validity"] == "FAIL"
    assert rows["bnb_vs_bruteforce"] == "pass"


def test_cli_end_to_end(tmp_path, capsys):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(f"out_dir = {tmp_path}\nn_items = 5\ncoeff_hi = 20\nn_train = 8\nn_test = 4\n"
                        "hidden = 4\ntd3_episodes = 20\ntd3_warmup = 10\ntd3_batch_size = 8\n"
                        "td3_eval_every = 10\ntd3_eval_size = 4\nsweep_step = 0.5\n")
    base = ["--config", str(cfg_file)]
    assert main(["generate", *base]) == 0
    assert main(["sweep", *base, "--workers", "1"]) == 0
    assert main(["train", *base, "--mode", "td3", "--seed", "0"]) == 0
    assert main(["evaluate", *base]) == 0
    assert main(["bench", *base, "--repeats", "1"]) == 0
    assert main(["bounds", *base]) == 0
    assert main(["generate", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert main(["evaluate", *base, "--checkpoint", str(tmp_path / "nope.ckpt")]) == 1
    assert main(["sweep", *base, "--set", "novalue"]) == 2


def test_cli_verify_exit_codes(tmp_path):
    assert main(["verify", "--set", f"out_dir={tmp_path}", "--set", "verify_instances=8"]) == 0
    assert main(["verify", "--set", f"out_dir={tmp_path}", "--set", "verify_instances=8",
                 "--set", "inject_fault=cg_floor"]) == 1

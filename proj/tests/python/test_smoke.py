import math

import pytest

import histloss as hl


def test_encode_decode_round_trip():
    grid = hl.make_grid(-2.0, 2.0, 128)
    assert grid.k == 128
    assert grid.width == pytest.approx(4.0 / 128, abs=0)
    probs = hl.encode_target(0.37, grid, sigma_mult=0.75)
    assert len(probs) == 128
    assert min(probs) >= 0.0
    assert sum(probs) == pytest.approx(1.0, abs=1e-9)
    assert hl.decode_expectation(probs, grid) == pytest.approx(0.37, abs=1e-6)


def test_entropy_and_normal_cdf():
    k = 128
    assert hl.entropy([1.0 / k] * k) == pytest.approx(math.log(k), abs=1e-12)
    onehot = [0.0] * k
    onehot[3] = 1.0
    assert hl.entropy(onehot) == 0.0
    assert hl.normal_cdf(0.0) == 0.5
    assert hl.normal_cdf(-8.0) < 1e-14


def test_softmax_and_losses():
    p = hl.softmax_with_temperature([0.0] * 5, 2.0)
    assert all(pi == pytest.approx(0.2, abs=1e-15) for pi in p)

    uniform = [0.25] * 4
    assert hl.cross_entropy(uniform, uniform) == pytest.approx(math.log(4.0))
    grad = hl.cross_entropy_grad_logits(uniform, [0.3, -0.5, 1.0, 0.1], 2.0)
    assert sum(grad) == pytest.approx(0.0, abs=1e-12)

    assert hl.mae_loss(2.0, 3.5) == 1.5
    assert hl.force_mae_loss([1.0, 0.0, 0.0], [0.0, 0.0, 0.0]) == pytest.approx(1.0 / 3.0)
    assert hl.combined_loss(1.0, 0.0) == 0.7
    assert hl.combined_loss(0.0, 1.0) == 0.3


def test_lj_pair_minimum():
    r = 2.0 ** (1.0 / 6.0) * 2.5
    energy = hl.lj_energy([[0.0, 0.0, 0.0], [r, 0.0, 0.0]], [0, 0])
    assert energy == pytest.approx(-0.2, abs=1e-12)
    forces = hl.lj_forces([[0.0, 0.0, 0.0], [r, 0.0, 0.0]], [0, 0])
    assert max(abs(c) for f in forces for c in f) < 1e-10


def test_dataset_and_pearson(tmp_path):
    samples = hl.generate_dataset(seed=3, n_samples=6, atoms_min=2, atoms_max=4)
    assert len(samples) == 6
    for s in samples:
        assert 2 <= s.n_atoms <= 4
        assert math.isfinite(s.per_atom_energy)
        assert len(s.forces) == s.n_atoms

    path = tmp_path / "data.txt"
    hl.write_dataset(path, samples)
    loaded = hl.read_dataset(path)
    assert [s.per_atom_energy for s in loaded] == [s.per_atom_energy for s in samples]

    assert hl.pearson_r([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]) == pytest.approx(1.0)
    assert hl.pearson_r([1.0, 2.0, 3.0], [5.0, 5.0, 5.0]) is None


def test_tiny_train_run(tmp_path):
    cfg = hl.RunConfig()
    cfg.dataset.seed = 5
    cfg.dataset.n_samples = 60
    cfg.dataset.atoms_max = 4
    cfg.grid.bins = 8
    cfg.opt.total_steps = 10
    cfg.opt.warmup_steps = 2
    cfg.opt.batch_size = 16
    cfg.width = 8
    cfg.force_width = 4
    cfg.eval_interval = 5
    cfg.eval_batch = 16
    cfg.out_dir = str(tmp_path / "run")

    result = hl.train_run(cfg)
    assert math.isfinite(result["val_energy_mae"])
    assert result["steps"][0] == 0
    assert result["steps"][-1] == 10
    assert (tmp_path / "run" / "metrics.csv").exists()
    assert (tmp_path / "run" / "checkpoint.txt").exists()

    echoed = hl.load_run_config(tmp_path / "run" / "run_config.echo")
    assert echoed.grid.bins == 8
    assert hl.run_config_text(echoed) == hl.run_config_text(cfg)

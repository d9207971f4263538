import numpy as np
import pytest

from mmcompress import container
from mmcompress.nn import Schedule, stream
from mmcompress.readout import evaluate_readouts, train_readouts
from mmcompress.synthetic import (
    DegenerateNetworkError,
    SyntheticSpec,
    SyntheticWorld,
    build_construction_nets,
    construct_modalities,
    dump_dataset,
    load_dataset,
    sample_sources,
)


@pytest.fixture(scope="module")
def world():
    return SyntheticWorld(SyntheticSpec(seed=3))


def test_spec_validation():
    for bad in (dict(d_m=-1), dict(d_m=0, d_e=0), dict(n=1), dict(k=0)):
        with pytest.raises(ValueError):
            SyntheticSpec(**bad)
    spec = SyntheticSpec()
    assert (spec.d_x, spec.d_y, spec.d_min) == (8, 80, 12)


def test_source_shapes_and_order():
    spec = SyntheticSpec()
    src = sample_sources(spec, 128, stream(0))
    for i in range(spec.n):
        x = src.x(i)
        assert x.shape == (128, 8)
        np.testing.assert_array_equal(x[:, :4], src.x_e[i])
        np.testing.assert_array_equal(x[:, 4:], src.x_m)
    assert src.x_concat().shape == (128, 16)
    with pytest.raises(ValueError):
        sample_sources(spec, 0, stream(0))


def test_no_exclusive_means_fully_shared():
    spec = SyntheticSpec(d_e=0, n=3)
    src = sample_sources(spec, 64, stream(1))
    for i in range(3):
        np.testing.assert_array_equal(src.x(i), src.x_m)


def test_source_statistics():
    # CLT: the mean of 1e5 standard normals has sd 0.0032, the variance sd 0.0045
    spec = SyntheticSpec(d_m=4, d_e=4, n=2)
    src = sample_sources(spec, 100_000, stream(2))
    for block in (src.x_m, src.x_e[0], src.x_e[1]):
        assert np.all(np.abs(block.mean(axis=0)) < 0.02)
        assert np.all(np.abs(block.var(axis=0) - 1.0) < 0.03)


def test_exclusive_sources_independent_across_modalities():
    src = sample_sources(SyntheticSpec(), 50_000, stream(3))
    corr = np.corrcoef(src.x_e[0].T, src.x_e[1].T)[:4, 4:]
    assert np.max(np.abs(corr)) < 0.03


def test_construction_nets_shape_and_independence(world):
    x = stream(4).standard_normal((32, 8)).astype(np.float32)
    assert [net(x).shape for net in world.nets] == [(32, 80), (32, 80)]
    assert not np.allclose(world.nets[0](x), world.nets[1](x))
    for net in world.nets:
        assert all(not p.requires_grad for p in net.net.parameters())


def test_normalization_on_fresh_samples(world):
    # held-out sample, not the calibration batch
    src, mods = world.sample(stream(5), 10_000)
    y = mods.y.astype(np.float64)
    assert np.all(np.abs(y.mean(axis=1)) < 0.05)
    assert np.all(np.abs(y.std(axis=1) - 1.0) < 0.05)


def test_modalities_deterministic_and_concat(world):
    src = sample_sources(world.spec, 128, stream(6))
    a = construct_modalities(world.nets, src)
    b = construct_modalities(world.nets, src)
    np.testing.assert_array_equal(a.y, b.y)
    assert a.y_concat.shape == (128, 160)
    np.testing.assert_array_equal(a.y_concat[:, :80], a.y[0])
    np.testing.assert_array_equal(a.y_concat[:, 80:], a.y[1])


def test_shared_source_reaches_every_modality(world):
    src = sample_sources(world.spec, 256, stream(7))
    before = construct_modalities(world.nets, src)
    src.x_m = src.x_m[stream(8).permutation(256)]
    after = construct_modalities(world.nets, src)
    for i in range(world.spec.n):
        changed = np.any(np.abs(before.y[i] - after.y[i]) > 1e-6, axis=1)
        assert changed.mean() > 0.99


def test_net_construction_is_deterministic_per_seed():
    spec = SyntheticSpec(seed=11)
    a, b = build_construction_nets(spec, calibration=2000), build_construction_nets(spec, calibration=2000)
    x = stream(9).standard_normal((8, 8)).astype(np.float32)
    np.testing.assert_array_equal(a[0](x), b[0](x))


def test_degenerate_network_is_rejected(monkeypatch):
    import mmcompress.synthetic as synthetic

    monkeypatch.setattr(synthetic, "MIN_SIGMA", 1e9)
    with pytest.raises(DegenerateNetworkError):
        build_construction_nets(SyntheticSpec(), calibration=100, max_attempts=2)


def test_dump_round_trip(tmp_path, world):
    path = tmp_path / "synthetic.bin"
    dump_dataset(path, world, batches=3, batch_size=16, rng=stream(10))
    spec, src, mods = load_dataset(path)
    assert spec == world.spec
    assert src.x_m.shape == (48, 4) and src.x_e.shape == (2, 48, 4)
    assert mods.y.shape == (2, 48, 80)
    # regenerating from the same stream gives the same data
    ref_src, ref_mods = [], []
    rng = stream(10)
    for _ in range(3):
        s, m = world.sample(rng, 16)
        ref_src.append(s.x_m)
        ref_mods.append(m.y)
    np.testing.assert_array_equal(src.x_m, np.concatenate(ref_src))
    np.testing.assert_array_equal(mods.y, np.concatenate(ref_mods, axis=1))
    kind, header, _ = container.read(path)
    assert kind == container.KIND_SYNTHETIC and header["batch_count"] == 3


def test_wide_seeds_survive_the_header(tmp_path):
    seed = 2**63 - 25  # not representable as a float64
    header = {}
    container.put_u64(header, "seed", seed)
    container.write(tmp_path / "h.bin", container.KIND_CHECKPOINT, header, {})
    assert container.get_u64(container.read(tmp_path / "h.bin")[1], "seed") == seed


def test_container_rejects_corruption(tmp_path):
    path = tmp_path / "c.bin"
    container.write(path, container.KIND_CHECKPOINT, {"a": 1.5}, {"w": np.ones((2, 3))})
    kind, header, blocks = container.read(path)
    assert header == {"a": 1.5} and blocks["w"].shape == (2, 3)
    raw = path.read_bytes()
    (tmp_path / "bad_magic.bin").write_bytes(b"X" + raw[1:])
    (tmp_path / "trailing.bin").write_bytes(raw + b"\0")
    for name in ("bad_magic.bin", "trailing.bin"):
        with pytest.raises(container.ContainerError):
            container.read(tmp_path / name)


def test_shared_source_readable_from_one_modality():
    # d_e = 0: every y_i is a function of x_m alone
    world = SyntheticWorld(SyntheticSpec(d_m=4, d_e=0, seed=12))

    def source(r, size):
        src, mods = world.sample(r, size)
        return mods.y[0], {"m": src.x_m}

    ro = train_readouts(source, world.spec.d_y, {"m": 4}, Schedule(), stream(13))
    score = evaluate_readouts(ro, source, stream(14), batches=50)["m"]
    assert score.mse < 0.5

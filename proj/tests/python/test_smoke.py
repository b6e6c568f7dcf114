import numpy as np
import pytest

import meshflow

TOY = dict(
    encoder_widths=[8, 16],
    code_dim=16,
    decoder_widths=[32],
    points=32,
    blocks=3,
    proj_dim=8,
    hidden=12,
    seed=3,
)


def brute_chamfer(a, b):
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return d.min(1).mean() + d.min(0).mean()


def test_chamfer_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(5):
        a, b = rng.normal(size=(40, 3)), rng.normal(size=(25, 3))
        assert meshflow.chamfer(a, b) == pytest.approx(brute_chamfer(a, b), rel=1e-12)


def test_bad_shape_raises():
    with pytest.raises(meshflow.ShapeError):
        meshflow.chamfer(np.zeros((4, 2)), np.zeros((4, 3)))


def test_mesh_round_trip(tmp_path):
    v, f = meshflow.desk_object("hammer", 4)
    meshflow.write_mesh(tmp_path / "h.obj", v, f)
    v2, f2 = meshflow.read_mesh(tmp_path / "h.obj")
    assert np.array_equal(f, f2)
    assert np.allclose(v, v2, rtol=1e-8, atol=1e-9)


def test_sampling_is_seeded():
    v, f = meshflow.desk_object("dice", 4)
    a = meshflow.sample_surface(v, f, 100, seed=5)
    assert a.shape == (100, 3)
    assert np.array_equal(a, meshflow.sample_surface(v, f, 100, seed=5))
    assert not np.array_equal(a, meshflow.sample_surface(v, f, 100, seed=6))


def test_plan_counts():
    assert meshflow.plan_dataset("A") == (40, 10)
    assert meshflow.plan_dataset("D", objects=6) == (6 * 16800, 6 * 4200)


def test_selftest_passes():
    results = meshflow.selftest()
    assert results and all(ok for _, ok, _ in results)


def test_pipeline(tmp_path):
    manifest = meshflow.generate_dataset(
        tmp_path, dataset="A", fixtures="scissors", fixture_subdivisions=4, steps=10, points=32
    )
    ae, metrics = meshflow.train(manifest, "pretrain_ae", ae_epochs=2, **TOY)
    assert ae.stage == "pretrain_ae" and metrics
    flow, _ = meshflow.train(manifest, "train_flow", start=ae, flow_epochs=2, **TOY)
    assert flow.stage == "train_flow" and flow.model.code_dim == 16

    path = tmp_path / "ckpt.bin"
    flow.save(path)
    loaded = meshflow.load_checkpoint(path)

    v, f = meshflow.desk_object("scissors", 4)
    cloud = meshflow.sample_surface(v, f, 32, seed=1)
    out = loaded.deform(v, f, cloud)
    assert out.shape == v.shape
    assert np.array_equal(out, flow.deform(v, f, cloud))
    # points of the cloud are unordered
    assert np.array_equal(out, loaded.deform(v, f, cloud[::-1].copy()))

    rows = meshflow.evaluate(loaded, manifest, "test")
    total = [r for r in rows if r["object_id"] == "ALL" and r["metric"] == "L_CDD"]
    assert total[0]["n_samples"] == 2 and total[0]["value"] >= 0

    report = meshflow.bench(loaded, v, f, cloud, iters=30, warmup=1)
    assert report["timed_iters"] == 30 and report["mean_s"] > 0


def test_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXX")
    with pytest.raises(meshflow.CorruptFileError):
        meshflow.load_checkpoint(bad)
    with pytest.raises(meshflow.IoError):
        meshflow.load_checkpoint(tmp_path / "missing.bin")

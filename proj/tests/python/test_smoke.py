import numpy as np
import pytest

ctxdit = pytest.importorskip("ctxdit")

TINY_MODEL = {
    "frames": 2,
    "model_dim": 16,
    "n_heads": 2,
    "depth": 1,
    "sem_c1": 4,
    "sem_c2": 4,
    "timesteps": 100,
}
TINY_TRAIN = {"lr": 1e-3, "warmup_steps": 2, "batch_size": 2, "total_steps": 4, "seed": 3}


@pytest.fixture(scope="module")
def dataset():
    return ctxdit.Dataset.generate({"n_samples": 4, "frames": 2, "seed": 5})


def test_dataset_samples(dataset):
    assert len(dataset) == 4
    s = dataset[0]
    assert s["ref_image"].shape == (32, 32, 3)
    assert s["video"].shape == (2, 32, 32, 3)
    assert s["video"].dtype == np.float64
    assert ctxdit.extract_attributes(s["ref_image"]) == s["spec"]
    assert np.mean((s["ref_image"] - s["video"][0]) ** 2) > 0
    with pytest.raises(IndexError):
        dataset[4]


def test_dataset_round_trip(dataset, tmp_path):
    dataset.write(str(tmp_path / "ds"))
    back = ctxdit.Dataset.read(str(tmp_path / "ds"))
    assert back.config == dataset.config
    for i in range(len(dataset)):
        assert np.array_equal(back[i]["video"], dataset[i]["video"])


def test_training_is_deterministic_and_resumes(dataset, tmp_path):
    a = ctxdit.Trainer(TINY_MODEL, TINY_TRAIN, dataset)
    b = ctxdit.Trainer(TINY_MODEL, TINY_TRAIN, dataset)
    la, lb = a.run(), b.run()
    assert [r["l_total"] for r in la] == [r["l_total"] for r in lb]
    assert la[0]["lambda"] == 0.5

    half = ctxdit.Trainer(TINY_MODEL, dict(TINY_TRAIN, total_steps=4), dataset)
    half.step()
    half.step()
    half.save(str(tmp_path / "ck.bin"))
    resumed = ctxdit.Trainer.resume(str(tmp_path / "ck.bin"), dataset)
    rest = resumed.run()
    assert [r["l_total"] for r in rest] == [r["l_total"] for r in la[2:]]


def test_generate_and_evaluate(dataset, tmp_path):
    t = ctxdit.Trainer(TINY_MODEL, TINY_TRAIN, dataset)
    t.run()
    path = str(tmp_path / "ck.bin")
    t.save(path)
    model = ctxdit.Model.load(path)
    assert model.parameter_count == t.model.parameter_count
    prompt = ctxdit.parse_prompt("shape=square,body_color=blue,motion=3")
    ref = dataset[0]["ref_image"]
    v1 = model.generate(ref, prompt, steps=3, seed=1)
    v2 = model.generate(ref, prompt, steps=3, seed=1)
    assert v1.shape == (2, 32, 32, 3)
    assert np.array_equal(v1, v2)
    assert not np.array_equal(v1, model.generate(ref, prompt, steps=3, seed=2))
    with pytest.raises(ctxdit.ShapeError):
        model.generate(np.zeros((16, 16, 3)), prompt)

    report = ctxdit.evaluate(path, dataset, {"sampler_steps": 2, "max_samples": 2})
    assert 0 <= report["identity_match_rate"] <= 1
    assert -1 <= report["temporal_consistency"] <= 1
    assert len(report["samples"]) == 2


def test_metrics_and_errors(tmp_path):
    frame = np.random.default_rng(0).random((4, 4, 3))
    assert ctxdit.temporal_consistency(np.stack([frame, frame, frame])) == 1.0
    with pytest.raises(ctxdit.ShapeError):
        ctxdit.temporal_consistency(frame[None])
    with pytest.raises(ctxdit.VocabError):
        ctxdit.parse_prompt("shape=blob")
    with pytest.raises(ctxdit.Error):
        ctxdit.Model.load(str(tmp_path / "missing.bin"))
    ctxdit.write_ppm(str(tmp_path / "x.ppm"), np.round(frame * 255) / 255)
    assert np.array_equal(ctxdit.read_ppm(str(tmp_path / "x.ppm")), np.round(frame * 255) / 255)


def test_verify_catalog():
    report = ctxdit.verify()
    assert report["pass"]
    assert len(report["checks"]) == len(ctxdit.check_names())
    sabotaged = ctxdit.verify(filter="isolation", sabotage_ref_mask=True)
    assert not sabotaged["pass"]
    assert any(c["name"] == "reference-isolation" and not c["pass"] for c in sabotaged["checks"])

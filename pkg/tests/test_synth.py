import numpy as np
import pytest

from turbogodec import synth
from turbogodec.godec import GodecParams, godec
from turbogodec.hsi_data import flatten, load_cube, load_mask
from turbogodec.synth import Cluster, SceneSpec, gen_dispersed_scene, gen_scene, make_scene


def test_fixture_clustered(data_dir):
    spec = SceneSpec(8, 9, 6, 2, clusters=(Cluster(1, 2, 3, 2, 0.8),), noise_sigma=0.05, seed=7)
    sc = make_scene(spec)
    assert sc.cube == load_cube(data_dir / "scene_seed7.hsic")
    np.testing.assert_array_equal(sc.mask, load_mask(data_dir / "scene_seed7_mask.csv"))


def test_fixture_dispersed(data_dir):
    spec = SceneSpec(9, 9, 4, 2, dispersed_count=6, dispersed_amplitude=0.5, noise_sigma=0.02, seed=11)
    sc = make_scene(spec)
    assert sc.cube == load_cube(data_dir / "dispersed_seed11.hsic")
    np.testing.assert_array_equal(sc.mask, load_mask(data_dir / "dispersed_seed11_mask.csv"))


def test_noiseless_background_rank():
    sc = gen_scene(SceneSpec(10, 10, 8, 2, seed=3))
    X = np.asarray(flatten(sc.cube))
    assert np.linalg.matrix_rank(X) == 2
    assert sc.mask.sum() == 0


def test_cluster_mask_and_decomposition():
    spec = SceneSpec(12, 12, 5, 2, clusters=(Cluster(4, 5, 3, 3, 1.0),), noise_sigma=0.1, seed=1)
    sc = gen_scene(spec)
    assert sc.mask.sum() == 9
    assert sc.mask[4:7, 5:8].all()
    np.testing.assert_array_equal(sc.mask.ravel().astype(bool), sc.S.any(axis=1))
    noise = np.asarray(flatten(sc.cube)) - sc.L - sc.S
    assert noise.std() == pytest.approx(0.1, rel=0.15)


def test_same_seed_bit_identical():
    spec = SceneSpec(10, 10, 4, 2, dispersed_count=5, noise_sigma=0.3, seed=5)
    a, b = make_scene(spec), make_scene(spec)
    assert a.cube.data.tobytes() == b.cube.data.tobytes()
    assert make_scene(SceneSpec(10, 10, 4, 2, dispersed_count=5, noise_sigma=0.3, seed=6)).cube != a.cube


def test_signature_distinct_from_background():
    sc = gen_scene(SceneSpec(10, 10, 12, 3, clusters=(Cluster(0, 0, 1, 1, 1.0),), seed=2))
    sig = sc.S[0]
    assert sig.max() == pytest.approx(1.0)
    # the signature is not in the background row space
    _, s, Vt = np.linalg.svd(sc.L, full_matrices=False)
    basis = Vt[:3]
    assert np.linalg.norm(sig - basis.T @ (basis @ sig)) > 1e-3


def test_dispersed_isolation():
    sc = gen_dispersed_scene(SceneSpec(100, 100, 3, 1, dispersed_count=5, seed=0))
    pts = np.argwhere(sc.mask)
    assert len(pts) == 5
    for i in range(5):
        for j in range(i + 1, 5):
            assert np.abs(pts[i] - pts[j]).max() > 1


def test_dispersed_dense_packing():
    sc = gen_dispersed_scene(SceneSpec(30, 30, 2, 1, dispersed_count=60, seed=4))
    pts = np.argwhere(sc.mask)
    d = np.abs(pts[:, None] - pts[None]).max(axis=2)
    np.fill_diagonal(d, 9)
    assert d.min() > 1


def test_dispersed_zero_and_infeasible():
    assert gen_dispersed_scene(SceneSpec(5, 5, 2, 1, seed=0)).mask.sum() == 0
    with pytest.raises(ValueError):
        SceneSpec(10, 10, 2, 1, dispersed_count=5000)


def test_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(10, 10, 3, 1, clusters=(Cluster(8, 8, 3, 3, 1.0),))
    with pytest.raises(ValueError):
        SceneSpec(10, 10, 3, 1, clusters=(Cluster(0, 0, 2, 2, 1.0), Cluster(1, 1, 2, 2, 1.0)))
    with pytest.raises(ValueError):
        SceneSpec(10, 10, 3, 1, clusters=(Cluster(0, 0, 4, 3, 1.0),))  # 12 >= 10% of 100
    with pytest.raises(ValueError):
        SceneSpec(10, 10, 3, 4)
    with pytest.raises(ValueError):
        SceneSpec(10, 10, 3, 1, noise_sigma=-1)


def test_noiseless_exact_recovery():
    spec = SceneSpec(20, 20, 10, 3, dispersed_count=17, dispersed_amplitude=0.3, seed=8)
    sc = make_scene(spec)
    res = godec(flatten(sc.cube), GodecParams(rank=3, card=17, eps=1e-9))
    np.testing.assert_array_equal(res.support, sc.mask.ravel().astype(bool))


def test_random_clusters_disjoint_and_seeded():
    a = synth.random_clusters(30, 30, 6, sizes=(2, 3), seed=1)
    assert a == synth.random_clusters(30, 30, 6, sizes=(2, 3), seed=1)
    SceneSpec(30, 30, 3, 1, clusters=a)  # validates disjointness
    with pytest.raises(ValueError):
        synth.random_clusters(4, 4, 10, sizes=(2,), seed=0)


def test_scene_config_roundtrip():
    text = """# demo
height=12
width = 10
channels=5
rank=2
noise_sigma=0.25
seed=3
cluster=1,1,2,2,0.5
cluster = 6, 4, 3, 2, 1.5
"""
    spec = synth.parse_scene_config(text)
    assert spec.clusters[1] == Cluster(6, 4, 3, 2, 1.5)
    assert synth.parse_scene_config(synth.format_scene_config(spec)) == spec
    with pytest.raises(ValueError):
        synth.parse_scene_config("height=3\nbogus=1\n")
    with pytest.raises(ValueError):
        synth.parse_scene_config("height=3\n")
    with pytest.raises(ValueError):
        synth.parse_scene_config("height 3\n")


def test_random_clusters_config_key():
    spec = synth.parse_scene_config("height=30\nwidth=30\nchannels=4\nrank=2\nseed=9\n"
                                    "random_clusters=4,0.6,2\n")
    assert len(spec.clusters) == 4
    assert all(c.height == 2 and c.amplitude == 0.6 for c in spec.clusters)

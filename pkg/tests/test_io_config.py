import numpy as np
import pytest

from regmor import config as cfgmod
from regmor.config import ConfigError, RunConfig
from regmor.io import (FormatError, read_matrix, read_mesh, read_params, read_partition,
                       write_matrix, write_mesh, write_params, write_partition)
from regmor.synthetic import ManifoldSpec, SyntheticProblem, four_element_partition


def test_config_round_trip_is_exact():
    c = RunConfig()
    c.xi_s = 0.1 + 0.2
    c.reg.xi = 1.0 / 3.0
    c.registered = False
    c.n_sweep = "2, 4,6"
    back = cfgmod.loads(cfgmod.dumps(c))
    assert cfgmod.dumps(back) == cfgmod.dumps(c)
    assert back.xi_s == c.xi_s and back.reg.xi == c.reg.xi
    assert back.sweep() == [2, 4, 6]


def test_config_rejects_unknown_and_bad_values():
    with pytest.raises(ConfigError):
        cfgmod.loads("[sensor]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("[space]\nJ = six\n")
    with pytest.raises(ConfigError):
        cfgmod.loads("[reduce]\nregistered = maybe\n")


def test_fingerprint_ignores_paths(tmp_path):
    a, b = RunConfig(), RunConfig()
    b.mesh = "/elsewhere/mesh.txt"
    b.output = "other"
    assert cfgmod.fingerprint(a) == cfgmod.fingerprint(b)
    b.J = 4
    assert cfgmod.fingerprint(a) != cfgmod.fingerprint(b)
    p = tmp_path / "run.ini"
    cfgmod.save(a, p)
    assert cfgmod.fingerprint(cfgmod.load(p)) == cfgmod.fingerprint(a)


def test_relative_paths_resolve_against_config_dir(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[paths]\nmesh = mesh.txt\n")
    assert cfgmod.load(p).mesh == str(tmp_path / "mesh.txt")


def test_mesh_and_partition_round_trip(tmp_path):
    prob = SyntheticProblem(ManifoldSpec("partitioned_front", mesh_cells=2))
    write_mesh(tmp_path / "m.txt", prob.mesh)
    write_partition(tmp_path / "p.json", prob.geometry)
    geo = read_partition(tmp_path / "p.json")
    m = read_mesh(tmp_path / "m.txt", geo)
    assert np.array_equal(m.nodes, prob.mesh.nodes)
    assert np.array_equal(m.conn, prob.mesh.conn)
    assert np.array_equal(m.labels, prob.mesh.labels)
    np.testing.assert_allclose(m.refs, prob.mesh.refs, atol=1e-9)
    assert geo.to_dict() == four_element_partition().to_dict()


def test_malformed_mesh_rejected(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("1 3 1\n1 0 0\n2 1 0\n3 0 1\n1 2 9\n")
    with pytest.raises(FormatError):
        read_mesh(p)
    p.write_text("1 3\n")
    with pytest.raises(FormatError):
        read_mesh(p)


def test_matrix_and_params_round_trip(tmp_path, rng):
    A = rng.normal(size=(7, 3))
    for name in ("a.txt", "a.npy"):
        write_matrix(tmp_path / name, A)
        assert np.array_equal(read_matrix(tmp_path / name), A)
    write_params(tmp_path / "p.csv", A[:, :2])
    assert np.array_equal(read_params(tmp_path / "p.csv"), A[:, :2])
    np.save(tmp_path / "n.npy", np.array([[np.nan]]))
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "n.npy")

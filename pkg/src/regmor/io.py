"""File formats: meshes, partitions, matrices, parameter tables, bundles."""
import json

import numpy as np

from .femesh import FEMesh
from .geometry import Partition, PolarChart, PolarGeometry
from .reduction import CoefficientRegressor, ReducedModel, TPSInterpolant
from .spaces import build_dd_space, build_polar_space, build_rect_space

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# mesh: "p N_hf N_e" header, node block, connectivity block (1-based)

def write_mesh(path, mesh, nodes=None):
    nodes = mesh.nodes if nodes is None else nodes
    with open(path, "w") as fh:
        fh.write(f"{mesh.degree} {mesh.n_nodes} {mesh.n_elements}\n")
        for j, (x, y) in enumerate(nodes, start=1):
            fh.write(f"{j} {float(x)!r} {float(y)!r}\n")
        for row in mesh.conn + 1:
            fh.write(" ".join(map(str, row)) + "\n")


def read_mesh(path, geometry=None):
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 3:
            raise FormatError(f"{path}: header must be 'p N_hf N_e'")
        p, n_hf, n_e = map(int, head)
        nodes = np.loadtxt(fh, max_rows=n_hf, ndmin=2)
        conn = np.loadtxt(fh, max_rows=n_e, dtype=int, ndmin=2)
    if nodes.shape != (n_hf, 3) or conn.shape[0] != n_e:
        raise FormatError(f"{path}: block sizes do not match the header")
    if not np.array_equal(nodes[:, 0].astype(int), np.arange(1, n_hf + 1)):
        raise FormatError(f"{path}: node indices must run 1..N_hf")
    if conn.min() < 1 or conn.max() > n_hf:
        raise FormatError(f"{path}: connectivity entries must lie in [1, N_hf]")
    labels = refs = None
    if geometry is not None:
        labels, refs = geometry.locate(nodes[:, 1:])
    return FEMesh(nodes[:, 1:], conn - 1, p, labels, refs)


# ---------------------------------------------------------------------------
# geometry: JSON with elements and 1-based tables, or a polar chart

def geometry_to_dict(geometry):
    if isinstance(geometry, PolarGeometry):
        return {"type": "polar", "r": geometry.chart.r, "R": geometry.chart.R}
    d = geometry.to_dict()
    d["type"] = "partition"
    return d


def geometry_from_dict(d):
    kind = d.get("type", "partition")
    if kind == "polar":
        return PolarGeometry(PolarChart(d["r"], d["R"]))
    if kind == "partition":
        return Partition.from_dict(d)
    raise FormatError(f"unknown geometry type {kind!r}")


def write_partition(path, geometry):
    with open(path, "w") as fh:
        json.dump(geometry_to_dict(geometry), fh, indent=1)


def read_partition(path):
    with open(path) as fh:
        return geometry_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# dense matrices and parameter tables

def write_matrix(path, A):
    A = np.asarray(A, dtype="<f8")
    if str(path).endswith(".npy"):
        np.save(path, A)
    else:
        np.savetxt(path, A, fmt="%.17e")


def read_matrix(path):
    if str(path).endswith(".npy"):
        A = np.load(path)
    else:
        A = np.loadtxt(path, ndmin=2)
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise FormatError(f"{path}: non-finite entries")
    return A


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else f"{v:.17e}"
                              if isinstance(v, float) else str(v) for v in row) + "\n")


def write_params(path, mus):
    mus = np.atleast_2d(mus)
    write_csv(path, [f"mu{i + 1}" for i in range(mus.shape[1])],
              [[float(v) for v in row] for row in mus])


def read_params(path):
    A = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return np.asarray(A, dtype=float)


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


# ---------------------------------------------------------------------------
# spaces

def space_params(space):
    if space is None:
        return {}
    d = {"kind": space.kind, "norm": space.norm_kind}
    d.update(space.params)
    return d


def rebuild_space(params, geometry):
    kind = params["kind"]
    if kind == "rect":
        return build_rect_space(params["J"], geometry)
    if kind == "polar":
        return build_polar_space(params["J_r"], params["J_f"], geometry.chart)
    if kind == "dd":
        return build_dd_space(geometry, params["J"], params.get("norm", "standard"),
                              params.get("continuity", "tangential"))
    raise FormatError(f"unknown space kind {kind!r}")


def save_space(path, space):
    """Space cache: header, raw basis and Gramian as little-endian doubles."""
    header = dict(space_params(space), N_dd=space.n_elements, M_hf=space.B.shape[1],
                  M=space.dim, raw=space.raw_size)
    np.savez(path, header=json.dumps(header), B=space.B.astype("<f8"),
             G=space.G.astype("<f8"))


def load_space_arrays(path):
    with np.load(path) as z:
        return json.loads(str(z["header"])), z["B"].copy(), z["G"].copy()


# ---------------------------------------------------------------------------
# reduced-model bundle

def _regressor_arrays(prefix, reg):
    if reg is None:
        return {}
    out = {f"{prefix}_threshold": np.float64(reg.threshold),
           f"{prefix}_inactive": np.str_(reg.inactive),
           f"{prefix}_mean": reg.mean, f"{prefix}_r2": reg.r2,
           f"{prefix}_active": reg.active, f"{prefix}_lo": reg.lo, f"{prefix}_hi": reg.hi,
           f"{prefix}_n_out": np.int64(reg.n_out)}
    if reg.interp is not None:
        f = reg.interp
        out.update({f"{prefix}_centers": f.centers, f"{prefix}_weights": f.weights,
                    f"{prefix}_tail": f.tail, f"{prefix}_span": f.span})
    return out


def _regressor_from(prefix, z):
    if f"{prefix}_n_out" not in z:
        return None
    state = {"threshold": float(z[f"{prefix}_threshold"]),
             "inactive": str(z[f"{prefix}_inactive"]),
             "mean": z[f"{prefix}_mean"], "r2": z[f"{prefix}_r2"],
             "active": z[f"{prefix}_active"].astype(bool), "lo": z[f"{prefix}_lo"],
             "hi": z[f"{prefix}_hi"], "n_out": int(z[f"{prefix}_n_out"]), "interp": None}
    if f"{prefix}_centers" in z:
        f = object.__new__(TPSInterpolant)
        f.centers = z[f"{prefix}_centers"]
        f.weights = z[f"{prefix}_weights"]
        f.tail = z[f"{prefix}_tail"]
        f.span = z[f"{prefix}_span"]
        f.lo, f.hi = state["lo"], state["hi"]
        state["interp"] = f
    return CoefficientRegressor.from_arrays(state)


def save_model(path, model):
    arrays = {
        "format_version": np.int64(FORMAT_VERSION),
        "fingerprint": np.str_(model.fingerprint),
        "meta": np.str_(json.dumps(model.meta)),
        "geometry": np.str_(json.dumps(geometry_to_dict(model.geometry))),
        "mesh_degree": np.int64(model.mesh.degree),
        "mesh_nodes": model.mesh.nodes, "mesh_conn": model.mesh.conn,
        "mesh_labels": model.mesh.labels, "mesh_refs": model.mesh.refs,
        "norm": np.str_(model.norm),
        "Z": model.Z, "eigenvalues": model.eigenvalues,
        "space": np.str_(json.dumps(space_params(model.space))),
        "W": model.space.B if model.space is not None else np.zeros((0, 0)),
    }
    arrays.update(_regressor_arrays("map", model.mapping))
    arrays.update(_regressor_arrays("sol", model.solution))
    for k, v in arrays.items():
        if isinstance(v, np.ndarray) and v.dtype.kind == "f":
            arrays[k] = v.astype("<f8")
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path):
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported bundle version {version}")
        geometry = geometry_from_dict(json.loads(str(z["geometry"])))
        mesh = FEMesh(z["mesh_nodes"], z["mesh_conn"], int(z["mesh_degree"]),
                      z["mesh_labels"], z["mesh_refs"])
        sp = json.loads(str(z["space"]))
        space = None
        if sp and z["W"].size:
            space = rebuild_space(sp, geometry).with_basis(z["W"])
        return ReducedModel(mesh, geometry, space, _regressor_from("map", z), z["Z"],
                            z["eigenvalues"], _regressor_from("sol", z), str(z["norm"]),
                            str(z["fingerprint"]), json.loads(str(z["meta"])))


def read_fingerprint(path):
    with np.load(path, allow_pickle=False) as z:
        return str(z["fingerprint"])

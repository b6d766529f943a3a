"""Run configuration: flat INI sections, exact float round trips."""
import configparser
import hashlib
import os
from dataclasses import dataclass, field, fields

from .registration import RegistrationConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # [paths]
    mesh: str = ""
    partition: str = ""
    snapshots: str = ""
    params: str = ""
    test_snapshots: str = ""
    test_params: str = ""
    output: str = "run"
    # [sensor]
    sensor_approach: str = "grid_fit"
    xi_s: float = 1e-4
    sensor_cells: int = 19
    # [space]
    space_kind: str = "dd"
    J: int = 6
    J_r: int = 8
    J_f: int = 6
    map_norm: str = "standard"
    # [reduce]
    pod_tol: float = 1e-3
    pod_n: int = 0
    n_sweep: str = ""
    r2_threshold: float = 0.75
    norm: str = "H1"
    registered: bool = True
    # [run]
    seed: int = 0
    template: int = -1          # -1: training snapshot nearest the box center
    # [synth]
    synth_kind: str = "square_front"
    n_train: int = 20
    n_test: int = 20
    mesh_cells: int = 0
    design: str = "random"      # training design: random | grid
    # registration constants and optimizer settings
    reg: RegistrationConfig = field(default_factory=RegistrationConfig)

    def sweep(self):
        return [int(v) for v in self.n_sweep.replace(",", " ").split()] if self.n_sweep else []


SECTIONS = {
    "paths": ["mesh", "partition", "snapshots", "params", "test_snapshots", "test_params",
              "output"],
    "sensor": [("approach", "sensor_approach"), "xi_s", ("cells", "sensor_cells")],
    "space": [("kind", "space_kind"), "J", "J_r", "J_f", ("norm", "map_norm")],
    "reduce": ["pod_tol", "pod_n", "n_sweep", "r2_threshold", "norm", "registered"],
    "run": ["seed", "template"],
    "synth": [("kind", "synth_kind"), "n_train", "n_test", "mesh_cells", "design"],
}
REG_KEYS = ["xi", "xi_msh", "eps", "c_exp_factor", "delta", "f_msh_max", "tol", "tol_pod",
            "n_max", "quad_order", "rho_c", "max_escalations", "max_step"]
OPT_KEYS = ["max_iter", "grad_tol"]
# sections that do not affect numerical results
NON_NUMERIC = {"paths"}


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _parse(text, proto):
    if isinstance(proto, bool):
        t = text.strip().lower()
        if t in ("1", "true", "yes", "on"):
            return True
        if t in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if isinstance(proto, int):
        return int(text)
    if isinstance(proto, float):
        return float(text)
    return text


def _entries(cfg):
    """(section, key, attribute owner, attribute name) for every setting."""
    for sec, keys in SECTIONS.items():
        for k in keys:
            key, attr = (k, k) if isinstance(k, str) else k
            yield sec, key, cfg, attr
    for k in REG_KEYS:
        yield "reg", k, cfg.reg, k
    for k in OPT_KEYS:
        yield "opt", k, cfg.reg, k


def to_parser(cfg):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec, key, owner, attr in _entries(cfg):
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, _fmt(getattr(owner, attr)))
    return cp


def dumps(cfg):
    lines = []
    cp = to_parser(cfg)
    for sec in cp.sections():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in cp.items(sec))
        lines.append("")
    return "\n".join(lines)


def loads(text, base_dir=None):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig()
    known = {(s, k) for s, k, _, _ in _entries(cfg)}
    for sec in cp.sections():
        for key in cp[sec]:
            if (sec, key) not in known:
                raise ConfigError(f"unknown config key {sec}.{key}")
    reg_vals = {}
    for sec, key, owner, attr in _entries(cfg):
        if cp.has_option(sec, key):
            try:
                val = _parse(cp.get(sec, key), getattr(owner, attr))
            except ValueError as exc:
                raise ConfigError(f"bad value for {sec}.{key}: {exc}") from exc
            if owner is cfg.reg:
                reg_vals[attr] = val
            else:
                setattr(cfg, attr, val)
    try:
        cfg.reg = RegistrationConfig(**{**cfg.reg.__dict__, **reg_vals})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if base_dir:
        for k in SECTIONS["paths"]:
            v = getattr(cfg, k)
            if v and not os.path.isabs(v):
                setattr(cfg, k, os.path.join(base_dir, v))
    return cfg


def load(path):
    with open(path) as fh:
        return loads(fh.read(), os.path.dirname(os.path.abspath(path)))


def save(cfg, path):
    with open(path, "w") as fh:
        fh.write(dumps(cfg))


def fingerprint(cfg):
    """SHA-256 of the numerical settings (paths excluded)."""
    cp = to_parser(cfg)
    parts = []
    for sec in sorted(cp.sections()):
        if sec in NON_NUMERIC:
            continue
        for k, v in sorted(cp.items(sec)):
            parts.append(f"{sec}.{k}={v}")
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()


def check_files(cfg, keys):
    missing = [k for k in keys if not getattr(cfg, k) or not os.path.exists(getattr(cfg, k))]
    if missing:
        raise ConfigError("missing input files: " + ", ".join(
            f"{k}={getattr(cfg, k)!r}" for k in missing))


__all__ = ["RunConfig", "ConfigError", "dumps", "loads", "load", "save", "fingerprint",
           "check_files", "fields"]

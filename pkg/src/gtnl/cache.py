"""Named vertex lists: user cache directory, bundled files, or on-demand enumeration."""
from __future__ import annotations

import logging
import os
from importlib import resources
from pathlib import Path

from .behavior import standard_witness
from .polytope import VRep, build_ns_hrep, enumerate_vertices, extend_vertices
from .scenario import TRIPARTITE

log = logging.getLogger(__name__)

ENV_VAR = "GTNL_CACHE_DIR"

# name -> file stem; the saturating lists are the reduced constraint sets
VERTEX_SETS = {
    "ns": "ns_222",
    "saturating-mao": "saturating_mao",
    "saturating-cao": "saturating_cao",
    "halfspace-mao": "halfspace_mao",
    "halfspace-cao": "halfspace_cao",
}

EXPECTED_COUNTS = {
    "ns": 53856, "saturating-mao": 3200, "saturating-cao": 3664,
    "halfspace-mao": 56767, "halfspace-cao": 57283,
}


def cache_dir() -> Path:
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "gtnl"


def _bundled(stem: str) -> Path | None:
    ref = resources.files("gtnl") / "data" / f"{stem}.gtnlv"
    return Path(str(ref)) if ref.is_file() else None


def _compute(name: str) -> VRep:
    h = build_ns_hrep(TRIPARTITE)
    if name == "ns":
        return enumerate_vertices(h)
    kind, wit = name.split("-")
    base = load_vertices("ns")
    mode = "hyperplane" if kind == "saturating" else "halfspace"
    return extend_vertices(h, base, standard_witness(wit), mode)


def load_vertices(name: str, compute: bool = True, directory: Path | str | None = None) -> VRep:
    """Load a named vertex list, computing and caching it when no file is found."""
    if name not in VERTEX_SETS:
        raise KeyError(f"unknown vertex set {name!r}; choose from {sorted(VERTEX_SETS)}")
    stem = VERTEX_SETS[name]
    root = Path(directory) if directory is not None else cache_dir()
    for path in (root / f"{stem}.gtnlv", _bundled(stem)):
        if path is not None and path.is_file():
            log.debug("loading %s from %s", name, path)
            return VRep.load(path)
    if not compute:
        raise FileNotFoundError(f"no cached vertex list {name!r} in {root}")
    v = _compute(name)
    try:
        root.mkdir(parents=True, exist_ok=True)
        v.save(root / f"{stem}.gtnlv")
    except OSError as exc:  # read-only location is not fatal
        log.warning("could not write cache %s: %s", root, exc)
    return v

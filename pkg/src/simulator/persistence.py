"""Fitted-SCM archive: a JSON manifest plus a numeric .npz array store.

Nothing is pickled; trees, coefficients and empirical values are plain arrays
and every label lives in the manifest.
"""
from dataclasses import replace
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from causal.graph import build_graph
from common.errors import DataError, MissingFileError, ReportError
from ingestion.schema import VariableSchema
from simulator.config import parse_config
from simulator.samplers import sampler_from_state
from simulator.scm import DIAGNOSTIC_COLUMNS, FittedSCM, json_default, state_digest
from simulator.transitions import RULES

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
ARRAYS = "arrays.npz"
FORMAT_VERSION = 1


def save_scm(scm, path):
    """Write the fitted SCM into directory ``path``; returns the directory."""
    path = Path(path)
    meta, arrays = scm.state()
    for key, arr in arrays.items():
        if np.asarray(arr).dtype.kind == "O":
            raise DataError(f"array '{key}' holds Python objects and cannot be stored without pickle")
    manifest = {"format": FORMAT_VERSION, "digest": scm.digest, "state": meta}
    try:
        path.mkdir(parents=True, exist_ok=True)
        (path / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True, default=json_default))
        np.savez(path / ARRAYS, **arrays)
    except OSError as err:
        raise ReportError(f"cannot write fitted SCM to {path}: {err}") from err
    logger.info("Saved fitted SCM (%d arrays) to %s", len(arrays), path)
    return path


def _split(prefix, arrays):
    head = f"{prefix}."
    return {k[len(head):]: v for k, v in arrays.items() if k.startswith(head)}


def scm_from_state(meta, arrays):
    config = parse_config(meta["config"])
    graph = build_graph(config.graph_spec())
    schema = {v["name"]: VariableSchema.from_dict(v) for v in meta["schema"]}
    samplers = {
        name: sampler_from_state(sampler_meta, _split(f"samplers.{name}", arrays))
        for name, sampler_meta in meta["samplers"].items()
    }
    rules = {
        name: RULES[rule["kind"]](variable=name, params=rule["params"], sampler=samplers[name])
        for name, rule in meta["rules"].items()
    }
    diagnostics = pd.DataFrame(meta["diagnostics"], columns=DIAGNOSTIC_COLUMNS)
    return FittedSCM(
        config=config,
        graph=graph,
        schema=schema,
        samplers=samplers,
        rules=rules,
        diagnostics=diagnostics,
        initial_order=tuple(meta["initial_order"]),
        transition_order=tuple(meta["transition_order"]),
        noise_width=int(meta["noise_width"]),
    )


def load_scm(path, verify=True):
    """Read an archive written by save_scm.

    With ``verify`` the digest recomputed from the loaded state must equal the
    stored one.
    """
    path = Path(path)
    for name in (MANIFEST, ARRAYS):
        if not (path / name).exists():
            raise MissingFileError(path / name)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except json.JSONDecodeError as err:
        raise DataError(f"corrupt SCM manifest {path / MANIFEST}: {err}") from err
    if manifest.get("format") != FORMAT_VERSION:
        raise DataError(f"unsupported SCM archive format {manifest.get('format')!r}")

    with np.load(path / ARRAYS, allow_pickle=False) as store:
        arrays = {key: store[key] for key in store.files}
    meta = manifest["state"]
    digest = state_digest(meta, arrays)
    if verify and digest != manifest["digest"]:
        raise DataError(f"fitted SCM at {path} does not match its digest")
    scm = scm_from_state(meta, arrays)
    scm = replace(scm, digest=manifest["digest"])
    logger.info("Loaded fitted SCM from %s (digest %s)", path, scm.digest[:12])
    return scm

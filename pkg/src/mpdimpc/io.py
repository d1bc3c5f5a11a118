"""JSON and CSV persistence: plants, explicit solutions, traces, summaries.

Floats go through ``json``'s ``repr``, the shortest decimal that parses back
to the same double, so plant files round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .mpc import CondensedQP
from .mpqp import CriticalRegion, ExplicitSolution
from .plant import Bounds, SubsystemNetwork
from .polyhedra import Polyhedron

FORMAT_VERSION = 1


class SchemaError(ValueError):
    pass


class FingerprintMismatch(ValueError):
    pass


def load_schema(name: str) -> dict:
    text = resources.files("mpdimpc").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc: dict, name: str) -> None:
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{name}: {exc.message}") from exc


def _mat(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unmat(d) -> np.ndarray:
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


def _dump(doc, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _read(path, name: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    validate(doc, name)
    return doc


# plants


def plant_to_dict(net: SubsystemNetwork) -> dict:
    b = net.bounds
    return {
        "version": FORMAT_VERSION,
        "M": net.M,
        "seed": net.seed,
        "subsystems": [
            {"A": _mat(net.A_i[i]), "B": [_mat(net.B_ij[i][j]) for j in range(net.M)]} for i in range(net.M)
        ],
        "bounds": {k: [float(v) for v in getattr(b, k)] for k in ("x_min", "x_max", "u_min", "u_max")},
    }


def plant_from_dict(doc: dict) -> SubsystemNetwork:
    validate(doc, "plant")
    subs = doc["subsystems"]
    if len(subs) != doc["M"] or any(len(s["B"]) != doc["M"] for s in subs):
        raise SchemaError("plant: subsystem count does not match M")
    bounds = Bounds(**{k: np.asarray(v, dtype=float) for k, v in doc["bounds"].items()})
    return SubsystemNetwork(
        [_unmat(s["A"]) for s in subs],
        [[_unmat(B) for B in s["B"]] for s in subs],
        bounds,
        seed=doc.get("seed"),
    )


def save_plant(net: SubsystemNetwork, path) -> None:
    _dump(plant_to_dict(net), Path(path))


def load_plant(path) -> SubsystemNetwork:
    return plant_from_dict(_read(path, "plant"))


# explicit solutions


def _regions_checksum(regions: list, adjacency: list) -> str:
    h = hashlib.sha256(json.dumps([regions, adjacency], sort_keys=True).encode())
    return h.hexdigest()


def solution_to_dict(sol: ExplicitSolution, controller: int | None = None, Np: int | None = None) -> dict:
    regions = [
        {
            "id": r.id,
            "active_set": list(r.active_set),
            "Phi": _mat(r.region.Phi),
            "phi": [float(v) for v in r.region.phi],
            "gain": _mat(r.gain),
            "offset": [float(v) for v in r.offset],
            "radius": float(r.radius),
        }
        for r in sol.regions
    ]
    adjacency = [list(p) for p in sol.adjacency]
    return {
        "version": FORMAT_VERSION,
        "fingerprint": sol.fingerprint,
        "controller": controller,
        "Np": Np,
        "n_CR": sol.n_CR,
        "theta_box": {"Phi": _mat(sol.theta_box.Phi), "phi": [float(v) for v in sol.theta_box.phi]},
        "regions": regions,
        "adjacency": adjacency,
        "checksum": _regions_checksum(regions, adjacency),
    }


def solution_from_dict(doc: dict, problem: CondensedQP | None = None) -> ExplicitSolution:
    """Rebuild a solution, checking its integrity and (if given) its problem.

    Raises
    ------
    FingerprintMismatch
        When the region payload was altered or ``problem`` is not the one the
        solution was computed for.
    """
    validate(doc, "explicit")
    if _regions_checksum(doc["regions"], doc["adjacency"]) != doc["checksum"]:
        raise FingerprintMismatch("explicit solution content does not match its checksum")
    if problem is not None and problem.fingerprint() != doc["fingerprint"]:
        raise FingerprintMismatch("explicit solution was computed for a different problem")
    if len(doc["regions"]) != doc["n_CR"]:
        raise SchemaError("explicit: n_CR does not match the region list")
    regions = []
    for r in doc["regions"]:
        regions.append(
            CriticalRegion(
                Polyhedron(_unmat(r["Phi"]), np.asarray(r["phi"], dtype=float)),
                _unmat(r["gain"]),
                np.asarray(r["offset"], dtype=float),
                tuple(r["active_set"]),
                r["id"],
                r["radius"],
            )
        )
    tb = doc["theta_box"]
    sol = ExplicitSolution(regions, Polyhedron(_unmat(tb["Phi"]), np.asarray(tb["phi"], dtype=float)), problem, doc["fingerprint"])
    sol.set_adjacency([tuple(p) for p in doc["adjacency"]])
    return sol


def save_solution(sol: ExplicitSolution, path, controller=None, Np=None) -> None:
    _dump(solution_to_dict(sol, controller, Np), Path(path))


def load_solution(path, problem: CondensedQP | None = None) -> ExplicitSolution:
    return solution_from_dict(_read(path, "explicit"), problem)


# traces and summaries


def trace_header(net: SubsystemNetwork) -> list[str]:
    return (
        ["k"]
        + [f"x_{j + 1}" for j in range(net.n_x)]
        + [f"u_{j + 1}" for j in range(net.n_u)]
        + [f"y_{i + 1}" for i in range(net.M)]
        + ["iterations", "transfers", "combos", "fallback", "wall_time_ns"]
    )


def write_trace(trace, net: SubsystemNetwork, path) -> None:
    """One row per applied input; ``x`` and ``y`` are taken at step ``k``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(net))
        for k in range(trace.steps):
            w.writerow(
                [k]
                + [repr(float(v)) for v in trace.x[k]]
                + [repr(float(v)) for v in trace.u[k]]
                + [repr(float(v)) for v in trace.y[k]]
                + [trace.iterations[k], trace.transfers[k], trace.combos[k], int(trace.used_fallback[k]), trace.wall_time_ns[k]]
            )


def read_trace(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: missing header row")
    return rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))


def save_summary(doc: dict, path) -> None:
    validate(doc, "summary")
    _dump(doc, Path(path))

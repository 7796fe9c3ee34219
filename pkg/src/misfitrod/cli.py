"""Command-line entry point.

Subcommands: ``gamma`` (single estimate), ``sweep`` (crossover), ``construct``
(emit a construction field and its itemized energies), ``probe`` (inequality
probes), ``gammaconv`` (thin-rod convergence trend). The run configuration is
a single INI file with nested sections; unknown sections or keys are
rejected. Outputs are JSON records, CSV tables and (x, y) plot-data files,
every one carrying the configuration hash; logs go to standard error. Reruns
with the same configuration, seed and thread count write identical bytes.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

__all__ = ["main", "run", "load_config", "ConfigError"]


class ConfigError(ValueError):
    def __init__(self, message, exit_code=2):
        super().__init__(message)
        self.exit_code = exit_code


_SCHEMA = {
    "material": {"p": float, "alpha": float, "zeta": "floats"},
    "geometry": {
        "section": str,
        "r": float,
        "m_factor": float,
        "cells_per_radius": int,
        "dislocation_polygon": "points",
        "burgers": "floats",
    },
    "solver": {
        "grad_tol": float,
        "max_iter": int,
        "num_starts": int,
        "seed": int,
        "perturb_amplitude": float,
        "lbfgs_memory": int,
    },
    "experiment": {
        "r_list": "floats",
        "h_list": "floats",
        "quadrant_count": int,
        "base": str,
        "probe": str,
        "samples": int,
        "m_sensitivity": "bool",
        "band_angle": float,
        "block_max_iter": int,
        "rotations": int,
    },
    "output": {"dir": str},
}


def _parse_value(raw, kind, where):
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind is str:
            return raw.strip()
        if kind == "bool":
            v = raw.strip().lower()
            if v in ("true", "yes", "1", "on"):
                return True
            if v in ("false", "no", "0", "off"):
                return False
            raise ValueError("expected a boolean")
        if kind == "floats":
            return [float(x) for x in raw.replace(",", " ").split()]
        if kind == "points":
            pts = []
            for chunk in raw.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                xy = [float(x) for x in chunk.replace(",", " ").split()]
                if len(xy) != 2:
                    raise ValueError("each vertex needs exactly 2 coordinates")
                pts.append(xy)
            return pts
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from e
    raise AssertionError(kind)


def load_config(path) -> dict:
    """Parse and validate the INI run configuration."""
    cp = configparser.ConfigParser()
    try:
        with open(path) as f:
            cp.read_file(f, source=str(path))
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"config syntax: {e}") from e
    doc: dict = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"{path}: unknown section [{section}] "
                f"(known: {sorted(_SCHEMA)})"
            )
        doc[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"{path}: [{section}] unknown key {key!r} "
                    f"(known: {sorted(_SCHEMA[section])})"
                )
            doc[section][key] = _parse_value(
                raw, _SCHEMA[section][key], f"{path}: [{section}] {key}"
            )
    return doc


def _build_model(doc):
    from .material import ElasticModel, MismatchSpec

    mat = doc.get("material", {})
    p = mat.get("p", 1.5)
    try:
        if "zeta" in mat:
            spec = MismatchSpec(zeta=mat["zeta"])
        else:
            spec = MismatchSpec.from_alpha(mat.get("alpha", 0.05))
        return ElasticModel(mismatch=spec, p=p)
    except ValueError as e:
        raise ConfigError(f"[material]: {e} (det H > 0 requires alpha < 1)") from e


def _build_solver_cfg(doc, seed_override=None):
    from .solver import SolverConfig

    s = dict(doc.get("solver", {}))
    if seed_override is not None:
        s["seed"] = seed_override
    try:
        return SolverConfig(**s)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[solver]: {e}") from e


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _csv_text(header_comment, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(header_comment + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _plot_text(header_comment, pairs) -> str:
    lines = [header_comment]
    lines += [f"{repr(float(x))} {repr(float(y))}" for x, y in pairs]
    return "\n".join(lines) + "\n"


def _geometry(doc):
    g = doc.get("geometry", {})
    return {
        "section": g.get("section", "disk"),
        "r": g.get("r", 1.0),
        "m_factor": g.get("m_factor", 1.5),
        "cells_per_radius": g.get("cells_per_radius", 12),
        "polygon": g.get("dislocation_polygon"),
        "burgers": g.get("burgers"),
    }


def _cmd_gamma(doc, model, cfg, out, chash, inputs_id):
    from .experiments import (
        ExperimentRecord,
        gamma_dislocated,
        gamma_elastic,
    )
    from .geometry import CrossSection, build_grid, rasterize_dislocation
    import numpy as np

    geo = _geometry(doc)
    r = geo["r"]
    a = r / geo["cells_per_radius"]
    M = geo["m_factor"] * r
    want_triple = doc.get("experiment", {}).get("m_sensitivity", True)
    if geo["polygon"]:
        grid = build_grid(CrossSection(geo["section"], r), M, a)
        burgers = np.asarray(geo["burgers"] or [0.0, 0.0, 1e-2], float)
        spec = rasterize_dislocation(np.asarray(geo["polygon"]), grid, burgers)
        est, _ = gamma_dislocated(
            r, M, a, spec, model, cfg=cfg, section=geo["section"],
            m_sensitivity=want_triple,
        )
    else:
        est = gamma_elastic(
            r, M, a, model, cfg=cfg, section=geo["section"],
            m_sensitivity=want_triple,
        )
    rec = ExperimentRecord(chash, cfg.seed, inputs_id, {"estimate": est.payload()})
    _write_text(out / "gamma.json", rec.to_json() + "\n")
    lines = [
        f"gamma estimate ({est.kind}, {est.section}, r={est.r:g}, M={est.M:g}, "
        f"a={est.spacing:g})",
        f"  energy upper bound: {est.energy:.12g}",
        f"  restarts: {[f'{e:.12g}' for e in est.restart_energies]}",
        f"  converged: {est.converged} after {est.iterations} iterations",
    ]
    if est.m_sensitivity:
        lines.append(
            "  M-sensitivity (M, 2M, 4M): "
            + ", ".join(f"{e:.12g}" for e in est.m_sensitivity)
        )
    return "\n".join(lines)


def _cmd_sweep(doc, model, cfg, out, chash, inputs_id):
    from .experiments import ExperimentRecord, crossover_sweep

    geo = _geometry(doc)
    exp = doc.get("experiment", {})
    r_list = exp.get("r_list", [1.0, 2.0, 4.0, 8.0])
    result = crossover_sweep(
        r_list,
        model,
        cfg=cfg,
        cells_per_radius=geo["cells_per_radius"],
        m_factor=geo["m_factor"],
        quadrant_count=exp.get("quadrant_count", 4),
        base=exp.get("base", "minimizer"),
    )
    rows = result["rows"]
    cols = [
        "r",
        "spacing",
        "mu",
        "gamma_elastic",
        "elastic_per_r3",
        "gamma_dislocated",
        "dislocated_per_r3",
        "construction_energy",
    ]
    comment = f"# config_hash={chash}"
    _write_text(
        out / "sweep.csv",
        _csv_text(comment, cols, [[row[c] for c in cols] for row in rows]),
    )
    _write_text(
        out / "sweep_elastic.dat",
        _plot_text(comment, [(row["r"], row["elastic_per_r3"]) for row in rows]),
    )
    _write_text(
        out / "sweep_dislocated.dat",
        _plot_text(comment, [(row["r"], row["dislocated_per_r3"]) for row in rows]),
    )
    rec = ExperimentRecord(chash, cfg.seed, inputs_id, result)
    _write_text(out / "sweep.json", rec.to_json() + "\n")
    rstar = result["crossover_radius"]
    lines = ["crossover sweep (per-r^3 energies)"]
    for row in rows:
        lines.append(
            f"  r={row['r']:g}: elastic {row['elastic_per_r3']:.6g}, "
            f"dislocated {row['dislocated_per_r3']:.6g}"
        )
    lines.append(
        f"  crossover radius: {rstar if rstar is not None else 'none in range'}"
    )
    return "\n".join(lines)


def _cmd_construct(doc, model, cfg, out, chash, inputs_id):
    from .constructions import (
        QuadrantGlueSpec,
        RampSpec,
        default_overlap,
        glued_quadrant_field,
        mismatch_ramp,
    )
    from .experiments import ExperimentRecord
    from .fields import save_field
    from .geometry import CrossSection, build_grid

    geo = _geometry(doc)
    r = geo["r"]
    a = r / geo["cells_per_radius"]
    M = geo["m_factor"] * r
    exp = doc.get("experiment", {})
    payload = {}
    if geo["section"] == "square":
        grid = build_grid(CrossSection("square", r), M, a)
        mu = default_overlap(r, a)
        spec = QuadrantGlueSpec(
            r=r, mu=mu, M=M, quadrant_count=exp.get("quadrant_count", 4)
        )
        fld, E, breakdown = glued_quadrant_field(spec, grid, model)
        payload["glued_quadrants"] = breakdown
        save_field(fld, out / "construct_field.npz")
        summary = (
            f"glued-quadrant construction: r={r:g} mu={mu:g} energy={E:.10g}\n"
            + "\n".join(f"  {k}: {v}" for k, v in breakdown.items())
        )
    else:
        grid = build_grid(CrossSection(geo["section"], r), M, a)
        fld, E = mismatch_ramp(RampSpec.for_model(model), grid, model)
        payload["mismatch_ramp"] = {"energy": E}
        save_field(fld, out / "construct_field.npz")
        summary = f"mismatch ramp: r={r:g} energy={E:.10g}"
    rec = ExperimentRecord(chash, cfg.seed, inputs_id, payload)
    _write_text(out / "construct.json", rec.to_json() + "\n")
    return summary


def _cmd_probe(doc, model, cfg, out, chash, inputs_id):
    from .estimates import (
        pointwise_equivalence_probe,
        poincare_probe,
        rigidity_ratio_probe,
    )
    from .experiments import ExperimentRecord
    from .geometry import CrossSection, build_grid
    import numpy as np

    geo = _geometry(doc)
    exp = doc.get("experiment", {})
    which = exp.get("probe", "all")
    samples = exp.get("samples", 24)
    grid = build_grid(
        CrossSection("square", geo["r"]),
        geo["m_factor"] * geo["r"],
        geo["r"] / geo["cells_per_radius"],
    )
    reports = []
    if which in ("all", "rigidity"):
        reports.append(
            rigidity_ratio_probe(samples, grid, p=model.p, mode="classic",
                                 seed=cfg.seed)
        )
        reports.append(
            rigidity_ratio_probe(samples, grid, p=model.p, mode="truncated",
                                 seed=cfg.seed)
        )
    if which in ("all", "poincare"):
        reports.append(poincare_probe(max(2, samples // 4), grid, p=model.p,
                                      seed=cfg.seed))
    if which in ("all", "equivalence"):
        reports.append(
            pointwise_equivalence_probe(
                max(1000, samples * 10), 5.0 * np.eye(3), p=model.p,
                seed=cfg.seed,
            )
        )
    rec = ExperimentRecord(
        chash, cfg.seed, inputs_id, {"probes": [rep.payload() for rep in reports]}
    )
    _write_text(out / "probes.json", rec.to_json() + "\n")
    lines = ["inequality probes"]
    for rep in reports:
        lines.append(
            f"  {rep.name}: max ratio {rep.max_ratio:.6g}, calibrated "
            f"{rep.calibrated_constant:.6g}, stable={rep.stable}"
        )
    return "\n".join(lines)


def _cmd_gammaconv(doc, model, cfg, out, chash, inputs_id):
    from .constructions import RampSpec, RecoverySpec, mismatch_ramp
    from .experiments import ExperimentRecord, gamma_convergence_trend
    from .geometry import CrossSection, build_grid
    from .solver import EndClamp, SolverConfig, minimize
    from .so3 import exp_so3
    import dataclasses
    import numpy as np

    geo = _geometry(doc)
    exp = doc.get("experiment", {})
    h_list = exp.get("h_list", [1 / 8, 1 / 16, 1 / 32])
    r = geo["r"]
    a = r / geo["cells_per_radius"]
    bgrid = build_grid(CrossSection(geo["section"], r), 2.0, a)
    u0, _ = mismatch_ramp(RampSpec.for_model(model), bgrid, model)
    block_cfg = dataclasses.replace(
        cfg, max_iter=exp.get("block_max_iter", cfg.max_iter), num_starts=1
    )
    res = minimize(
        u0, EndClamp(np.eye(3), model.well_right), block_cfg, model
    )
    theta = exp.get("band_angle", 0.05)
    spec = RecoverySpec(
        L=1.5,
        h=h_list[0],
        sigma_h=float(np.sqrt(h_list[0])),
        left_rotations=[exp_so3(np.array([0.0, 0.0, theta])), np.eye(3)],
        left_breaks=[-0.75],
        right_rotations=[np.eye(3)],
        right_breaks=[],
        block=res.field,
        block_energy=res.energy,
    )
    result = gamma_convergence_trend(
        h_list, spec, model, cfg=cfg,
        include_minimizer=exp.get("m_sensitivity", False),
    )
    comment = f"# config_hash={chash}"
    _write_text(
        out / "gammaconv.dat",
        _plot_text(comment, [(row["h"], row["recovery"]) for row in result["rows"]]),
    )
    rec = ExperimentRecord(chash, cfg.seed, inputs_id, result)
    _write_text(out / "gammaconv.json", rec.to_json() + "\n")
    lines = [f"thin-rod trend (block energy {res.energy:.8g})"]
    for row in result["rows"]:
        lines.append(f"  h={row['h']:g}: recovery {row['recovery']:.8g}")
    return "\n".join(lines)


_COMMANDS = {
    "gamma": _cmd_gamma,
    "sweep": _cmd_sweep,
    "construct": _cmd_construct,
    "probe": _cmd_probe,
    "gammaconv": _cmd_gammaconv,
}


def run(command: str, config_path, out_dir=None, seed=None, threads=None) -> int:
    """Load the config, dispatch the command, persist records; returns the
    exit status."""
    from .experiments import config_hash, content_id

    t0 = time.time()
    try:
        raw = Path(config_path).read_bytes()
        doc = load_config(config_path)
        model = _build_model(doc)
        cfg = _build_solver_cfg(doc, seed_override=seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return getattr(e, "exit_code", 2)
    out = Path(out_dir or doc.get("output", {}).get("dir", "out"))
    doc_for_hash = dict(doc)
    doc_for_hash["_command"] = command
    doc_for_hash["_seed"] = cfg.seed
    chash = config_hash(doc_for_hash)
    inputs_id = content_id(raw)
    try:
        summary = _COMMANDS[command](doc, model, cfg, out, chash, inputs_id)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return getattr(e, "exit_code", 2)
    except Exception as e:  # solver aborts and validation failures
        from .experiments import ExperimentRecord

        rec = ExperimentRecord(
            chash, cfg.seed, inputs_id, {"error": f"{type(e).__name__}: {e}"}
        )
        _write_text(out / f"{command}_error.json", rec.to_json() + "\n")
        print(f"run failed: {e}", file=sys.stderr)
        return 1
    print(summary)
    logging.getLogger("misfitrod").info(
        "%s finished in %.1fs (config %s)", command, time.time() - t0, chash
    )
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="misfitrod",
        description="Two-well rod laboratory: transition costs, dislocations, "
        "scaling experiments",
    )
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", required=True, help="INI run configuration")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override solver seed")
    ap.add_argument("--threads", type=int, default=None,
                    help="BLAS/OpenMP thread cap")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
    )
    return run(args.command, args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())

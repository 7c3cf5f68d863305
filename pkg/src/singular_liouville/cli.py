"""Batch front end: ``python -m singular_liouville --config run.json``.

Four experiments are available:

``identities``      closed-form integral identities for each requested alpha
``kernels``         projection expansions and kernel Gram matrices on a delta ladder
``reduction_scan``  hypotheses, the constant A, and the reduced map on a grid of B
``continuation``    the full construction along a decreasing lambda ladder

Every artifact starts with the package version and a hash of the effective
configuration, and contains no timestamps, so identical configurations
reproduce identical files.

Exit codes: 0 success, 2 usage/config error, 3 numerical failure,
4 continuation produced no converged row.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__

EXPERIMENTS = ("identities", "kernels", "reduction_scan", "continuation")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_NO_ROOT = 0, 2, 3, 4

_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "singular_liouville run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "domain": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["unit_disk", "scaled_disk", "curve"]},
                "radius": _POS,
                "fourier_cos": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "fourier_sin": {"type": "array", "items": {"type": "number"}},
                "symmetry_order": {"type": "integer", "minimum": 1},
                "n_boundary": {"type": "integer", "minimum": 64},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "potential": {
            "type": "object",
            "properties": {
                "profile": {"enum": ["quadratic", "expr"]},
                "a0": _POS,
                "grad": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "a11": {"type": "number"}, "a22": {"type": "number"}, "a12": {"type": "number"},
                "expr": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "N": {"type": "integer", "minimum": 1},
        "lambda_ladder": {"type": "array", "items": _POS, "minItems": 1},
        "alphas": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "xi": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                          "minItems": 2, "maxItems": 2}},
        "deltas": {"type": "array", "items": _POS, "minItems": 1},
        "b_scaled": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "scan": {
            "type": "object",
            "properties": {"radius": _POS, "n": {"type": "integer", "minimum": 2, "maximum": 101}},
            "additionalProperties": False,
        },
        "tolerances": {
            "type": "object",
            "properties": {"quadrature": _POS, "contraction": _POS, "newton_factor": _POS},
            "additionalProperties": False,
        },
        "mesh": {
            "type": "object",
            "properties": {"h": _POS, "grade_ratio": _POS},
            "additionalProperties": False,
        },
        "force": {"type": "boolean"},
        "write_fields": {"type": "boolean"},
        "output_dir": {"type": "string"},
    },
    "required": ["experiment"],
}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated run configuration; ``from_dict`` applies the schema and the semantic checks."""

    experiment: str
    domain: dict = field(default_factory=lambda: {"kind": "unit_disk"})
    potential: dict = field(default_factory=lambda: {"profile": "quadratic", "a0": 1.0, "a11": 1.0, "a22": 1.0})
    N: int = 2
    lambda_ladder: list = field(default_factory=lambda: [1e-2, 3e-3, 1e-3, 3e-4, 1e-4])
    alphas: list = field(default_factory=lambda: [1, 2, 3, 4])
    xi: list = field(default_factory=lambda: [[0.0, 0.0], [0.5, 0.25]])
    deltas: list = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    b_scaled: list = field(default_factory=lambda: [0.0, 0.0])
    scan: dict = field(default_factory=lambda: {"radius": 2.0, "n": 9})
    tolerances: dict = field(default_factory=lambda: {"quadrature": 1e-10, "contraction": 1e-11,
                                                      "newton_factor": 1e-9})
    mesh: dict = field(default_factory=lambda: {"h": 0.05, "grade_ratio": 0.05})
    force: bool = False
    write_fields: bool = True
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
        if errors:
            e = errors[0]
            path = "/".join(str(p) for p in e.absolute_path) or "<root>"
            raise UsageError(f"config error at {path}: {e.message}")
        base = cls(experiment=data["experiment"])
        merged = asdict(base)
        for k, v in data.items():
            if isinstance(v, dict) and isinstance(merged.get(k), dict) and k not in ("domain", "potential"):
                merged[k] = {**merged[k], **v}
            else:
                merged[k] = v
        cfg = cls(**merged)
        lam = cfg.lambda_ladder
        if any(a <= b for a, b in zip(lam, lam[1:])):
            raise UsageError("config error at lambda_ladder: values must be strictly decreasing")
        return cfg

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

class Emitter:
    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.header = f"singular_liouville {__version__} config={cfg.digest()}"
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, rows: list[dict]) -> Path:
        path = self.out / name
        keys: list[str] = []
        for r in rows:
            for k in r:
                if k not in keys:
                    keys.append(k)
        buf = io.StringIO()
        buf.write(f"# {self.header}\n")
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in keys})
        path.write_text(buf.getvalue())
        self.files.append(name)
        return path

    def field(self, name: str, fld) -> None:
        fld.to_csv(self.out / name, header=[self.header])
        self.files.append(name)

    def mesh(self, stem: str, disc) -> None:
        pn, pc = disc.write_csv(self.out / stem, header=[self.header])
        self.files += [pn.name, pc.name]

    def report(self, body: dict) -> Path:
        doc = {"meta": {"package": "singular_liouville", "version": __version__, "config_hash": self.cfg.digest(),
                        "config": asdict(self.cfg)},
               **_jsonable(body), "files": sorted(self.files)}
        path = self.out / "report.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return v


def _jsonable(x: Any):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _table(rows: list[dict], keys: list[str]) -> str:
    cells = [[k for k in keys]] + [[_short(r.get(k, "")) for k in keys] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(keys))]
    return "\n".join("  ".join(c[i].rjust(widths[i]) for i in range(len(keys))) for c in cells)


def _short(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _identities(cfg: RunConfig, em: Emitter) -> tuple[int, dict, str]:
    from .quadrature import canonical_identities

    rows = []
    for a in cfg.alphas:
        for re_, im_ in cfg.xi:
            rep = canonical_identities(int(a), complex(re_, im_), cfg.tolerances["quadrature"])
            vals, exp = rep.as_dict(), rep.expected()
            row = {"alpha": a, "xi_re": re_, "xi_im": im_}
            for k in exp:
                row[k] = vals[k]
                row[k + "_error"] = abs(vals[k] - exp[k])
            rows.append(row)
    em.csv("ladder_identities.csv", rows)
    keys = ["alpha", "xi_re", "xi_im", "id1", "id2", "id3", "quantization"]
    return EXIT_OK, {"identities": rows}, _table(rows, keys)


def _kernels(cfg: RunConfig, em: Emitter) -> tuple[int, dict, str]:
    from .bubble import BubbleParams, kernel_gram, project_bubble, project_kernel
    from .discretization import Resolution, build
    from .geometry import DomainModel, holomorphic_derivatives

    domain = DomainModel.from_config(cfg.domain)
    rows = []
    for a in cfg.alphas:
        if a < 2:
            continue
        kern = holomorphic_derivatives(domain, 4, int(a))
        for d in cfg.deltas:
            b = complex(*cfg.b_scaled) * d**a
            p = BubbleParams(int(a), float(d), b)
            disc = build(domain, Resolution(h=max(cfg.mesh["h"], 0.1), grade_radius=d))
            _, g_pw = project_bubble(p, disc, kern)
            gaps = [project_kernel(p, j, disc)[1] for j in range(3)]
            gram = kernel_gram(p, disc)
            rows.append({"alpha": a, "delta": d, "pw_gap": g_pw, "pz0_gap": gaps[0], "pz1_gap": gaps[1],
                         "pz2_gap": gaps[2], "gram11": gram[0, 0], "gram22": gram[1, 1], "gram12": gram[0, 1],
                         "gram_target": 2 * np.pi * a / 3, "n_nodes": disc.n_nodes})
    fits = {}
    for a in sorted({r["alpha"] for r in rows}):
        sub = [r for r in rows if r["alpha"] == a]
        if len(sub) >= 2:
            d = np.log([r["delta"] for r in sub])
            fits[str(a)] = {k: float(np.polyfit(d, np.log([r[k] for r in sub]), 1)[0])
                            for k in ("pw_gap", "pz0_gap", "pz1_gap", "pz2_gap")}
    em.csv("ladder_kernels.csv", rows)
    keys = ["alpha", "delta", "pw_gap", "pz0_gap", "pz1_gap", "pz2_gap", "gram11", "gram12"]
    return EXIT_OK, {"kernels": rows, "slopes": fits}, _table(rows, keys)


def _reduction_scan(cfg: RunConfig, em: Emitter) -> tuple[int, dict, str]:
    from .geometry import DomainModel, PotentialModel, holomorphic_derivatives
    from .reduction import check_assumptions, jacobian_beta_oracle, reduced_map_F

    domain = DomainModel.from_config(cfg.domain)
    pot = PotentialModel.from_config(cfg.potential)
    alpha = cfg.N + 1
    kern = holomorphic_derivatives(domain, max(4, alpha + 1), alpha)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = check_assumptions(pot, kern, cfg.N)
    R, n = float(cfg.scan["radius"]), int(cfg.scan["n"])
    grid = np.linspace(-R, R, n)
    rows = []
    for b1 in grid:
        for b2 in grid:
            v = reduced_map_F((b1, b2), alpha, tol=cfg.tolerances["quadrature"])
            rows.append({"B1": b1, "B2": b2, "F1": v.F[0], "F2": v.F[1], "J11": v.J[0, 0], "J12": v.J[0, 1],
                         "J21": v.J[1, 0], "J22": v.J[1, 1], "detJ": float(np.linalg.det(v.J))})
    em.csv("ladder_reduction_scan.csv", rows)
    body = {"assumptions": rep.as_dict(), "jacobian_at_zero_oracle": jacobian_beta_oracle(alpha), "scan": rows}
    summary = (f"alpha={alpha} case={rep.theorem_case} A={rep.A_value:.6g} "
               f"grad_residual={rep.gradient_condition_residual:.3g}\n"
               f"DF(0) oracle={jacobian_beta_oracle(alpha):.12g}  grid {n}x{n} on [-{R}, {R}]^2")
    return EXIT_OK, body, summary


def _continuation(cfg: RunConfig, em: Emitter) -> tuple[int, dict, str]:
    from .geometry import DomainModel, PotentialModel
    from .solver import SolverConfig, continuation

    domain = DomainModel.from_config(cfg.domain)
    pot = PotentialModel.from_config(cfg.potential)
    scfg = SolverConfig(tol=cfg.tolerances["contraction"], b_tol_factor=cfg.tolerances["newton_factor"],
                        h=cfg.mesh["h"], grade_ratio=cfg.mesh["grade_ratio"])
    rep = continuation(domain, pot, cfg.N, cfg.lambda_ladder, scfg, force=cfg.force,
                       keep_solutions=cfg.write_fields)
    rows = [{k: v for k, v in r.items()} for r in rep.rows]
    em.csv("ladder_continuation.csv", rows)
    if cfg.write_fields:
        for i, sol in enumerate(getattr(rep, "solutions", [])):
            if sol is None:
                continue
            em.field(f"field_v_{i}.csv", sol.v)
            em.mesh(f"mesh_{i}", sol.v.disc)
    ok = any(r["status"] == "ok" for r in rows)
    keys = ["lambda", "status", "delta", "b_abs", "phi_norm", "mass", "mass_gap", "farfield_error"]
    return (EXIT_OK if ok else EXIT_NO_ROOT), rep.as_dict(), _table(rows, keys)


RUNNERS = {"identities": _identities, "kernels": _kernels, "reduction_scan": _reduction_scan,
           "continuation": _continuation}


def run(cfg: RunConfig, out: str | Path | None = None, stream=None) -> int:
    """Run one experiment and write its artifacts; returns the exit status."""
    stream = stream or sys.stdout
    from .geometry import ConditioningError, DomainError
    from .quadrature import QuadratureError
    from .solver import ContractionError, NearResonanceError

    em = Emitter(cfg, Path(out or cfg.output_dir))
    try:
        status, body, summary = RUNNERS[cfg.experiment](cfg, em)
    except (QuadratureError, ConditioningError, ContractionError, NearResonanceError, DomainError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        em.report({"status": "numerical_error", "error": f"{type(exc).__name__}: {exc}"})
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        em.report({"status": "usage_error", "error": str(exc)})
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    em.report({"status": "ok" if status == EXIT_OK else "no_converged_row", "experiment": cfg.experiment,
               "results": body})
    print(f"[{cfg.experiment}] {em.header}", file=stream)
    print(summary, file=stream)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="singular_liouville",
                                 description="Blow-up solutions of the singular Liouville problem.")
    ap.add_argument("--config", type=Path, help="JSON run configuration")
    ap.add_argument("--experiment", choices=EXPERIMENTS, help="override the configured experiment")
    ap.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    ap.add_argument("--tol-scale", type=float, default=1.0,
                    help="multiply all tolerances by this factor (for quick runs)")
    ap.add_argument("--print-schema", action="store_true", help="print the configuration schema and exit")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.print_schema:
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return EXIT_OK
    data: dict = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"usage error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if not isinstance(data, dict):
            print("usage error: config error at <root>: expected an object", file=sys.stderr)
            return EXIT_USAGE
    if args.experiment:
        data["experiment"] = args.experiment
    if not args.tol_scale > 0:
        print("usage error: --tol-scale must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = RunConfig.from_dict(data)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.tol_scale != 1.0:
        cfg.tolerances = {k: v * args.tol_scale for k, v in cfg.tolerances.items()}
    return run(cfg, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

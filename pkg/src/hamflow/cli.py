"""Batch front end: scenario files in, reports and field files out.

A scenario is one JSON document with a versioned schema, validated
strictly (unknown keys are errors) before anything is built.  Outputs
are deterministic for a fixed scenario and seed; the report's timestamp
is the only varying line.  Exit codes: 0 success, 2 input or validation
error, 3 when any generator verdict lands in the indeterminate band.
"""

from . import _threads  # noqa: F401  (must precede the numeric imports)

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from . import action, detect, forms, hodge, mesh

__all__ = ["Scenario", "ScenarioError", "main"]


class ScenarioError(ValueError):
    """A scenario file failed validation."""


def _number(minimum=None):
    out = {"type": "number"}
    if minimum is not None:
        out["exclusiveMinimum"] = minimum
    return out


_MESH_SPEC = {
    "oneOf": [
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "subdivisions"],
            "properties": {
                "kind": {"const": "icosphere"},
                "subdivisions": {"type": "integer", "minimum": 0, "maximum": 8},
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "n", "m"],
            "properties": {
                "kind": {"const": "flat_torus"},
                "n": {"type": "integer", "minimum": 3},
                "m": {"type": "integer", "minimum": 3},
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "path"],
            "properties": {
                "kind": {"const": "off"},
                "path": {"type": "string"},
            },
        },
    ]
}

_SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "mesh", "generators"],
    "properties": {
        "version": {"const": 1},
        "mesh": _MESH_SPEC,
        "density": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {"kind": {"const": "uniform"}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"const": "trig_exp"},
                        "amplitude": {"type": "number"},
                        "k1": {"type": "integer"},
                        "k2": {"type": "integer"},
                        "phase": {"type": "number"},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"const": "radial_exp"},
                        "amplitude": {"type": "number"},
                        "center": {
                            "type": "array",
                            "items": {"type": "number"},
                            "minItems": 3,
                            "maxItems": 3,
                        },
                    },
                },
            ]
        },
        "generators": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind"],
                        "properties": {"kind": {"const": "sphere_polar_rotation"}},
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind"],
                        "properties": {
                            "kind": {"const": "torus_translation"},
                            "a": {"type": "number"},
                            "b": {"type": "number"},
                        },
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind"],
                        "properties": {
                            "kind": {"const": "torus_hamiltonian"},
                            "k1": {"type": "integer"},
                            "k2": {"type": "integer"},
                            "amplitude": {"type": "number"},
                            "phase": {"type": "number"},
                        },
                    },
                    {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind", "path"],
                        "properties": {
                            "kind": {"const": "csv"},
                            "path": {"type": "string"},
                            "label": {"type": "string"},
                        },
                    },
                ]
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hamiltonian": _number(0),
                "nonhamiltonian": _number(0),
                "closedness": _number(0),
                "fixed_point": _number(0),
                "rank": _number(0),
            },
        },
        "quadrature_order": {"type": "integer", "minimum": 1, "maximum": 5},
        "quotient": {
            "type": "object",
            "additionalProperties": False,
            "required": ["deck"],
            "properties": {
                "deck": {
                    "oneOf": [
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["kind", "steps"],
                            "properties": {
                                "kind": {"const": "torus_translations"},
                                "steps": {
                                    "type": "array",
                                    "minItems": 1,
                                    "items": {
                                        "type": "array",
                                        "items": {"type": "integer"},
                                        "minItems": 2,
                                        "maxItems": 2,
                                    },
                                },
                            },
                        },
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["kind", "perms"],
                            "properties": {
                                "kind": {"const": "vertex_perm"},
                                "perms": {
                                    "type": "array",
                                    "minItems": 1,
                                    "items": {
                                        "type": "array",
                                        "items": {"type": "integer", "minimum": 0},
                                    },
                                },
                            },
                        },
                    ]
                },
                "product_m1": _MESH_SPEC,
            },
        },
        "out": {"type": "string"},
    },
}

_VALIDATOR = Draft202012Validator(_SCENARIO_SCHEMA)


class Scenario:
    """A validated scenario document plus its base directory.

    Paths inside the document resolve against the file's own directory,
    so scenarios stay relocatable.
    """

    def __init__(self, data, base_dir):
        errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: e.json_path)
        if errors:
            top = best_match(errors)
            raise ScenarioError(f"invalid scenario at {top.json_path}: {top.message}")
        self.data = data
        self.base_dir = Path(base_dir)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
        return cls(data, path.parent)

    def build_surface(self):
        return _build_surface(self.data["mesh"], self.base_dir)

    def build_density(self, surface):
        return _build_density(self.data.get("density", {"kind": "uniform"}), surface)

    def build_generators(self, surface):
        fields = [
            _build_generator(spec, surface, self.base_dir)
            for spec in self.data["generators"]
        ]
        return action.GeneratorSet(fields)

    def tolerance(self, name, default):
        return self.data.get("tolerances", {}).get(name, default)


def _build_surface(spec, base_dir):
    kind = spec["kind"]
    if kind == "icosphere":
        return mesh.gen_icosphere(spec["subdivisions"])
    if kind == "flat_torus":
        return mesh.gen_flat_torus(spec["n"], spec["m"])
    return mesh.load_off(Path(base_dir) / spec["path"])


def _build_density(spec, surface):
    kind = spec["kind"]
    if kind == "uniform":
        return forms.MeasureDensity.uniform(surface)
    if kind == "trig_exp":
        if surface.chart is None:
            raise ScenarioError("trig_exp density needs a chart surface")
        amplitude = spec.get("amplitude", 0.5)
        k1 = spec.get("k1", 1)
        k2 = spec.get("k2", 0)
        phase = spec.get("phase", 0.0)
        u = amplitude * np.cos(
            2.0 * np.pi * (k1 * surface.chart[:, 0] + k2 * surface.chart[:, 1])
            + phase
        )
        return forms.MeasureDensity.from_potential(surface, u)
    if surface.vertices is None:
        raise ScenarioError("radial_exp density needs an embedded surface")
    amplitude = spec.get("amplitude", 1.0)
    center = np.asarray(spec.get("center", [0.0, 0.0, 1.0]), dtype=float)
    u = amplitude * np.linalg.norm(surface.vertices - center, axis=1)
    return forms.MeasureDensity.from_potential(surface, u)


def _build_generator(spec, surface, base_dir):
    kind = spec["kind"]
    if kind == "sphere_polar_rotation":
        return action.builtin_field("sphere_polar_rotation", surface)
    if kind == "torus_translation":
        return action.builtin_field(
            "torus_translation", surface, a=spec.get("a", 0.0), b=spec.get("b", 1.0)
        )
    if kind == "torus_hamiltonian":
        value, gradient = action.trig_hamiltonian(
            k1=spec.get("k1", 1),
            k2=spec.get("k2", 0),
            amplitude=spec.get("amplitude", 1.0),
            phase=spec.get("phase", 0.0),
        )
        return action.builtin_field(
            "torus_hamiltonian", surface, hamiltonian=value, gradient=gradient
        )
    path = Path(base_dir) / spec["path"]
    return action.read_field_csv(surface, path, label=spec.get("label", path.stem))


def _build_deck(spec, total):
    if spec["kind"] == "torus_translations":
        if total.torus_periods is None:
            raise ScenarioError("torus_translations deck needs a generated torus")
        n, m = total.torus_periods
        ii = np.arange(n * m) // m
        jj = np.arange(n * m) % m
        deck = []
        for di, dj in spec["steps"]:
            perm = ((ii + di) % n) * m + (jj + dj) % m
            deck.append(
                mesh.SimplicialAutomorphism(total, perm, name=f"t({di},{dj})")
            )
        return deck
    return [
        mesh.SimplicialAutomorphism(total, np.asarray(p, dtype=np.int64), name=f"g{i}")
        for i, p in enumerate(spec["perms"])
    ]


def _timestamp():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_report(payload, out_dir, filename):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / filename
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def _safe(label):
    return "".join(c if c.isalnum() else "_" for c in label)


def _resolve_out(args, scenario):
    if args.out is not None:
        return Path(args.out)
    return scenario.base_dir / scenario.data.get("out", ".")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    if args.icosphere is not None:
        surface = mesh.gen_icosphere(args.icosphere)
    else:
        n, m = args.flat_torus
        surface = mesh.gen_flat_torus(n, m)
    mesh.save_off(surface, args.output)
    print(
        f"V={surface.n_vertices} E={surface.n_edges} F={surface.n_triangles} "
        f"genus={surface.genus} components={surface.n_components}"
    )
    print(f"wrote {args.output}")
    return 0


def cmd_analyze(args):
    scenario = Scenario.load(args.config)
    surface = scenario.build_surface()
    density = scenario.build_density(surface)
    gens = scenario.build_generators(surface)
    out_dir = _resolve_out(args, scenario)

    tol_h = (
        args.tol_hamiltonian
        if args.tol_hamiltonian is not None
        else scenario.tolerance("hamiltonian", detect.DEFAULT_TOL_HAMILTONIAN)
    )
    tol_n = (
        args.tol_nonhamiltonian
        if args.tol_nonhamiltonian is not None
        else scenario.tolerance("nonhamiltonian", detect.DEFAULT_TOL_NONHAMILTONIAN)
    )
    order = (
        args.quadrature
        if args.quadrature is not None
        else scenario.data.get("quadrature_order", 3)
    )
    report = detect.detect_hamiltonian(
        gens,
        density,
        tol_hamiltonian=tol_h,
        tol_nonhamiltonian=tol_n,
        order=order,
        closed_tol=scenario.tolerance("closedness", None),
        fixed_point_rel_tol=scenario.tolerance("fixed_point", None),
        rank_tol=scenario.tolerance("rank", detect.DEFAULT_RANK_TOL),
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    momentum_refs = {}
    point_data = {}
    for label, mu in report.momentum.items():
        ref = f"momentum_{_safe(label)}.csv"
        forms.write_cochain_csv(mu, out_dir / ref)
        momentum_refs[label] = ref
        point_data[_safe(label)] = mu.values
    if point_data:
        mesh.save_vtk(
            surface, out_dir / "momentum.vtk", point_data=point_data,
            title="momentum components",
        )

    payload = report.to_dict(momentum_refs)
    payload["scenario"] = scenario.data
    payload["seed"] = args.seed
    payload["timestamp"] = _timestamp()
    path = _write_report(payload, out_dir, "report.json")

    for v in report.verdicts:
        print(f"{v.label}: {v.verdict} (rho={v.rho:.3e})")
    print(f"report written to {path}")
    return 0 if report.all_determinate else 3


def cmd_hodge(args):
    scenario = Scenario.load(args.config)
    surface = scenario.build_surface()
    density = scenario.build_density(surface)
    out_dir = _resolve_out(args, scenario)

    triple = forms.build_triple(surface, density)
    basis = hodge.harmonic_basis(surface, triple)
    check = hodge.kernel_identity_check(
        surface, triple, basis=basis, seed=args.seed
    )
    kernel_dim = hodge.laplacian0_kernel_dim(surface, triple)
    j_defect = hodge.j_invariance_defect(basis)

    print(f"mesh: {surface.name}")
    print(f"dim = {basis.dimension}")
    for i, res in enumerate(check.element_residuals):
        print(
            f"chi[{i}] closedness={res['closedness']:.3e} "
            f"coexactness={res['coexactness']:.3e} "
            f"laplacian={res['laplacian']:.3e}"
        )
    print(f"gram defect = {basis.gram_defect:.3e}")
    print(f"exact-form separation = {check.separation:.3e}")
    print(f"laplacian0 kernel dim = {kernel_dim}")
    print(f"j_defect = {j_defect:.3e}")

    payload = {
        "mesh": {
            "name": surface.name,
            "vertices": int(surface.n_vertices),
            "edges": int(surface.n_edges),
            "triangles": int(surface.n_triangles),
            "genus": int(surface.genus),
        },
        "dimension": int(basis.dimension),
        "element_residuals": [
            {k: float(v) for k, v in r.items()} for r in check.element_residuals
        ],
        "gram_defect": float(basis.gram_defect),
        "separation": float(check.separation),
        "laplacian0_kernel_dim": int(kernel_dim),
        "j_invariance_defect": float(j_defect),
        "scenario": scenario.data,
        "seed": args.seed,
        "timestamp": _timestamp(),
    }
    _write_report(payload, out_dir, "hodge_report.json")
    return 0


def cmd_quotient_check(args):
    scenario = Scenario.load(args.config)
    if "quotient" not in scenario.data:
        raise ScenarioError("scenario has no quotient block")
    total = scenario.build_surface()
    deck = _build_deck(scenario.data["quotient"]["deck"], total)
    cover = mesh.build_quotient(total, deck)
    out_dir = _resolve_out(args, scenario)

    nq = cover.quotient.n_vertices
    f = 1.0 + np.sin(2.0 * np.pi * np.arange(nq) / nq)
    orbit = mesh.quotient_integral_check(cover, f)
    print(
        f"orbit integral: lhs={orbit.lhs!r} rhs={orbit.rhs!r} "
        f"rel={orbit.rel_err:.3e}"
    )
    results = {
        "group_order": int(cover.group_order),
        "quotient_vertices": int(nq),
        "orbit": {
            "lhs": orbit.lhs,
            "rhs": orbit.rhs,
            "rel_err": orbit.rel_err,
        },
    }

    product_spec = scenario.data["quotient"].get("product_m1")
    if product_spec is not None:
        m1 = _build_surface(product_spec, scenario.base_dir)
        f1 = 1.0 + np.cos(2.0 * np.pi * np.arange(m1.n_vertices) / m1.n_vertices)
        product = mesh.product_integral_check(m1, cover, f1)
        print(
            f"product integral: lhs={product.lhs!r} rhs={product.rhs!r} "
            f"rel={product.rel_err:.3e}"
        )
        results["product"] = {
            "lhs": product.lhs,
            "rhs": product.rhs,
            "rel_err": product.rel_err,
        }

    payload = {
        "scenario": scenario.data,
        "results": results,
        "seed": args.seed,
        "timestamp": _timestamp(),
    }
    _write_report(payload, out_dir, "quotient_report.json")
    return 0


# ---------------------------------------------------------------------------
# argument surface


def _add_scenario_args(sub, with_detect_flags=False):
    sub.add_argument("--config", required=True, help="scenario JSON path")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--seed", type=int, default=0, help="seed for probe fixtures")
    if with_detect_flags:
        sub.add_argument(
            "--tol-hamiltonian", type=float, default=None,
            help="rho at or below this is Hamiltonian",
        )
        sub.add_argument(
            "--tol-nonhamiltonian", type=float, default=None,
            help="rho at or above this is NonHamiltonian",
        )
        sub.add_argument(
            "--quadrature", type=int, default=None, choices=range(1, 6),
            help="de Rham quadrature order",
        )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hamflow",
        description="Hamiltonian-action detection on weighted simplicial surfaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a builtin mesh as OFF")
    which = gen.add_mutually_exclusive_group(required=True)
    which.add_argument("--icosphere", type=int, metavar="SUBDIV")
    which.add_argument("--flat-torus", type=int, nargs=2, metavar=("N", "M"))
    gen.add_argument("-o", "--output", required=True, help="OFF path to write")
    gen.set_defaults(func=cmd_gen)

    analyze = sub.add_parser("analyze", help="run the detection pipeline")
    _add_scenario_args(analyze, with_detect_flags=True)
    analyze.set_defaults(func=cmd_analyze)

    hodge_cmd = sub.add_parser("hodge", help="harmonic basis diagnostics")
    _add_scenario_args(hodge_cmd)
    hodge_cmd.set_defaults(func=cmd_hodge)

    quot = sub.add_parser("quotient-check", help="quotient integral identities")
    _add_scenario_args(quot)
    quot.set_defaults(func=cmd_quotient_check)
    return parser


def main(argv=None):
    threads = os.environ.get("HAMFLOW_THREADS")
    if threads is not None:
        try:
            if int(threads) < 1:
                raise ValueError
        except ValueError:
            print(f"error: HAMFLOW_THREADS={threads!r} is not a positive integer",
                  file=sys.stderr)
            return 2
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, mesh.MeshError, hodge.SolverError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

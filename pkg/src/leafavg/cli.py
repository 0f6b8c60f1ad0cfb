"""Batch front end: parse a run config, execute one task, write artifacts.

Usage::

    leafavg <task> --config <path> [--out <dir>] [--seed <int>]

with task one of ``avg``, ``generators``, ``verify``, ``separate``,
``export`` and ``selftest``.  A config is a single JSON file with a
``model`` section, a flat ``params`` section and an optional ``out``
directory.  Artifacts (JSON certificates, CSV tables) are byte-identical
across repeated runs with the same config and seed; every stochastic
quantity in a report is stored next to its seed and sample count.

Exit codes: 0 pass, 2 certificate failure, 1 configuration/runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import basic_ring, separation
from .averaging import average, average_structured, verify_operator_identities
from .basic_ring import GeneratorSet, discover_generators, molien_dimensions, verify_generation
from .errors import (
    ConfigError,
    DegreeCapWarning,
    GenerationGap,
    IdentityViolation,
    LeafavgError,
    NotCartanMunzner,
)
from .models import (
    FiniteGroupModel,
    IsoparametricModel,
    TorusModel,
    group_closure,
    validate_munzner,
)
from .polynomials import EXACT, FLOAT, Polynomial, format_polynomial, parse_polynomial, sphere_norm

TASKS = ("avg", "generators", "verify", "separate", "export", "selftest")

_CONFIG_DIR = Path(__file__).parent / "configs"

BUNDLED_CONFIGS = (
    "b2.json",
    "b3.json",
    "c4.json",
    "t2_full.json",
    "hopf.json",
    "circle12.json",
    "iso_g1.json",
    "iso_g2.json",
    "iso_g3.json",
    "cartan_so3_g3.json",
)


# -- config parsing -----------------------------------------------------------


def _parse_entry(value, mode: str):
    if mode == EXACT:
        if isinstance(value, bool):
            raise ConfigError(f"boolean matrix entry {value!r}")
        if isinstance(value, float):
            raise ConfigError(f"float entry {value!r} in an exact matrix; quote it as 'p/q'")
        if isinstance(value, str):
            return Fraction(value)
        return Fraction(value)
    return float(Fraction(value)) if isinstance(value, str) else float(value)


def _parse_matrix(data, ambient_dim: int, mode: str):
    if not data:
        raise ConfigError("empty matrix")
    if isinstance(data[0], list):
        rows = data
    else:
        if len(data) != ambient_dim * ambient_dim:
            raise ConfigError(
                f"flat matrix has {len(data)} entries, expected {ambient_dim * ambient_dim}"
            )
        rows = [data[i * ambient_dim:(i + 1) * ambient_dim] for i in range(ambient_dim)]
    return [[_parse_entry(x, mode) for x in row] for row in rows]


def model_from_config(cfg: dict):
    """Build a foliation model from its config section."""
    try:
        kind = cfg["kind"]
    except KeyError:
        raise ConfigError("model section needs a 'kind'") from None

    if kind == "finite_group":
        ambient_dim = int(cfg["ambient_dim"])
        mode = cfg.get("mode")
        if mode is None:
            flat = [x for g in cfg["generators"] for x in (sum(g, []) if g and isinstance(g[0], list) else g)]
            mode = FLOAT if any(isinstance(x, float) for x in flat) else EXACT
        gens = [_parse_matrix(g, ambient_dim, mode) for g in cfg["generators"]]
        return group_closure(
            gens,
            max_group_size=int(cfg.get("max_group_size", 512)),
            mode=mode,
            tol_orth=float(cfg.get("tol_orth", 1e-9)),
            tol_dedup=float(cfg.get("tol_dedup", 1e-9)),
            name=cfg.get("name", ""),
        )
    if kind == "torus":
        return TorusModel(
            weight_matrix=cfg["weight_matrix"],
            n_fix=int(cfg.get("n_fix", 0)),
            name=cfg.get("name", ""),
        )
    if kind == "isoparametric":
        ambient_dim = int(cfg["ambient_dim"])
        mode = cfg.get("mode", EXACT)
        F = parse_polynomial(cfg["F"], ambient_dim, mode)
        symmetry = model_from_config(cfg["symmetry"]) if "symmetry" in cfg else None
        return IsoparametricModel(
            F,
            int(cfg["g"]),
            h=float(cfg.get("h", 0.05)),
            sample_count=int(cfg.get("N", cfg.get("sample_count", 100_000))),
            tol_level=float(cfg.get("tol_level", 1e-6)),
            min_ess=float(cfg.get("min_ess", 100.0)),
            munzner_tol=float(cfg.get("munzner_tol", 1e-9)),
            symmetry=symmetry,
            name=cfg.get("name", ""),
        )
    raise ConfigError(f"unknown model kind {kind!r}")


@dataclass
class RunConfig:
    name: str
    model_config: dict
    params: dict
    out: Optional[str]
    path: Optional[Path]

    def build_model(self):
        return model_from_config(self.model_config)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"config {path} is not valid JSON: {err.msg} (line {err.lineno}, column {err.colno})"
        ) from None
    if "model" not in data:
        raise ConfigError(f"config {path} has no 'model' section")
    return RunConfig(
        name=data.get("name", path.stem),
        model_config=data["model"],
        params=data.get("params", {}),
        out=data.get("out"),
        path=path,
    )


def _require_seed(params: dict, override: Optional[int]) -> int:
    if override is not None:
        return int(override)
    if "seed" not in params:
        raise ConfigError("a seed is mandatory for stochastic tasks (params.seed or --seed)")
    return int(params["seed"])


def _write_json(payload: dict, path: Path):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_generators(config: RunConfig, model) -> GeneratorSet:
    params = config.params
    if "generators" in params:
        mode = params.get("generators_mode", EXACT)
        gens = []
        degrees = []
        for item in params["generators"]:
            poly = parse_polynomial(item["text"], model.ambient_dim, mode)
            gens.append(poly)
            degrees.append(int(item.get("degree", poly.homogeneous_degree())))
        return GeneratorSet(
            ambient_dim=model.ambient_dim,
            mode=mode,
            generators=tuple(gens),
            degrees=tuple(degrees),
            degree_cap=max(degrees, default=0),
            dims_by_degree={},
            provenance={"source": "inline", "model": model.describe()},
        )
    if "generators_file" in params:
        gen_path = Path(params["generators_file"])
        if not gen_path.is_absolute() and config.path is not None:
            gen_path = config.path.parent / gen_path
        return GeneratorSet.from_json(gen_path.read_text())
    raise ConfigError("task needs 'generators', 'generators_file' or a discovery cap 'D'")


def _generators_for_task(config: RunConfig, model, seed: int) -> GeneratorSet:
    params = config.params
    if "generators" in params or "generators_file" in params:
        return _load_generators(config, model)
    if "D" in params:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegreeCapWarning)
            return discover_generators(
                model,
                int(params["D"]),
                tol_rank=float(params.get("tol_rank", 1e-8)),
                seed=seed,
                sample_points=params.get("sample_points"),
                mc_samples=params.get("mc_samples"),
                h=params.get("h"),
            )
    raise ConfigError("task needs 'generators', 'generators_file' or a discovery cap 'D'")


# -- tasks --------------------------------------------------------------------


def task_avg(config: RunConfig, out_dir: Path, seed: Optional[int]) -> int:
    model = config.build_model()
    params = config.params
    run_seed = _require_seed(params, seed)
    if "f" not in params:
        raise ConfigError("avg task needs params.f (polynomial text)")
    mode = getattr(model, "mode", EXACT)
    f = parse_polynomial(params["f"], model.ambient_dim, mode)
    if not f.is_homogeneous():
        raise ConfigError("avg task expects a homogeneous polynomial")
    cert = average(
        model,
        f,
        seed=run_seed,
        sample_points=params.get("sample_points"),
        mc_samples=params.get("mc_samples"),
        h=params.get("h"),
    )
    payload = cert.to_dict()
    if ("generators" in params or "generators_file" in params) and isinstance(model, IsoparametricModel):
        gens = _load_generators(config, model)
        structured = average_structured(
            model,
            f,
            gens,
            seed=run_seed,
            sample_points=params.get("sample_points"),
            mc_samples=params.get("mc_samples"),
            h=params.get("h"),
            tol=float(params.get("structured_tol", 1e-2)),
        )
        payload["structured"] = structured.to_dict()
    tolerance = 1e-12 if cert.exact else float(params.get("residual_tol", 0.05))
    passed = cert.max_residual() <= tolerance
    payload["passed"] = passed
    payload["residual_tol"] = tolerance
    _write_json(payload, out_dir / "avg_certificate.json")
    status = "PASS" if passed else "FAIL"
    print(
        f"avg[{config.name}]: engine={cert.engine} degree={cert.degree} "
        f"max_residual={cert.max_residual():.3e} {status}"
    )
    return 0 if passed else 2


def task_generators(config: RunConfig, out_dir: Path, seed: Optional[int]) -> int:
    model = config.build_model()
    params = config.params
    run_seed = _require_seed(params, seed)
    if "D" not in params:
        raise ConfigError("generators task needs params.D (degree cap)")
    cap = int(params["D"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # degree-cap warning is recorded in provenance
        gens = discover_generators(
            model,
            cap,
            tol_rank=float(params.get("tol_rank", 1e-8)),
            seed=run_seed,
            sample_points=params.get("sample_points"),
            mc_samples=params.get("mc_samples"),
            h=params.get("h"),
        )
    payload = gens.to_dict()
    passed = True
    if isinstance(model, FiniteGroupModel) and model.mode == EXACT:
        molien = molien_dimensions(model, cap)
        match = all(
            gens.dims_by_degree.get(d, 0) == molien[d] for d in range(1, cap + 1)
        )
        payload["molien_check"] = {"dims": molien, "match": match}
        passed = passed and match
    payload["passed"] = passed
    _write_json(payload, out_dir / "generators.json")
    degrees = list(gens.degrees)
    print(
        f"generators[{config.name}]: degrees={degrees} "
        f"dims={ {d: r for d, r in sorted(gens.dims_by_degree.items())} } "
        f"{'PASS' if passed else 'FAIL'}"
    )
    return 0 if passed else 2


def task_verify(config: RunConfig, out_dir: Path, seed: Optional[int]) -> int:
    model = config.build_model()
    params = config.params
    run_seed = _require_seed(params, seed)
    gens = _generators_for_task(config, model, run_seed)
    failures = []
    checks = []

    # membership: every generator must be fixed by averaging
    from .models import has_exact_average
    exact_engine = has_exact_average(model) and getattr(model, "mode", EXACT) == EXACT
    tol_basic = float(params.get("basic_tol", 1e-9 if exact_engine else 5e-2))
    for i, gen in enumerate(gens.generators):
        cert = average(
            model,
            gen,
            seed=run_seed + i,
            sample_points=params.get("sample_points"),
            mc_samples=params.get("mc_samples"),
            h=params.get("h"),
        )
        avg_poly = cert.average_poly
        if avg_poly.mode == gen.mode:
            comparand = gen
        else:
            comparand = gen.to_float() if avg_poly.mode == FLOAT else gen.to_exact()
        residual = sphere_norm(avg_poly - comparand)
        checks.append({
            "check": "projection_fixed_point",
            "generator": i,
            "text": format_polynomial(gen),
            "residual": residual,
        })
        if residual > tol_basic:
            failures.append({
                "type": "IdentityViolation",
                "identity": "projection_fixed_point",
                "generator": i,
                "residual": residual,
            })

    # operator identities on probe polynomials
    num_probes = int(params.get("num_probes", 3))
    probe_degree = int(params.get("probe_degree", 2))
    rng = np.random.default_rng(run_seed)
    mode = getattr(model, "mode", EXACT)
    from .polynomials import monomial_basis  # local import to keep module top tidy

    for n in range(num_probes):
        basis = monomial_basis(model.ambient_dim, probe_degree)
        def random_poly():
            picks = rng.choice(len(basis), size=min(4, len(basis)), replace=False)
            coeffs = rng.integers(-3, 4, size=len(picks))
            terms = {basis[int(i)]: int(c) for i, c in zip(picks, coeffs) if c != 0}
            if not terms:
                terms = {basis[0]: 1}
            if mode == FLOAT:
                terms = {e: float(c) for e, c in terms.items()}
            return Polynomial(model.ambient_dim, terms, mode)
        f = random_poly()
        g = random_poly()
        try:
            report = verify_operator_identities(
                model, f, g,
                seed=run_seed + 100 + n,
                tol=params.get("identity_tol"),
                sample_points=params.get("sample_points"),
                mc_samples=params.get("mc_samples"),
                h=params.get("h"),
            )
            checks.append({"check": "operator_identities", "probe": n, **report.to_dict()})
        except IdentityViolation as err:
            failures.append({
                "type": "IdentityViolation",
                "identity": err.identity,
                "probe": n,
                "residual": float(err.residual),
            })

    # generation completeness when a cap is supplied
    if "D" in params:
        try:
            report = verify_generation(
                model, gens, int(params["D"]),
                tol=params.get("generation_tol"),
                seed=run_seed,
                sample_points=params.get("sample_points"),
                mc_samples=params.get("mc_samples"),
                h=params.get("h"),
                tol_rank=float(params.get("tol_rank", 1e-8)),
            )
            checks.append({"check": "generation", **report.to_dict()})
        except GenerationGap as err:
            failures.append({
                "type": "GenerationGap",
                "degrees": err.degrees,
                "report": err.report.to_dict() if err.report else None,
            })

    payload = {
        "model": model.describe(),
        "generator_count": len(gens.generators),
        "checks": checks,
        "failures": failures,
        "seed": run_seed,
        "passed": not failures,
    }
    _write_json(payload, out_dir / "verify_report.json")
    print(
        f"verify[{config.name}]: {len(checks)} checks, {len(failures)} failures "
        f"{'PASS' if not failures else 'FAIL'}"
    )
    return 0 if not failures else 2


def task_separate(config: RunConfig, out_dir: Path, seed: Optional[int]) -> int:
    model = config.build_model()
    params = config.params
    run_seed = _require_seed(params, seed)
    gens = _generators_for_task(config, model, run_seed)
    cert = separation.separation_test(
        model,
        gens,
        int(params.get("num_pairs", 1000)),
        float(params.get("tol_same", 1e-9)),
        run_seed,
        margin_min=float(params.get("margin_min", 10.0)),
        same_leaf_tol=params.get("same_leaf_tol"),
    )
    _write_json(cert.to_dict(), out_dir / "separation_certificate.json")
    margin = cert.margin_ratio
    margin_text = "inf" if margin == float("inf") else f"{margin:.3e}"
    print(
        f"separate[{config.name}]: pairs={cert.num_distinct_pairs} "
        f"margin={margin_text} failures={len(cert.failures)} "
        f"{'PASS' if cert.verdict == 'pass' else 'FAIL'}"
    )
    return 0 if cert.verdict == "pass" else 2


def task_export(config: RunConfig, out_dir: Path, seed: Optional[int]) -> int:
    model = config.build_model()
    params = config.params
    run_seed = _require_seed(params, seed)
    gens = _generators_for_task(config, model, run_seed)
    path = out_dir / "quotient_image.csv"
    rows = separation.quotient_image_export(
        gens,
        int(params.get("num_samples", 500)),
        run_seed,
        path,
        model=model,
    )
    print(f"export[{config.name}]: {rows} rows -> {path}")
    return 0


# -- selftest -----------------------------------------------------------------


def _selftest_checks(tol_rank: float):
    """Yield (name, callable) pairs; callables raise or return True/False."""

    def load(name):
        return load_config(_CONFIG_DIR / name)

    def check_group_orders():
        return (
            load("b2.json").build_model().order == 8
            and load("b3.json").build_model().order == 48
            and load("c4.json").build_model().order == 4
        )

    def check_molien_equivalence():
        for name in ("b2.json", "b3.json", "c4.json"):
            model = load(name).build_model()
            molien = molien_dimensions(model, 4)
            for d in range(1, 5):
                if basic_ring.basic_subspace(model, d).rank != molien[d]:
                    return False
        return True

    def check_b3_generators():
        model = load("b3.json").build_model()
        gens = discover_generators(model, 6)
        return list(gens.degrees) == [2, 4, 6]

    def check_torus_generators():
        model = load("t2_full.json").build_model()
        gens = discover_generators(model, 4)
        expected = {
            format_polynomial(parse_polynomial("x1^2 + x2^2", 4)),
            format_polynomial(parse_polynomial("x3^2 + x4^2", 4)),
        }
        return {format_polynomial(p) for p in gens.generators} == expected

    def check_munzner_admissions():
        for name in ("iso_g1.json", "iso_g2.json", "iso_g3.json", "cartan_so3_g3.json"):
            load(name).build_model()  # admission happens at construction
        bad = parse_polynomial("x1^2", 4)
        try:
            validate_munzner(bad, 2)
        except NotCartanMunzner:
            return True
        return False

    def check_iso_rank():
        config = load("iso_g2.json")
        model = config.build_model()
        basis = basic_ring.basic_subspace(
            model, 2, tol_rank=tol_rank, seed=7, sample_points=24, mc_samples=20_000,
        )
        return basis.rank == 2

    def check_separation():
        config = load("b2.json")
        model = config.build_model()
        gens = discover_generators(model, 4)
        cert = separation.separation_test(model, gens, 100, 1e-9, 3)
        return cert.verdict == "pass"

    return [
        ("bundled_group_orders", check_group_orders),
        ("molien_dimension_equivalence", check_molien_equivalence),
        ("b3_generator_degrees", check_b3_generators),
        ("t2_generator_set", check_torus_generators),
        ("munzner_admissions", check_munzner_admissions),
        ("iso_g2_degree2_rank", check_iso_rank),
        ("b2_separation", check_separation),
    ]


def task_selftest(out_dir: Path, tol_rank: float) -> int:
    missing = [name for name in BUNDLED_CONFIGS if not (_CONFIG_DIR / name).exists()]
    if missing:
        print(f"selftest: missing bundled configs: {missing}")
        return 1
    results = []
    worst = 0
    for name, check in _selftest_checks(tol_rank):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegreeCapWarning)
                ok = bool(check())
        except LeafavgError as err:
            results.append((name, f"FAIL ({type(err).__name__}: {err})"))
            worst = max(worst, 2)
            continue
        results.append((name, "ok" if ok else "FAIL"))
        if not ok:
            worst = max(worst, 2)
    width = max(len(name) for name, _ in results)
    for name, status in results:
        print(f"selftest {name:<{width}} {status}")
    payload = {"results": {name: status for name, status in results}, "tol_rank": tol_rank}
    _write_json(payload, out_dir / "selftest_report.json")
    return worst


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leafavg",
        description="Leaf averaging, generator discovery and separation certificates "
                    "for foliations of round spheres.",
    )
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("--config", help="path to a JSON run config")
    parser.add_argument("--out", help="output directory (default from config, else ./leafavg_out)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--tol-rank", type=float, default=None,
        help="override the rank tolerance of selftest's statistical checks "
             "(default 0.05, the statistical regime)",
    )
    return parser


def run(task: str, config: Optional[RunConfig], out_dir: Path, seed: Optional[int],
        tol_rank: Optional[float] = None) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    if task == "selftest":
        return task_selftest(out_dir, 0.05 if tol_rank is None else tol_rank)
    if config is None:
        raise ConfigError(f"task {task!r} requires --config")
    handler = {
        "avg": task_avg,
        "generators": task_generators,
        "verify": task_verify,
        "separate": task_separate,
        "export": task_export,
    }[task]
    return handler(config, out_dir, seed)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else None
        out_dir = Path(args.out or (config.out if config and config.out else "leafavg_out"))
        code = run(args.task, config, out_dir, args.seed, args.tol_rank)
    except LeafavgError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())

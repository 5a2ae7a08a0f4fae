"""Command-line interface: one operation per invocation, JSON in and out.

Exit status: 0 success, 1 domain error, 2 numeric failure, 3 I/O or schema error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .factor import (DomainError, ElementaryFactor, PolyMatrix2, chain_to_factors, factor_constant,
                     factor_sl2_poly, factors_to_chain, peel_last_row, preimage_last_row,
                     product_matrix, verify_factorization, whitehead_diag)
from .jsonio import (chain_from_json, chain_to_json, complex_from_json, complex_to_json,
                     matrix_from_json, matrix_to_json, parse_poly, poly_matrix_from_json,
                     vector_from_json, vector_to_json)
from .polyring import Poly, TermBudgetExceeded, VarId
from .spray import (MixedResidualError, NotMultilinearError, ShearField, fiber_chart, rk4_flow,
                    shear_field_flow, span_rank, stratum_index)
from .submersion import (RANK_TOL, jacobian_at, numerical_rank, random_points, rank_report,
                         singular_image_check, symbolic_components, term_budget)
from .tracker import (NumericFailure, PathProblem, TrackerConfig, factor_matrix_path,
                      track_path)
from .unipotent import DIRECT, INVERSE, n_params, pad_factors, phi_batch

EXIT_OK, EXIT_DOMAIN, EXIT_NUMERIC, EXIT_SCHEMA = 0, 1, 2, 3


class SchemaError(Exception):
    """Input could not be read or does not match the expected shape."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_SCHEMA)


@dataclass
class CommandConfig:
    command: str
    inputs: dict
    tolerances: dict
    term_budget: int
    output: str | None = None
    workers: int = 1
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.tolerances.items():
            if not v > 0:
                raise SchemaError(f"tolerance {k} must be positive")
        if self.workers < 1:
            raise SchemaError("workers must be >= 1")
        if self.term_budget < 1:
            raise SchemaError("term budget must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# input helpers


def _load(value):
    """Inline JSON, or a path to a JSON file."""
    if value is None:
        return None
    text = value.strip()
    if text[:1] in '[{"-.0123456789' and not text.endswith(".json"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            if text[:1] in "[{":
                raise SchemaError(f"invalid JSON: {exc}") from exc
    try:
        return json.loads(Path(value).read_text())
    except OSError as exc:
        raise SchemaError(f"cannot read {value!r}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON in {value!r}: {exc}") from exc


def _vector(obj, n=None):
    try:
        v = vector_from_json(obj)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad vector: {exc}") from exc
    if n is not None and v.size != n:
        raise SchemaError(f"expected {n} entries, got {v.size}")
    return v


def _matrix(obj):
    try:
        return matrix_from_json(obj)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad matrix: {exc}") from exc


def _chain(obj, n, orientation=INVERSE):
    try:
        return chain_from_json(obj, n, orientation if not isinstance(obj, dict) else None)
    except (TypeError, ValueError, KeyError) as exc:
        raise SchemaError(f"bad factor chain: {exc}") from exc


def _poly(text):
    try:
        return parse_poly(text) if isinstance(text, str) else Poly.from_json(text)
    except (SyntaxError, ValueError, KeyError, TypeError) as exc:
        raise SchemaError(f"bad polynomial: {exc}") from exc


def _point_dict(obj):
    if not isinstance(obj, dict):
        raise SchemaError("point must be an object mapping variable names to values")
    try:
        return {VarId.symbol(k): complex_from_json(v) for k, v in obj.items()}
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad point: {exc}") from exc


def _complex_arg(text):
    """A JSON number, ``[re, im]``, ``{"re", "im"}`` or bare ``re,im``."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = text.split(",")
        if len(obj) != 2:
            raise SchemaError(f"cannot read a complex number from {text!r}")
    try:
        return complex_from_json(obj)
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc)) from exc


def _named(d):
    return {str(k): complex_to_json(v) for k, v in d.items()}


def _factor_list(obj, n_hint=None):
    """A chain object, or a list of {"side", "entries": [{"row", "col", "re", "im" | "poly"}]}."""
    if isinstance(obj, dict):
        return chain_to_factors(_chain(obj, obj.get("n")))
    if not isinstance(obj, list):
        raise SchemaError("factors must be a list or a chain object")
    try:
        return [ElementaryFactor.from_json(f, f.get("n", n_hint)) for f in obj]
    except (KeyError, TypeError, AttributeError, SyntaxError) as exc:
        raise SchemaError(f"bad factor list: {exc}") from exc


def _factors_json(factors, n):
    out = {"factors": [f.to_json() for f in factors], "K": len(factors)}
    if not any(f.symbolic for f in factors):
        out["chain"] = chain_to_json(factors_to_chain(factors, n))
    return out


def _is_symbolic_matrix(obj) -> bool:
    if isinstance(obj, dict):
        obj = obj.get("rows", [])
    return any(isinstance(x, str) or (isinstance(x, dict) and "terms" in x)
               for row in obj for x in row)


# --------------------------------------------------------------------------
# commands


def cmd_phi(cfg, a):
    pts = _vector(_load(a.point), a.K * n_params(a.n))
    phi = phi_batch(a.n, pts[None, :], a.orientation)[0]
    return {"phi": vector_to_json(phi)}


def cmd_components(cfg, a):
    sys_ = symbolic_components(a.n, a.K, cfg.term_budget)
    return {"n": a.n, "K": a.K, "total_terms": sys_.total_terms(),
            "components": [{"k": k, "terms": len(p), "text": str(p), "poly": p.to_json()}
                           for k, p in enumerate(sys_.components, start=1)]}


def cmd_jacobian(cfg, a):
    sys_ = symbolic_components(a.n, a.K, cfg.term_budget)
    pt = _vector(_load(a.point), a.K * n_params(a.n))
    J = jacobian_at(sys_, pt)
    tol = cfg.tolerances["rank_tol"]
    return {"variables": [str(v) for v in sys_.variables()],
            "jacobian": [vector_to_json(r) for r in J], "rank": int(numerical_rank(J, tol))}


def cmd_singular_check(cfg, a):
    sys_ = symbolic_components(a.n, a.K, cfg.term_budget)
    tol = cfg.tolerances["rank_tol"]
    if a.point:
        pts = _vector(_load(a.point), a.K * n_params(a.n))[None, :]
    else:
        rng = np.random.default_rng(cfg.seed)
        half = a.samples // 2
        pts = np.concatenate([random_points(a.n, a.K, a.samples - half, rng),
                              random_points(a.n, a.K, half, rng, on_singular_set=True)])
    recs = rank_report(sys_, pts, tol)
    bad = sum(not r.agree for r in recs)
    return {"disagreements": bad, "checked": len(recs),
            "records": [r.to_json() for r in recs] if len(recs) <= a.max_records else None}


def cmd_singular_image(cfg, a):
    return singular_image_check(a.n, a.K, symbolic_components(a.n, a.K, cfg.term_budget)).to_json()


def cmd_preimage(cfg, a):
    b = _vector(_load(a.b))
    chain = preimage_last_row(b)
    phi = phi_batch(chain.n, chain.flat()[None, :])[0]
    rel = float(np.linalg.norm(phi - b) / np.linalg.norm(b))
    return {**chain_to_json(chain), "Z": vector_to_json(chain.flat()), "phi": vector_to_json(phi),
            "relative_residual": rel}


def cmd_peel(cfg, a):
    A = _matrix(_load(a.matrix))
    n = A.shape[0]
    chain = _chain(_load(a.chain), n) if a.chain else preimage_last_row(A[-1])
    return peel_last_row(A, chain, cfg.tolerances["tol"]).to_json()


def cmd_factor_const(cfg, a):
    A = _matrix(_load(a.matrix))
    fs = factor_constant(A, det_tol=cfg.tolerances["det_tol"])
    rep = verify_factorization(A, fs, "tol", cfg.tolerances["tol"])
    return {**_factors_json(fs, A.shape[0]), "error": rep.error}


def cmd_factor_sl2(cfg, a):
    obj = _load(a.matrix)
    try:
        A = PolyMatrix2.from_rows(poly_matrix_from_json(obj))
    except (SyntaxError, KeyError, TypeError) as exc:
        raise SchemaError(f"bad polynomial matrix: {exc}") from exc
    fs = factor_sl2_poly(A)
    rep = verify_factorization(A, fs, "exact")
    return {"factors": [f.to_json() for f in fs], "K": len(fs), "match": rep.match}


def cmd_whitehead(cfg, a):
    u = _complex_arg(a.u)
    fs = whitehead_diag(u)
    return {**_factors_json(fs, 2), "product": matrix_to_json(product_matrix(fs, 2))}


def cmd_verify(cfg, a):
    tobj = _load(a.target)
    exact = _is_symbolic_matrix(tobj)
    target = poly_matrix_from_json(tobj) if exact else _matrix(tobj)
    fs = _factor_list(_load(a.factors), len(target))
    mode = a.mode or ("exact" if exact or any(f.symbolic for f in fs) else "tol")
    if mode == "exact" and not exact:
        target = poly_matrix_from_json(tobj)
    return verify_factorization(target, fs, mode, cfg.tolerances["tol"]).to_json()


def cmd_spray_flow(cfg, a):
    p = _poly(a.poly)
    fld = ShearField(p, VarId.symbol(a.i), VarId.symbol(a.j))
    start = _point_dict(_load(a.start))
    t = _complex_arg(a.t)
    end = shear_field_flow(fld, start, t)
    out = {"end": _named(end),
           "p_start": complex_to_json(p.evaluate(start)),
           "p_end": complex_to_json(p.evaluate(end))}
    if a.rk4:
        ref = rk4_flow(fld, start, t)
        out["rk4"] = _named(ref)
        out["rk4_distance"] = max(abs(end[v] - ref[v]) for v in ref)
    return out


def cmd_span_rank(cfg, a):
    p = _poly(a.poly)
    pt = _point_dict(_load(a.point))
    vs = sorted(set(p.variables()) | set(pt), key=lambda v: v.sort_key)
    return {"rank": span_rank(p, pt, vs, cfg.tolerances["rank_tol"]), "n_vars": len(vs),
            "variables": [str(v) for v in vs]}


def cmd_chart(cfg, a):
    target = _vector(_load(a.a), a.n)
    chart = fiber_chart(a.n, a.K, target)
    out = chart.to_json()
    if a.samples:
        rng = np.random.default_rng(cfg.seed)
        errs = []
        for _ in range(a.samples):
            cv, fv = chart.sample(rng)
            Z = chart.reconstruct(cv, fv)
            errs.append(float(np.linalg.norm(phi_batch(a.n, Z.flat()[None, :])[0] - target)))
        out["sample_max_error"] = max(errs)
    return out


def cmd_stratum(cfg, a):
    vec = _vector(_load(a.a))
    return {"stratum": stratum_index(vec, a.parity, cfg.tolerances["zero_tol"]), "parity": a.parity}


def _tracker_config(cfg, step_cap):
    t = cfg.tolerances
    return TrackerConfig(residual_tol=t["residual_tol"], rank_tol=t["rank_tol"],
                         step_cap=step_cap, continuity_cap=t["continuity_cap"])


def cmd_track(cfg, a):
    path = _load(a.path)
    try:
        samples = [(float(s["t"]), _vector(s["b"], a.n)) for s in path]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"path entries need 't' and 'b': {exc}") from exc
    if not samples:
        raise SchemaError("path is empty")
    if a.seed_point:
        seed = _chain(_load(a.seed_point), a.n)
        if seed.K != a.K:
            raise SchemaError(f"seed has K={seed.K}, expected {a.K}")
    else:
        seed = preimage_last_row(samples[0][1])
        while seed.K < a.K:
            seed = pad_factors(seed)
        if seed.K != a.K:
            raise SchemaError("without a seed, K must be 3, 6, 9, ...")
    problem = PathProblem(a.n, a.K, tuple(samples), seed.flat(), step_cap=a.step_cap)
    recs = track_path(problem, _tracker_config(cfg, a.step_cap))
    return {"records": [r.to_json() for r in recs]}


def cmd_factor_path(cfg, a):
    raw = _load(a.samples)
    try:
        samples = [(float(s["t"]), _matrix(s["matrix"])) for s in raw]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"samples need 't' and 'matrix': {exc}") from exc
    recs = factor_matrix_path(samples, _tracker_config(cfg, a.step_cap),
                              det_tol=cfg.tolerances["det_tol"])
    return {"records": [r.to_json() for r in recs]}


COMMANDS = {
    "phi": cmd_phi, "components": cmd_components, "jacobian": cmd_jacobian,
    "singular-check": cmd_singular_check, "singular-image": cmd_singular_image,
    "preimage": cmd_preimage, "peel": cmd_peel, "factor-const": cmd_factor_const,
    "factor-sl2": cmd_factor_sl2, "whitehead": cmd_whitehead, "verify": cmd_verify,
    "spray-flow": cmd_spray_flow, "span-rank": cmd_span_rank, "chart": cmd_chart,
    "stratum": cmd_stratum, "track": cmd_track, "factor-path": cmd_factor_path,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("--output", "-o", help="write the report here instead of stdout")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--tol", type=float, default=1e-10, help="relative product tolerance")
    common.add_argument("--det-tol", type=float, default=1e-10)
    common.add_argument("--rank-tol", type=float, default=RANK_TOL)
    common.add_argument("--residual-tol", type=float, default=1e-8)
    common.add_argument("--continuity-cap", type=float, default=1.0)
    common.add_argument("--zero-tol", type=float, default=1e-300,
                        help="entries with modulus at or below this count as zero")
    common.add_argument("--term-budget", type=int, default=None,
                        help="cap on symbolic terms (default: $UNIFACT_TERM_BUDGET)")

    p = _Parser(prog="unifact", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"unifact {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    def nK(q, K_default=None):
        q.add_argument("--n", type=int, required=True)
        q.add_argument("--K", type=int, required=K_default is None, default=K_default)

    q = add("phi", "evaluate the last-row map at a point")
    nK(q)
    q.add_argument("--point", required=True)
    q.add_argument("--orientation", choices=[INVERSE, DIRECT], default=INVERSE)
    q = add("components", "symbolic last-row components")
    nK(q)
    q = add("jacobian", "Jacobian of the last-row map at a point")
    nK(q)
    q.add_argument("--point", required=True)
    q = add("singular-check", "compare Jacobian rank with S_K membership")
    nK(q)
    q.add_argument("--point")
    q.add_argument("--samples", type=int, default=200)
    q.add_argument("--max-records", type=int, default=50)
    q = add("singular-image", "restrict the components to S_K")
    nK(q)
    q = add("preimage", "three-factor chain with a given last row")
    q.add_argument("--b", required=True)
    q = add("peel", "reduce an SL_n matrix to its SL_{n-1} core")
    q.add_argument("--matrix", required=True)
    q.add_argument("--chain")
    q = add("factor-const", "factor a constant SL_n matrix")
    q.add_argument("--matrix", required=True)
    q = add("factor-sl2", "factor an SL_2 matrix over C[z]")
    q.add_argument("--matrix", required=True)
    q = add("whitehead", "five shears with product diag(u, 1/u)")
    q.add_argument("--u", required=True)
    q = add("verify", "multiply out factors and compare with a target")
    q.add_argument("--target", required=True)
    q.add_argument("--factors", required=True)
    q.add_argument("--mode", choices=["exact", "tol"])
    q = add("spray-flow", "closed-form flow of a shear field")
    q.add_argument("--poly", "--p", dest="poly", required=True)
    q.add_argument("--i", required=True)
    q.add_argument("--j", required=True)
    q.add_argument("--start", required=True)
    q.add_argument("--t", default="1")
    q.add_argument("--rk4", action="store_true", help="also integrate numerically")
    q = add("span-rank", "rank of the shear fields of a polynomial at a point")
    q.add_argument("--poly", required=True)
    q.add_argument("--point", required=True)
    q = add("chart", "fiber chart over a target last row")
    nK(q)
    q.add_argument("--a", required=True)
    q.add_argument("--samples", type=int, default=0)
    q = add("stratum", "stratum index of a nonzero vector")
    q.add_argument("--a", required=True)
    q.add_argument("--parity", choices=["even", "odd"], required=True)
    q = add("track", "track a last-row path")
    nK(q, K_default=3)
    q.add_argument("--path", required=True)
    q.add_argument("--seed-point", "--start-chain", dest="seed_point")
    q.add_argument("--step-cap", type=float, default=1.0)
    q = add("factor-path", "continuous factorization of sampled matrices")
    q.add_argument("--samples", required=True)
    q.add_argument("--step-cap", type=float, default=1.0)
    return p


def make_config(args) -> CommandConfig:
    tol = {"tol": args.tol, "det_tol": args.det_tol, "rank_tol": args.rank_tol,
           "residual_tol": args.residual_tol, "continuity_cap": args.continuity_cap,
           "zero_tol": args.zero_tol}
    inputs = {k: v for k, v in vars(args).items()
              if k not in tol and k not in ("command", "output", "workers", "seed", "term_budget")}
    budget = args.term_budget if args.term_budget is not None else term_budget()
    return CommandConfig(args.command, inputs, tol, budget, args.output, args.workers, args.seed,
                         {"backend": kernels.BACKEND})


def _classify(exc) -> tuple[int | None, str]:
    if isinstance(exc, SchemaError):
        return EXIT_SCHEMA, "schema"
    if isinstance(exc, (NumericFailure, TermBudgetExceeded, np.linalg.LinAlgError)):
        return EXIT_NUMERIC, "numeric"
    if isinstance(exc, (DomainError, NotMultilinearError, MixedResidualError, ValueError,
                        ZeroDivisionError, KeyError)):
        return EXIT_DOMAIN, "domain"
    if isinstance(exc, OSError):
        return EXIT_SCHEMA, "io"
    return None, ""


def run_command(cfg: CommandConfig, args) -> tuple[int, dict]:
    report = {"tool": "unifact", "version": __version__, "command": cfg.command,
              "config": cfg.to_json()}
    try:
        report["result"] = COMMANDS[cfg.command](cfg, args)
        report["status"] = "ok"
        code = EXIT_OK
    except Exception as exc:  # mapped to an exit status below
        code, kind = _classify(exc)
        if code is None:
            raise
        report["status"] = "error"
        report["error"] = {"kind": kind, "type": type(exc).__name__, "message": str(exc)}
    report["exit_code"] = code
    return code, report


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
    except SchemaError as exc:
        sys.stderr.write(f"unifact: {exc}\n")
        return EXIT_SCHEMA
    code, report = run_command(cfg, args)
    text = json.dumps(report, indent=2, default=_json_default)
    try:
        if cfg.output:
            Path(cfg.output).write_text(text + "\n")
        else:
            sys.stdout.write(text + "\n")
    except OSError as exc:
        sys.stderr.write(f"unifact: cannot write report: {exc}\n")
        return EXIT_SCHEMA
    return code


def _json_default(o):
    from .jsonio import _default

    return _default(o)


if __name__ == "__main__":
    sys.exit(main())

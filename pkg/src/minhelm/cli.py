"""Command-line driver: ``key=value`` configs, single solves, convergence
studies and conditioning diagnostics, written as CSV/text files."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import re
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly import DirichletData, RobinData, assemble_dirichlet, assemble_robin
from .grid import GridError, build_grid
from .linalg import BlockJacobiPreconditioner, extremal_eigs
from .materials import MaterialField, check_coercivity, default_samples, rescale, suggest_rescale
from .solver import (SolverOptions, boundary_identity_residual, helmholtz_residual, solve_dirichlet,
                     solve_robin)
from .verify import convergence_study, error_components, oracle_fields

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


_FLOAT = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_COMPLEX = re.compile(rf"^(?:(?P<re>{_FLOAT})(?P<im>[+-](?:\d+\.?\d*|\.\d+)?(?:[eE][+-]?\d+)?)i"
                      rf"|(?P<re_only>{_FLOAT})|(?P<im_only>{_FLOAT}|[+-]?)i)$")


def parse_complex(text: str) -> complex:
    """Parse ``a``, ``a+bi``, ``a-bi`` or ``bi``."""
    s = text.strip().replace(" ", "")
    m = _COMPLEX.match(s)
    if not m:
        raise ValueError(f"unparsable complex literal {text!r} (expected a+bi)")
    if m.group("re_only") is not None:
        return complex(float(m.group("re_only")), 0.0)
    if m.group("im_only") is not None:
        im = m.group("im_only")
        return complex(0.0, float(im + "1" if im in ("", "+", "-") else im))
    im = m.group("im")
    im = im + "1" if im in ("+", "-") else im
    return complex(float(m.group("re")), float(im))


def format_complex(c: complex) -> str:
    c = complex(c)
    sign = "-" if np.signbit(c.imag) else "+"
    return f"{c.real!r}{sign}{abs(c.imag)!r}i"


@dataclass
class RunConfig:
    n: int
    omega: float
    bc: str = "dirichlet"
    mode: str = "both"
    case: str = "manufactured"
    rho: complex = -5 + 5j
    kappa: complex = 4 - 4j
    inclusion: str = ""
    rho_in: complex = -5 + 5j
    kappa_in: complex = 4 - 4j
    psi_r: str = ""
    psi_i: str = ""
    a: complex = -1 + 0j
    g: complex = 0j
    periodic_x: bool = False
    tol: float = 1e-8
    maxit: int = 0
    precond: bool = True
    inner_tol: float = 1e-2
    on_indefinite: str = "stop"
    eval_n: int = 1500
    study: str = ""
    rescale: bool = False
    diagnostics: bool = False
    lanczos_iter: int = 150
    out: str = "out"

    def validate(self) -> "RunConfig":
        if self.n < 3:
            raise GridError(f"grid needs N >= 3 nodes per side, got N={self.n}")
        for name in ("omega", "tol", "inner_tol"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ConfigError(f"{name} must be finite and positive, got {v}")
        for name in ("rho", "kappa", "rho_in", "kappa_in", "a", "g"):
            v = getattr(self, name)
            if not (np.isfinite(v.real) and np.isfinite(v.imag)):
                raise ConfigError(f"{name} must be finite, got {v}")
        choices = {"bc": ("dirichlet", "robin"), "mode": ("both", "real-primal", "imag-primal"),
                   "case": ("manufactured", "expression", "scene"),
                   "on_indefinite": ("stop", "minres")}
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.bc == "dirichlet" and self.case == "scene":
            raise ConfigError("case=scene needs bc=robin")
        if self.bc == "robin" and self.case != "scene":
            raise ConfigError("bc=robin needs case=scene")
        if self.case == "manufactured" and self.inclusion:
            raise ConfigError("case=manufactured needs a constant material (no inclusion)")
        if self.case == "expression" and not (self.psi_r and self.psi_i):
            raise ConfigError("case=expression needs psi_r and psi_i")
        if self.inclusion:
            parse_inclusion(self.inclusion)
        if self.study:
            parse_study(self.study)
            if self.case != "manufactured":
                raise ConfigError("study needs case=manufactured")
        if self.eval_n < 2:
            raise ConfigError("eval_n must be >= 2")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_REQUIRED = ("n", "omega")
_BOOL = {"1": True, "true": True, "on": True, "yes": True,
         "0": False, "false": False, "off": False, "no": False}


def _convert(name: str, raw: str):
    kind = _FIELDS[name].type
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "complex":
        return parse_complex(raw)
    if kind == "bool":
        if raw.lower() not in _BOOL:
            raise ValueError(f"expected a boolean, got {raw!r}")
        return _BOOL[raw.lower()]
    return raw


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse ``key=value`` lines (``#`` starts a comment) into a validated
    :class:`RunConfig`. ``overrides`` (already typed) win over the text."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    return RunConfig(**values).validate()


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.type == "complex":
            s = format_complex(v)
        elif f.type == "bool":
            s = "on" if v else "off"
        elif f.type == "float":
            s = repr(float(v))
        else:
            s = str(v)
        lines.append(f"{f.name}={s}")
    return "\n".join(lines) + "\n"


def parse_study(text: str) -> list[int]:
    try:
        lo, hi, step = (int(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"study must look like 30:100:10, got {text!r}") from None
    if lo < 3 or hi < lo or step < 1:
        raise ConfigError(f"bad study range {text!r}")
    return list(range(lo, hi + 1, step))


def parse_inclusion(text: str):
    """``disc cx cy r`` or ``bar x0 y0 x1 y1 w`` -> region predicate."""
    parts = text.split()
    try:
        nums = [float(p) for p in parts[1:]]
    except ValueError:
        raise ConfigError(f"bad inclusion {text!r}") from None
    if parts and parts[0] == "disc" and len(nums) == 3:
        cx, cy, r = nums
        return lambda x, y: (x - cx) ** 2 + (y - cy) ** 2 < r * r
    if parts and parts[0] == "bar" and len(nums) == 5:
        x0, y0, x1, y1, w = nums
        d = np.array([x1 - x0, y1 - y0])
        length = np.hypot(*d)
        if length == 0:
            raise ConfigError("bar endpoints coincide")
        u = d / length

        def inside(x, y):
            px, py = x - x0, y - y0
            along = px * u[0] + py * u[1]
            across = np.abs(-px * u[1] + py * u[0])
            return (along >= 0) & (along <= length) & (across <= w / 2)
        return inside
    raise ConfigError(f"inclusion must be 'disc cx cy r' or 'bar x0 y0 x1 y1 w', got {text!r}")


_EXPR_NAMES = {name: getattr(np, name) for name in
               ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "abs", "pi")}


def expression(src: str):
    code = compile(src, "<expr>", "eval")
    for name in code.co_names:
        if name not in _EXPR_NAMES and name not in ("x", "y"):
            raise ConfigError(f"expression {src!r} uses unknown name {name!r}")

    def f(x, y):
        val = eval(code, {"__builtins__": {}}, dict(_EXPR_NAMES, x=x, y=y))
        return np.broadcast_to(np.asarray(val, dtype=float), np.shape(x))
    return f


def build_material(cfg: RunConfig) -> MaterialField:
    if cfg.inclusion:
        region = parse_inclusion(cfg.inclusion)
        m = MaterialField.inclusion((cfg.rho, cfg.kappa), (cfg.rho_in, cfg.kappa_in), region, cfg.omega)
    else:
        m = MaterialField.constant(cfg.rho, cfg.kappa, cfg.omega)
    if cfg.rescale:
        r, theta = suggest_rescale(m)
        log.info("rescaling Z by %.4g exp(%.4gi)", r, theta)
        m = rescale(m, r, theta)
    return m


def _modes(cfg: RunConfig):
    return ("real-primal", "imag-primal") if cfg.mode == "both" else (cfg.mode,)


def _options(cfg: RunConfig) -> SolverOptions:
    return SolverOptions(tol=cfg.tol, maxit=cfg.maxit or None, preconditioner=cfg.precond,
                         inner_tol=cfg.inner_tol, on_indefinite=cfg.on_indefinite)


def write_field_csv(path: Path, sol) -> None:
    X, Y = sol.grid.node_xy()
    cols = np.column_stack([X, Y, sol.P_re, sol.P_im, sol.v_re[:, 0], sol.v_im[:, 0],
                            sol.v_re[:, 1], sol.v_im[:, 1]])
    with open(path, "w", newline="\n") as fh:
        fh.write("x,y,P_re,P_im,v1_re,v1_im,v2_re,v2_im\n")
        for row in cols:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_iteration_log(path: Path, rep) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("iter,relres,inner_iters\n")
        inner = rep.inner_iterations
        for it, rel in enumerate(rep.residual_history[1:], start=1):
            used = inner[it - 1] if it - 1 < len(inner) else 0
            fh.write(f"{it},{rel:.17g},{used}\n")


def write_convergence_csv(path: Path, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("N,h,vnorm_error\n")
        for r in rows:
            fh.write(f"{r.N},{r.h:.17g},{r.vnorm_error:.17g}\n")


def conditioning(system, n_iter: int) -> dict:
    """Lanczos condition estimates of A and of the block-Jacobi
    preconditioned operator (block solves run to 1e-10)."""
    plain = extremal_eigs(system.A, n_iter)
    M = BlockJacobiPreconditioner.from_system(system, inner_tol=1e-10, inner_maxit=10 * system.n)
    pre = extremal_eigs(system.A, n_iter, M_solve=M, M_matvec=M.matvec_M)
    return {"lambda_min_A": plain.lam_min, "lambda_max_A": plain.lam_max, "cond_A": plain.condition,
            "lambda_min_MinvA": pre.lam_min, "lambda_max_MinvA": pre.lam_max,
            "cond_MinvA": pre.condition}


def run(cfg: RunConfig) -> int:
    """Execute the configured driver; returns the process exit status."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    status, diag = "ok", {}
    material = build_material(cfg)
    opts = _options(cfg)
    if cfg.study:
        exact, data, _ = oracle_fields(cfg.rho, cfg.kappa, cfg.omega)
        st = convergence_study(material, data, parse_study(cfg.study), exact, cfg.eval_n, opts)
        write_convergence_csv(out / "convergence.csv", st.rows)
        diag["rate"] = st.rate
        if not all(r.converged for r in st.rows):
            status = "failed: some solves did not converge"
    else:
        grid = build_grid(cfg.n, periodic_x=cfg.periodic_x)
        rep0 = check_coercivity(material, default_samples(), warn=False)
        diag.update(alpha=rep0.alpha, beta=rep0.beta, coercive=rep0.satisfied)
        exact = None
        if cfg.bc == "robin":
            robin = RobinData(cfg.a, cfg.g)
            sol = solve_robin(grid, material, robin, opts)
            diag["boundary_identity_residual"] = boundary_identity_residual(robin, sol.boundary)
            systems = [assemble_robin(grid, material, robin, m, check=False) for m in _modes(cfg)]
        else:
            if cfg.case == "manufactured":
                exact, data, _ = oracle_fields(cfg.rho, cfg.kappa, cfg.omega)
            else:
                data = DirichletData(expression(cfg.psi_r), expression(cfg.psi_i))
            sol = solve_dirichlet(grid, material, data, opts, modes=_modes(cfg))
            systems = ([assemble_dirichlet(grid, material, data, m, check=False) for m in _modes(cfg)]
                       if cfg.diagnostics else [])
        write_field_csv(out / "field.csv", sol)
        for mode, rep in sol.reports.items():
            write_iteration_log(out / f"iterations_{mode}.csv", rep)
            diag[f"{mode}.iterations"] = rep.iterations
            diag[f"{mode}.converged"] = rep.converged
            diag[f"{mode}.inner_iterations_total"] = rep.inner_iterations_total
        diag["helmholtz_residual"] = helmholtz_residual(sol, material)
        if exact is not None:
            diag["vnorm_error"] = error_components(sol, exact, cfg.eval_n).vnorm
        if cfg.diagnostics:
            for system in systems:
                for k, v in conditioning(system, cfg.lanczos_iter).items():
                    diag[f"{system.mode.value}.{k}"] = v
        if not sol.converged:
            bad = [f"{m}: {r.message}" for m, r in sol.reports.items() if not r.converged]
            status = "failed: " + "; ".join(bad)
    with open(out / "diagnostics.txt", "w", newline="\n") as fh:
        for k, v in diag.items():
            fh.write(f"{k}={v:.17g}\n" if isinstance(v, float) else f"{k}={v}\n")
        fh.write(f"status={status}\n")
    print(f"status={status}")
    return 0 if status == "ok" else 1


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="minhelm", description=__doc__)
    p.add_argument("--config", type=Path, help="key=value configuration file")
    p.add_argument("--n", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--bc", choices=("dirichlet", "robin"))
    p.add_argument("--mode", choices=("both", "real-primal", "imag-primal"))
    p.add_argument("--out")
    p.add_argument("--study", help="convergence sweep lo:hi:step, e.g. 30:100:10")
    p.add_argument("--no-precond", dest="precond", action="store_const", const=False)
    p.add_argument("--eval-n", dest="eval_n", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    text = args.config.read_text(encoding="utf-8") if args.config else ""
    overrides = {k: getattr(args, k) for k in
                 ("n", "omega", "tol", "bc", "mode", "out", "study", "precond", "eval_n")}
    try:
        cfg = parse_config(text, overrides)
    except (ConfigError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

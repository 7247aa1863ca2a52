"""Execution layer behind the service endpoints: validate a problem config,
run the requested derivation/simulation/solve, and assemble the response
with rendered equations, tolerance-tagged checks, and file artifacts.

All artifact bytes are produced here (CSV with 17 significant digits, or
JSON) so that identical configs and seeds yield byte-identical outputs no
matter which client writes them to disk.
"""

from __future__ import annotations

import io
import json
import math

import numpy as np

from . import algebroid as alg
from . import expr as ex
from . import higher as hi
from . import numerics as nm
from . import strings as st
from . import tulczyjew as tz
from .schemas import (
    AlgebroidConfig, AxiomReportModel, CheckItem, CheckResponse, EquationBlock,
    HomogeneityResult, PlateauResponse, ProblemConfig, ResidualResponse,
    RunReport, SimulateResponse, SurfaceData,
)

__all__ = [
    "ConfigError", "build_algebroid",
    "run_check", "run_derive", "run_simulate", "run_plateau", "run_residual",
]

DEFAULT_AXIOM_TOL = 1e-10
REDUCE_CHECK_TOL = 1e-9
G2_CONSISTENCY_TOL = 1e-8
PLATEAU_TOL = 1e-10


class ConfigError(Exception):
    """The config is structurally valid JSON but semantically unusable."""


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _parse(source: str, where: str) -> ex.Expr:
    try:
        return ex.parse(source)
    except ex.ParseError as err:
        raise ConfigError(f"{where}: {err}") from err


def validate_expressions(cfg: ProblemConfig) -> None:
    """Parse every expression field present in the config before any
    computation starts, so a malformed expression anywhere is a config
    error with a location and no partial output is ever produced."""
    if cfg.lagrangian is not None:
        _parse(cfg.lagrangian.expression, "lagrangian")
    if cfg.hamiltonian is not None:
        _parse(cfg.hamiltonian.expression, "hamiltonian")
    if cfg.boundary is not None:
        _parse(cfg.boundary, "boundary")
    for idx, h in enumerate(cfg.homogeneity):
        _parse(h.expression, f"homogeneity[{idx}]")
    if cfg.algebroid is not None and cfg.algebroid.name == "custom":
        for A, row in enumerate(cfg.algebroid.anchor):
            for a, src in enumerate(row):
                _parse(src, f"anchor[{A}][{a}]")
        for c, plane in enumerate(cfg.algebroid.structure):
            for a, row in enumerate(plane):
                for b, src in enumerate(row):
                    _parse(src, f"structure[{c}][{a}][{b}]")


def build_algebroid(cfg: AlgebroidConfig) -> alg.AlgebroidSpec:
    if cfg.name == "tangent":
        return alg.tangent_algebroid(cfg.base_dim)
    if cfg.name == "so3":
        return alg.so3()
    if cfg.name == "abelian":
        return alg.abelian_lie_algebra(cfg.rank)
    m = len(cfg.anchor)
    n = cfg.rank or (len(cfg.anchor[0]) if m else len(cfg.structure))
    if any(len(row) != n for row in cfg.anchor):
        raise ConfigError("anchor rows must all have length rank")
    if len(cfg.structure) != n or any(
        len(plane) != n or any(len(row) != n for row in plane) for plane in cfg.structure
    ):
        raise ConfigError("structure must be rank x rank x rank")
    names = set(alg.base_names(m)) if m else set()
    anchor, structure = [], []
    for A, row in enumerate(cfg.anchor):
        entries = []
        for a, src in enumerate(row):
            e = _parse(src, f"anchor[{A}][{a}]")
            if ex.free_vars(e) - names:
                raise ConfigError(f"anchor[{A}][{a}] uses non-base variables")
            entries.append(e)
        anchor.append(tuple(entries))
    for c, plane in enumerate(cfg.structure):
        planes = []
        for a, row in enumerate(plane):
            entries = []
            for b, src in enumerate(row):
                e = _parse(src, f"structure[{c}][{a}][{b}]")
                if ex.free_vars(e) - names:
                    raise ConfigError(f"structure[{c}][{a}][{b}] uses non-base variables")
                entries.append(e)
            planes.append(tuple(entries))
        structure.append(tuple(planes))
    return alg.AlgebroidSpec(base_dim=m, rank=n, anchor=tuple(anchor), structure=tuple(structure))


# ---------------------------------------------------------------------------
# LaTeX naming


def _latex_names(chart: ex.Chart) -> dict[str, str]:
    out = {}
    for v in chart.variables:
        comp = f"{v.comp}" if v.comp else ""
        if v.base == "x" and v.order == 0:
            out[v.name] = f"x^{{{comp}}}" if comp else "x"
        elif v.base == "y":
            out[v.name] = f"y^{{{comp}}}_{{{v.order}}}" if comp else f"y_{{{v.order}}}"
        elif v.base == "q":
            out[v.name] = f"q^{{({v.order}){comp}}}" if comp else f"q^{{({v.order})}}"
        elif v.base == "x":  # g2 chart degree-1 coordinate
            out[v.name] = f"x^{{{comp}}}" if comp else "x"
        elif v.base == "z":
            out[v.name] = f"z^{{{comp}}}" if comp else "z"
        elif v.base == "zd":
            out[v.name] = rf"\dot{{z}}^{{{comp}}}" if comp else r"\dot{z}"
        elif v.base == "zdd":
            out[v.name] = rf"\ddot{{z}}^{{{comp}}}" if comp else r"\ddot{z}"
        elif v.base == "xd":
            out[v.name] = rf"\dot{{x}}^{{{v.name[2:]}}}"
    return out


def _first_order_latex(m: int) -> dict[str, str]:
    xs, xds, ps, pds = tz.phase_names(m)
    out = {}
    for mu in range(m):
        sup = f"^{{{mu + 1}}}" if m > 1 else ""
        out[xs[mu]] = f"x{sup}"
        out[xds[mu]] = rf"\dot{{x}}{sup}"
        out[ps[mu]] = f"p{'_{' + str(mu + 1) + '}' if m > 1 else ''}"
        out[pds[mu]] = rf"\dot{{p}}{'_{' + str(mu + 1) + '}' if m > 1 else ''}"
    return out


def _pi_latex(k: int, n: int) -> dict[str, str]:
    return {f"pi{j}_{a}": rf"\pi^{{{j}}}_{{{a}}}" for j in range(1, k + 1) for a in range(1, n + 1)}


def _block(label: str, e: ex.Expr, names: dict[str, str]) -> EquationBlock:
    return EquationBlock(label=label, plain=ex.serialize(e), latex=ex.to_latex(e, names))


def _latex_document(blocks: list[EquationBlock]) -> str:
    lines = [r"\documentclass{article}", r"\usepackage{amsmath}", r"\begin{document}"]
    for b in blocks:
        lines.append(rf"\begin{{equation*}} {b.label}: \quad {b.latex} \end{{equation*}}")
    lines.append(r"\end{document}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# check


def run_check(cfg: ProblemConfig) -> CheckResponse:
    validate_expressions(cfg)
    if cfg.algebroid is None and not cfg.homogeneity:
        raise ConfigError("check needs an algebroid block or homogeneity entries")
    tol = cfg.numeric.tol if cfg.numeric.tol is not None else DEFAULT_AXIOM_TOL

    axioms = None
    ok = True
    if cfg.algebroid is not None:
        spec = build_algebroid(cfg.algebroid)
        report = alg.check_axioms(spec, samples=50, seed=cfg.seed)
        axioms = AxiomReportModel(
            antisymmetry_max_violation=report.antisymmetry_max_violation,
            jacobi_max_violation=report.jacobi_max_violation,
            anchor_compat_max_violation=report.anchor_compat_max_violation,
        )
        ok = ok and report.ok(tol)

    homogeneity = []
    for h in cfg.homogeneity:
        e = _parse(h.expression, "homogeneity expression")
        missing = ex.free_vars(e) - set(h.weights)
        if missing:
            raise ConfigError(f"homogeneity weights missing for {sorted(missing)}")
        chart = ex.Chart(
            [ex.JetVar(nme, nme, 0, 0, w) for nme, w in sorted(h.weights.items())],
            "weights", {})
        verdict = ex.check_homogeneity(e, chart, h.degree, seed=cfg.seed)
        passed = verdict == h.expect
        ok = ok and passed
        homogeneity.append(HomogeneityResult(
            expression=h.expression, degree=h.degree,
            homogeneous=verdict, expected=h.expect, passed=passed))

    return CheckResponse(status="ok" if ok else "violation", tolerance=tol,
                         axioms=axioms, homogeneity=homogeneity)


# ---------------------------------------------------------------------------
# derive


def _higher_spec(cfg: ProblemConfig) -> hi.LagrangianSpec:
    if cfg.algebroid is None or cfg.lagrangian is None:
        raise ConfigError("this kind requires algebroid and lagrangian blocks")
    spec = build_algebroid(cfg.algebroid)
    if cfg.kind == "lie_algebra" and spec.base_dim != 0:
        raise ConfigError("lie_algebra kind requires a rank-only algebra (base_dim 0)")
    L = _parse(cfg.lagrangian.expression, "lagrangian")
    try:
        return hi.LagrangianSpec(algebroid=spec, order=cfg.lagrangian.order, lagrangian=L)
    except ex.ChartError as err:
        raise ConfigError(str(err)) from err


def _first_order_dim(cfg: ProblemConfig) -> int:
    block = cfg.lagrangian or cfg.hamiltonian
    if block.dim:
        return block.dim
    if cfg.numeric.initial and cfg.numeric.initial.x:
        return len(cfg.numeric.initial.x)
    return 1


def _base_equation_note(coeffs: dict[int, float]) -> tuple[str, list[str]]:
    terms = sorted(coeffs.items())
    parts = [f"{c:g} * d^{i}x/dt^{i}" if i else f"{c:g} * x" for i, c in terms if c != 0.0]
    eq = "0 = " + " + ".join(parts)
    notes = []
    if sorted(i for i, c in terms if c != 0.0) == [2, 4]:
        c = -coeffs[4] / coeffs[2]
        eq = f"d^2x/dt^2 = {c:g} * d^4x/dt^4"
        notes.append(
            f"base equation coefficient {c:g}: sign and magnitude are fixed by the "
            "discrete-action gradient; see docs/conventions.md for the normalization.")
    return eq, notes


def run_derive(cfg: ProblemConfig) -> RunReport:
    validate_expressions(cfg)
    if cfg.kind == "first_order":
        m = _first_order_dim(cfg)
        names = _first_order_latex(m)
        if cfg.lagrangian is not None:
            L = _parse(cfg.lagrangian.expression, "lagrangian")
            try:
                sysL = tz.lagrangian_dynamics(L, m)
            except ex.ChartError as err:
                raise ConfigError(str(err)) from err
            xs, xds, ps, pds = tz.phase_names(m)
            eqs = [_block(f"0 = {r}", e, names)
                   for r, e in zip([f"p - dL/d{x}" for x in xds] + [f"pdot - dL/d{x}" for x in xs],
                                   sysL.residuals)]
            mom = [_block(f"{p} =", e, names) for p, e in zip(ps, sysL.legendre)]
            report = RunReport(status="ok", kind=cfg.kind, equations=eqs, momenta=mom)
        elif cfg.hamiltonian is not None:
            H = _parse(cfg.hamiltonian.expression, "hamiltonian")
            try:
                sysH = tz.hamiltonian_dynamics(H, m)
            except ex.ChartError as err:
                raise ConfigError(str(err)) from err
            eqs = [_block("0 =", e, names) for e in sysH.residuals]
            report = RunReport(status="ok", kind=cfg.kind, equations=eqs)
        else:
            raise ConfigError("first_order derive requires a lagrangian or hamiltonian block")

    elif cfg.kind in ("higher", "lie_algebra"):
        spec = _higher_spec(cfg)
        try:
            sys = hi.el_equations(spec)
        except hi.SingularLegendreError as err:
            return RunReport(status="failed", kind=cfg.kind, error=str(err))
        names = _latex_names(sys.chart) | _pi_latex(spec.order, spec.n)
        mom = [
            _block(f"pi{j}_{a}", sys.momenta.pi[j - 1][a - 1], names)
            for j in range(1, spec.order + 1) for a in range(1, spec.n + 1)
        ]
        eqs = [_block(f"0 = R_{a + 1}", r, names) for a, r in enumerate(sys.residuals)]
        cons = [_block(f"d/dt {v} =", e, names) for v, e in sys.constraints]
        checks, notes, base_eq = [], [], None
        if alg.is_tangent(spec.algebroid):
            dev = hi.reduce_check(spec, seed=cfg.seed)
            checks.append(CheckItem(name="reduce_check_deviation", value=dev,
                                    tolerance=REDUCE_CHECK_TOL, passed=dev < REDUCE_CHECK_TOL))
            coeffs = hi.pure_jet_equation(sys)
            if coeffs:
                base_eq, notes = _base_equation_note(coeffs)
        report = RunReport(status="ok", kind=cfg.kind, equations=eqs, momenta=mom,
                           constraints=cons, checks=checks, notes=notes, base_equation=base_eq)

    elif cfg.kind == "g2":
        if cfg.algebroid is None or cfg.lagrangian is None:
            raise ConfigError("g2 derive requires algebroid and lagrangian blocks")
        spec = build_algebroid(cfg.algebroid)
        if spec.base_dim != 0:
            raise ConfigError("g2 requires a Lie algebra (base_dim 0)")
        L = _parse(cfg.lagrangian.expression, "lagrangian")
        try:
            g2 = hi.g2_pipeline(L, spec)
        except ex.ChartError as err:
            raise ConfigError(str(err)) from err
        names = _latex_names(g2.chart)
        eqs = [_block(f"0 = R_{a + 1}", r, names) for a, r in enumerate(g2.residuals)]
        mom = [_block(f"B_{a + 1} =", b, names) for a, b in enumerate(g2.B)]
        cons = [_block(f"d/dt {v} =", e, names) for v, e in g2.constraints]
        dev = hi.g2_vs_el_deviation(L, spec, seed=cfg.seed)
        checks = [CheckItem(name="g2_el_consistency", value=dev,
                            tolerance=G2_CONSISTENCY_TOL, passed=dev < G2_CONSISTENCY_TOL)]
        report = RunReport(status="ok", kind=cfg.kind, equations=eqs, momenta=mom,
                           constraints=cons, checks=checks)
    else:
        raise ConfigError(f"derive does not support kind {cfg.kind!r}")

    if cfg.io.latex:
        report.files["equations.tex"] = _latex_document(
            report.momenta + report.equations + report.constraints)
    if report.checks and not all(c.passed for c in report.checks):
        report.status = "failed"
        report.error = "verification checks failed"
    return report


# ---------------------------------------------------------------------------
# simulate


def _trajectory_csv(traj: nm.Trajectory, state_names: list[str]) -> tuple[str, list[str]]:
    cons = sorted(traj.conserved)
    columns = ["t"] + state_names + cons
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for i, t in enumerate(traj.t):
        row = [t] + list(traj.states[i]) + [traj.conserved[c][i] for c in cons]
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue(), columns


def _trajectory_json(traj: nm.Trajectory, state_names: list[str]) -> str:
    payload = {
        "t": [float(v) for v in traj.t],
        "columns": state_names,
        "states": [[float(v) for v in row] for row in traj.states],
        "conserved": {k: [float(v) for v in vals] for k, vals in sorted(traj.conserved.items())},
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def run_simulate(cfg: ProblemConfig) -> SimulateResponse:
    validate_expressions(cfg)
    initial = cfg.numeric.initial
    if initial is None:
        raise ConfigError("simulate requires numeric.initial")

    if cfg.kind == "first_order":
        m = _first_order_dim(cfg)
        if cfg.lagrangian is not None:
            L = _parse(cfg.lagrangian.expression, "lagrangian")
            sys = tz.lagrangian_dynamics(L, m)
            if initial.xdot is None or len(initial.x) != m or len(initial.xdot) != m:
                raise ConfigError("first_order lagrangian simulate needs initial.x and initial.xdot")
            state0 = np.array(list(initial.x) + list(initial.xdot))
        elif cfg.hamiltonian is not None:
            H = _parse(cfg.hamiltonian.expression, "hamiltonian")
            sys = tz.hamiltonian_dynamics(H, m)
            if initial.p is None or len(initial.x) != m or len(initial.p) != m:
                raise ConfigError("first_order hamiltonian simulate needs initial.x and initial.p")
            state0 = np.array(list(initial.x) + list(initial.p))
        else:
            raise ConfigError("first_order simulate requires a lagrangian or hamiltonian block")
        state_names, rhs, conserved = sys.state_names, sys.rhs, sys.conserved
        try:
            traj = nm.rk4(nm.OdeProblem(rhs=rhs, y0=state0, t_span=(0.0, cfg.numeric.T),
                                        dt=cfg.numeric.dt), observers=conserved)
        except (nm.NonFiniteError, np.linalg.LinAlgError) as err:
            return SimulateResponse(status="failed", kind=cfg.kind, error=str(err))

    elif cfg.kind in ("higher", "lie_algebra"):
        spec = _higher_spec(cfg)
        k, n, m = spec.order, spec.n, spec.m
        if len(initial.x) != m:
            raise ConfigError(f"initial.x must have {m} entries")
        if len(initial.y) != 2 * k - 1 or any(len(row) != n for row in initial.y):
            raise ConfigError(
                f"initial.y must have {2 * k - 1} rows of {n} entries (jets y_1..y_{2 * k - 1})")
        sys = hi.el_equations(spec)
        jets = {nme: v for nme, v in zip(spec.algebroid.base, initial.x)}
        for i, row in enumerate(initial.y, start=1):
            for a, v in enumerate(row, start=1):
                jets[hi.fibre_name(a, i, n)] = float(v)
        state0 = sys.initial_state_from_jets(jets)
        state_names = sys.state_names
        try:
            traj = hi.simulate(sys, state0, cfg.numeric.T, cfg.numeric.dt)
        except (hi.SingularLegendreError, nm.NonFiniteError) as err:
            return SimulateResponse(status="failed", kind=cfg.kind, error=str(err))
    else:
        raise ConfigError(f"simulate does not support kind {cfg.kind!r}")

    checks = [
        CheckItem(name=f"{name}_drift", value=traj.drift(name),
                  tolerance=cfg.numeric.drift_tol,
                  passed=traj.drift(name) < cfg.numeric.drift_tol)
        for name in sorted(traj.conserved)
    ]
    report = SimulateResponse(status="ok", kind=cfg.kind, checks=checks)
    if cfg.io.format == "json":
        report.files["trajectory.json"] = _trajectory_json(traj, list(state_names))
        report.columns = ["t"] + list(state_names)
    else:
        csv, columns = _trajectory_csv(traj, list(state_names))
        report.files["trajectory.csv"] = csv
        report.columns = columns
    if not all(c.passed for c in checks):
        report.status = "failed"
        report.error = "conserved-quantity drift exceeded tolerance"
    return report


# ---------------------------------------------------------------------------
# plateau


def run_plateau(cfg: ProblemConfig) -> PlateauResponse:
    validate_expressions(cfg)
    if cfg.kind != "plateau":
        raise ConfigError("plateau runner requires kind = plateau")
    if cfg.boundary is None:
        raise ConfigError("plateau requires a boundary expression in x and y")
    g_expr = _parse(cfg.boundary, "boundary")
    extra = ex.free_vars(g_expr) - {"x", "y"}
    if extra:
        raise ConfigError(f"boundary expression may only use x and y, found {sorted(extra)}")
    domain = cfg.numeric.domain or ((-1.0, 1.0), (-1.0, 1.0))
    nx, ny = cfg.numeric.grid or (65, 65)
    if nx < 5 or ny < 5:
        raise ConfigError("plateau grid must be at least 5x5")
    tol = cfg.numeric.tol if cfg.numeric.tol is not None else PLATEAU_TOL

    xs = np.linspace(domain[0][0], domain[0][1], nx)
    ys = np.linspace(domain[1][0], domain[1][1], ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    gfun = ex.compile_expr(g_expr, ["x", "y"])
    z = np.zeros((nx, ny))
    mask = np.zeros_like(z, dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    vals = np.broadcast_to(np.asarray(gfun([X, Y]), dtype=float), z.shape)
    if not np.all(np.isfinite(vals[mask])):
        raise ConfigError("boundary expression is not finite on the boundary")
    z[mask] = vals[mask]
    surface = st.GraphSurface(x=xs, y=ys, z=z)

    def log_csv(log: list[dict]) -> str:
        buf = io.StringIO()
        buf.write("iteration,residual,halvings\n")
        for rec in log:
            buf.write(f"{rec['iteration']},{_fmt(rec['residual'])},{rec['halvings']}\n")
        return buf.getvalue()

    try:
        solved, log = st.solve_plateau(surface, tol=tol, max_iter=cfg.numeric.max_iter)
    except st.NoConvergenceError as err:
        report = PlateauResponse(status="failed", kind=cfg.kind, error=str(err),
                                 iterations=len(err.log), final_residual=err.final_residual)
        report.files["convergence.csv"] = log_csv(err.log)
        return report
    except nm.SingularJacobianError as err:
        return PlateauResponse(status="failed", kind=cfg.kind, error=f"singular Jacobian: {err}")

    final = log[-1]["residual"]
    report = PlateauResponse(
        status="ok", kind=cfg.kind, iterations=log[-1]["iteration"], final_residual=final,
        checks=[CheckItem(name="final_residual", value=final, tolerance=tol, passed=final < tol)])
    if cfg.io.format == "json":
        report.files["surface.json"] = json.dumps(
            {"x": solved.x.tolist(), "y": solved.y.tolist(), "z": solved.z.tolist()},
            sort_keys=True, separators=(",", ":")) + "\n"
    else:
        report.files["surface.csv"] = solved.to_csv()
    report.files["convergence.csv"] = log_csv(log)
    return report


# ---------------------------------------------------------------------------
# string residual


def _surface_from_data(data: SurfaceData) -> st.SurfaceGrid:
    try:
        return st.SurfaceGrid(t=np.asarray(data.t), s=np.asarray(data.s),
                              values=np.asarray(data.values))
    except ValueError as err:
        raise ConfigError(f"surface data: {err}") from err


def run_residual(cfg: ProblemConfig) -> ResidualResponse:
    validate_expressions(cfg)
    if cfg.kind != "string_residual":
        raise ConfigError("residual runner requires kind = string_residual")
    if cfg.lagrangian is None:
        raise ConfigError("string_residual requires a lagrangian block")
    if cfg.surface is None:
        raise ConfigError("string_residual requires surface data (--config io.surface for the CLI)")
    S = _surface_from_data(cfg.surface)
    L = _parse(cfg.lagrangian.expression, "lagrangian")
    try:
        biv = st.BivectorLagrangian(m=S.m, lagrangian=L)
    except (ValueError, ex.ChartError) as err:
        raise ConfigError(str(err)) from err

    try:
        r = st.el_residual(biv, S)
    except ex.EvalError as err:
        return ResidualResponse(status="failed", kind=cfg.kind, error=str(err))

    per_comp = [st.interior_max(r[mu]) for mu in range(S.m)]
    buf = io.StringIO()
    buf.write("t,s," + ",".join(f"r{mu}" for mu in range(1, S.m + 1)) + "\n")
    for i, tv in enumerate(S.t):
        for j, sv in enumerate(S.s):
            row = [tv, sv] + [r[mu, i, j] for mu in range(S.m)]
            buf.write(",".join(_fmt(v) for v in row) + "\n")
    report = ResidualResponse(status="ok", kind=cfg.kind,
                              max_interior_residual=max(per_comp), per_component=per_comp)
    report.files["residual.csv"] = buf.getvalue()
    return report

"""Study orchestration: single runs, convergence ladders, locking sweeps.

Every study walks the same pipeline: chart -> mesh -> spaces -> assembly ->
solve -> error measurement, with manufactured loads defined by applying the
discrete forms to the exact fields at quadrature points.  Reports are rows
of a fixed schema emitted as CSV and a plain-text table; with deterministic
timing enabled the output is bit-reproducible across runs and worker
counts.
"""

from __future__ import annotations

import configparser
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as dla
import scipy.sparse.linalg as spla

from .analysis import error_norms, korn_constant, smallest_generalized_eigenvalue
from .assembly import Assembler, CallableHSource, assemble_system
from .cases import CASE_NAMES, make_case
from .material import ElasticModuli
from .mesh import build_structured
from .solver import SolverError, solve, stability_constant
from .spaces import build_spaces

CSV_COLUMNS = (
    "chart", "n", "h_max", "epsilon", "dofs_H", "dofs_V", "err_Hh", "rate",
    "korn_lambda_min", "stability_const", "residual", "seconds",
)

#: dense-diagnostics ceilings: Korn eigenproblem and the stability constant
KORN_DOF_LIMIT = 2600
STABILITY_DOF_LIMIT = 3000
#: coercivity probes run on a coarsened companion mesh at most this fine
PROBE_MAX_N = 4


class HarnessError(Exception):
    """Raised for invalid configurations or failed invariant probes."""


@dataclass
class RunConfig:
    """Configuration of a study.

    Defaults give the bending-dominated cylinder case.  ``epsilons`` is
    used by locking/stability sweeps, ``levels`` by convergence ladders.
    """

    case: str = "smooth-cylinder"
    chart_params: dict = field(default_factory=dict)
    n: int = 4
    levels: tuple = (2, 4, 8, 16)
    degree: int = 2
    epsilon: float = 1e-3
    epsilons: tuple = (1e-2, 1e-3, 1e-4)
    lam: float = 1.0
    mu: float = 1.0
    kappa: float = 1.0
    penalty: float = None
    workers: int = 1
    deterministic_timing: bool = False
    with_korn: bool = True
    with_stability: bool = True
    coercivity_probe: bool = True

    def moduli(self):
        return ElasticModuli(lam=self.lam, mu=self.mu, kappa=self.kappa)


@dataclass
class StudyRow:
    chart: str
    n: int
    h_max: float
    epsilon: float
    dofs_H: int
    dofs_V: int
    err_Hh: float
    rate: float = None
    korn_lambda_min: float = None
    stability_const: float = None
    residual: float = None
    seconds: float = 0.0


@dataclass
class StudyReport:
    label: str
    rows: list = field(default_factory=list)
    probes: dict = field(default_factory=dict)

    def ok(self):
        return all(bool(v) for v in self.probes.values())


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report, out_dir, basename=None):
    """Write the report as CSV and a plain-text table; returns the paths.

    Field order is fixed; floats use shortest round-trip formatting, so
    identical reports serialize to identical bytes.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    base = basename or report.label
    csv_path = os.path.join(out_dir, base + ".csv")
    txt_path = os.path.join(out_dir, base + ".txt")
    lines = [",".join(CSV_COLUMNS)]
    for row in report.rows:
        lines.append(",".join(_fmt(getattr(row, col)) for col in CSV_COLUMNS))
    with open(csv_path, "w") as f:
        f.write("\n".join(lines) + "\n")

    widths = [max(len(c), 12) for c in CSV_COLUMNS]
    tlines = ["  ".join(c.ljust(w) for c, w in zip(CSV_COLUMNS, widths))]
    for row in report.rows:
        cells = []
        for col, w in zip(CSV_COLUMNS, widths):
            v = getattr(row, col)
            if isinstance(v, float):
                cells.append(f"{v:.6g}".ljust(w))
            else:
                cells.append(_fmt(v).ljust(w))
        tlines.append("  ".join(cells))
    for name, okay in sorted(report.probes.items()):
        tlines.append(f"probe {name}: {'pass' if okay else 'FAIL'}")
    with open(txt_path, "w") as f:
        f.write("\n".join(tlines) + "\n")
    return csv_path, txt_path


def parse_report_csv(path):
    """Read back an emitted CSV into StudyRow objects."""
    rows = []
    with open(path) as f:
        header = f.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise HarnessError(f"unexpected CSV header in {path}")
        for line in f:
            vals = line.rstrip("\n").split(",")
            kw = {}
            for col, raw in zip(CSV_COLUMNS, vals):
                if raw == "":
                    kw[col] = None
                elif col == "chart":
                    kw[col] = raw
                elif col in ("n", "dofs_H", "dofs_V"):
                    kw[col] = int(raw)
                else:
                    kw[col] = float(raw)
            rows.append(StudyRow(**kw))
    return rows


def coercivity_probe(config, case, epsilon):
    """Smallest eigenvalue of the displacement form against the broken-H1 Gram.

    Runs on a companion mesh no finer than PROBE_MAX_N (the coercivity
    constant is mesh-robust).  Fails when the form is not positive
    semidefinite at the configured penalty.
    """
    n = min(config.n, PROBE_MAX_N)
    mesh = build_structured(case.bounds, n, case.side_labels)
    spaces = build_spaces(mesh, case.chart, k=config.degree)
    asm = Assembler(spaces, config.moduli(), penalty=config.penalty,
                    nworkers=config.workers)
    A = asm.a_matrix()
    gram = asm.gram_h_norm()
    lam = smallest_generalized_eigenvalue(A, gram)[0]
    return float(lam)


def _check_probe(config, case, epsilon):
    if not config.coercivity_probe:
        return None
    lam = coercivity_probe(config, case, epsilon)
    if lam < -1e-10:
        raise HarnessError(
            f"coercivity probe failed (smallest eigenvalue {lam:.3e} < 0): "
            "increase the penalty constant (--penalty); the default is "
            "10*(3*lam + 2*mu)"
        )
    return lam


@dataclass
class CaseResult:
    row: StudyRow
    solution: object
    assembler: object
    spaces: object
    case: object


def _study_row(config, case, spaces, asm, epsilon, err, residual, seconds,
               korn=None, stab=None):
    return StudyRow(
        chart=case.chart.kind,
        n=config.n,
        h_max=spaces.mesh.h_max,
        epsilon=epsilon,
        dofs_H=spaces.n_h,
        dofs_V=spaces.n_v,
        err_Hh=err,
        korn_lambda_min=korn,
        stability_const=stab,
        residual=residual,
        seconds=0.0 if config.deterministic_timing else seconds,
    )


def run_case(config):
    """Assemble and solve a single configuration; returns a CaseResult."""
    case = make_case(config.case, config.epsilon, config.chart_params)
    _check_probe(config, case, config.epsilon)
    t0 = time.perf_counter()
    mesh = build_structured(case.bounds, config.n, case.side_labels)
    spaces = build_spaces(mesh, case.chart, k=config.degree)
    system, asm = assemble_system(
        spaces, config.moduli(), config.epsilon, penalty=config.penalty,
        exact=case.exact, nworkers=config.workers,
    )
    sol = solve(system)
    err = error_norms(asm, case.exact, x=sol.x, which="H_h")
    seconds = time.perf_counter() - t0
    korn = None
    if config.with_korn and spaces.n_h <= KORN_DOF_LIMIT:
        korn = korn_constant(asm)
    stab = None
    if config.with_stability and spaces.n_h + spaces.n_v <= STABILITY_DOF_LIMIT:
        grams = asm.norm_grams()
        stab = stability_constant(system, grams.h_norm, grams.v_norm)
    row = _study_row(config, case, spaces, asm, config.epsilon, err,
                     max(sol.residual_primal, sol.residual_dual), seconds,
                     korn=korn, stab=stab)
    return CaseResult(row=row, solution=sol, assembler=asm, spaces=spaces, case=case)


def convergence_study(config):
    """Uniform refinement ladder; records observed rates between levels."""
    if len(config.levels) < 3:
        raise HarnessError("a convergence study needs at least 3 mesh levels")
    case = make_case(config.case, config.epsilon, config.chart_params)
    _check_probe(config, case, config.epsilon)
    report = StudyReport(label=f"converge-{config.case}")
    prev_err = None
    for n in config.levels:
        level_cfg = replace(config, n=int(n))
        t0 = time.perf_counter()
        mesh = build_structured(case.bounds, int(n), case.side_labels)
        spaces = build_spaces(mesh, case.chart, k=config.degree)
        system, asm = assemble_system(
            spaces, config.moduli(), config.epsilon, penalty=config.penalty,
            exact=case.exact, nworkers=config.workers,
        )
        sol = solve(system)
        err = error_norms(asm, case.exact, x=sol.x, which="H_h")
        seconds = time.perf_counter() - t0
        korn = None
        if config.with_korn and spaces.n_h <= KORN_DOF_LIMIT:
            korn = korn_constant(asm)
        row = _study_row(level_cfg, case, spaces, asm, config.epsilon, err,
                         max(sol.residual_primal, sol.residual_dual), seconds,
                         korn=korn)
        if prev_err is not None and err > 0:
            row.rate = float(np.log2(prev_err / err))
        report.rows.append(row)
        prev_err = err
    report.probes["coercivity"] = True
    return report


def primal_solve(spaces, moduli, epsilon, exact, penalty=None, nworkers=1):
    """Solve the penalized primal baseline with a manufactured load."""
    asm = Assembler(spaces, moduli, penalty=penalty, nworkers=nworkers)
    A = asm.primal_matrix(epsilon)
    inv2 = 1.0 / float(epsilon) ** 2
    f = np.asarray(
        asm.a_matrix(
            trial=CallableHSource(exact),
            weights=(1.0 / 3.0, inv2, inv2),
            penalty_scales=(1.0, 1.0 + inv2),
        ).todense()
    ).ravel()
    n = A.shape[0]
    if n <= 5000:
        dense = A.toarray()
        x = dla.solve(dense, f, assume_a="pos")
        x += dla.solve(dense, f - A @ x, assume_a="pos")  # one refinement pass
    else:
        lu = spla.splu(A.tocsc())
        x = lu.solve(f)
        x += lu.solve(f - A @ x)
    res = np.linalg.norm(A @ x - f) / max(np.linalg.norm(f), 1e-300)
    # the eps^{-2} weights make this system intrinsically ill-conditioned;
    # the residual only guards against outright breakdown
    if res > 1e-6:
        raise SolverError(f"primal baseline residual {res:.2e} too large")
    return asm, x, res


def locking_study(config):
    """Thickness sweep comparing the mixed method with the primal baseline.

    Returns ``(mixed_report, primal_report)``, one row per thickness at the
    fixed mesh level ``config.n``.
    """
    mixed = StudyReport(label=f"locking-mixed-{config.case}")
    primal = StudyReport(label=f"locking-primal-{config.case}")
    probe_case = make_case(config.case, config.epsilons[0], config.chart_params)
    if not any(lab == "F" for lab in probe_case.side_labels.values()):
        raise HarnessError("locking studies need a free boundary portion")
    _check_probe(config, probe_case, config.epsilons[0])
    for eps in config.epsilons:
        case = make_case(config.case, eps, config.chart_params)
        mesh = build_structured(case.bounds, config.n, case.side_labels)
        spaces = build_spaces(mesh, case.chart, k=config.degree)

        t0 = time.perf_counter()
        system, asm = assemble_system(
            spaces, config.moduli(), eps, penalty=config.penalty,
            exact=case.exact, nworkers=config.workers,
        )
        sol = solve(system)
        err = error_norms(asm, case.exact, x=sol.x, which="H_h")
        stab = None
        if config.with_stability and spaces.n_h + spaces.n_v <= STABILITY_DOF_LIMIT:
            grams = asm.norm_grams()
            stab = stability_constant(system, grams.h_norm, grams.v_norm)
        mixed.rows.append(
            _study_row(config, case, spaces, asm, eps, err,
                       max(sol.residual_primal, sol.residual_dual),
                       time.perf_counter() - t0, stab=stab)
        )

        t0 = time.perf_counter()
        pasm, px, pres = primal_solve(
            spaces, config.moduli(), eps, case.exact,
            penalty=config.penalty, nworkers=config.workers,
        )
        perr = error_norms(pasm, case.exact, x=px, which="H_h")
        primal.rows.append(
            _study_row(config, case, spaces, pasm, eps, perr, pres,
                       time.perf_counter() - t0)
        )
    errs = [r.err_Hh for r in mixed.rows]
    mixed.probes["epsilon-uniform (max/min <= 2)"] = max(errs) / min(errs) <= 2.0
    perrs = {r.epsilon: r.err_Hh for r in primal.rows}
    if 1e-4 in perrs and 1e-2 in perrs:
        primal.probes["locking exhibited (ratio >= 5)"] = (
            perrs[1e-4] / perrs[1e-2] >= 5.0
        )
    return mixed, primal


def diagnostics_study(config):
    """Invariant probes: quadrature, enrichment, coercivity, Korn, stability."""
    from .quadrature import rule_exactness_defect, triangle_rule

    report = StudyReport(label=f"diagnostics-{config.case}")
    case = make_case(config.case, config.epsilon, config.chart_params)
    mesh = build_structured(case.bounds, config.n, case.side_labels)
    spaces = build_spaces(mesh, case.chart, k=config.degree)
    asm = Assembler(spaces, config.moduli(), penalty=config.penalty,
                    nworkers=config.workers)

    report.probes["quadrature exactness"] = (
        rule_exactness_defect(triangle_rule(2 * config.degree + 4)) < 1e-12
    )

    defect = 0.0
    for it, enr in spaces.enrichments.items():
        data = asm._elem_data(it)
        vals = enr.eval(spaces.to_reference(it, data["pts"]))
        from . import polynomials as poly

        quad = spaces._pk_coeffs @ poly.monomial_values(
            spaces.mono_degree, spaces.to_reference(it, data["pts"])
        )
        ws = data["wsurf"]
        for row in vals:
            norm_p = np.sqrt(np.sum(ws * row * row))
            for qrow in quad:
                norm_q = np.sqrt(np.sum(ws * qrow * qrow))
                defect = max(
                    defect, abs(np.sum(ws * row * qrow)) / max(norm_p * norm_q, 1e-30)
                )
    report.probes["enrichment orthogonality"] = defect < 1e-10

    lam = _check_probe(config, case, config.epsilon)
    report.probes["coercivity"] = lam is None or lam > -1e-10

    if spaces.n_h <= KORN_DOF_LIMIT:
        report.probes["korn positive"] = korn_constant(asm) > 0

    if config.with_stability:
        consts = []
        for eps in config.epsilons:
            system, asm_eps = assemble_system(
                spaces, config.moduli(), eps, penalty=config.penalty,
                nworkers=config.workers,
            )
            if spaces.n_h + spaces.n_v > STABILITY_DOF_LIMIT:
                break
            grams = asm_eps.norm_grams()
            consts.append(
                stability_constant(system, grams.h_norm, grams.v_norm)
            )
            report.rows.append(
                _study_row(config, case, spaces, asm_eps, eps, 0.0, None, 0.0,
                           stab=consts[-1])
            )
        if consts:
            report.probes["stability uniform (max/min < 2)"] = (
                max(consts) / min(consts) < 2.0
            )
    return report


def load_config(path=None, overrides=None):
    """Build a RunConfig from an INI file plus override pairs.

    Sections/keys (all optional, shown with defaults):

    [case]            name=smooth-cylinder  epsilon=1e-3
                      epsilons=1e-2,1e-3,1e-4  radius=1.0  scale=1.0
    [mesh]            n=4  levels=2,4,8,16
    [material]        lam=1.0  mu=1.0  kappa=1.0
    [discretization]  degree=2  penalty=  (empty: 10*(3 lam + 2 mu))
    [run]             workers=1  deterministic_timing=false
    """
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise HarnessError(f"cannot read config file {path!r}")
        sec = lambda s: parser[s] if parser.has_section(s) else {}
        case_sec = sec("case")
        if "name" in case_sec:
            cfg.case = case_sec["name"]
        if "epsilon" in case_sec:
            cfg.epsilon = float(case_sec["epsilon"])
        if "epsilons" in case_sec:
            cfg.epsilons = tuple(float(v) for v in case_sec["epsilons"].split(","))
        for key in ("radius", "scale"):
            if key in case_sec:
                cfg.chart_params[key] = float(case_sec[key])
        mesh_sec = sec("mesh")
        if "n" in mesh_sec:
            cfg.n = int(mesh_sec["n"])
        if "levels" in mesh_sec:
            cfg.levels = tuple(int(v) for v in mesh_sec["levels"].split(","))
        mat = sec("material")
        for key in ("lam", "mu", "kappa"):
            if key in mat:
                setattr(cfg, key, float(mat[key]))
        disc = sec("discretization")
        if "degree" in disc:
            cfg.degree = int(disc["degree"])
        if disc.get("penalty"):
            cfg.penalty = float(disc["penalty"])
        run = sec("run")
        if "workers" in run:
            cfg.workers = int(run["workers"])
        if "deterministic_timing" in run:
            cfg.deterministic_timing = run["deterministic_timing"].lower() in (
                "1", "true", "yes",
            )
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    if cfg.case not in CASE_NAMES:
        raise HarnessError(f"unknown case {cfg.case!r}; available: {CASE_NAMES}")
    return cfg

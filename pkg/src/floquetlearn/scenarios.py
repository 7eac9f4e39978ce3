"""Configurable end-to-end experiments behind the command-line runner.

Each scenario takes a validated configuration dictionary and returns result
rows, optional coefficient rows and a summary. Configuration templates live
in ``floquetlearn/configs``.
"""

from __future__ import annotations

import copy
import logging
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable

import numpy as np
import yaml

from . import fhl, fll, rmt
from .ansatz import AnsatzSet, cluster_ansatz, schwinger_ansatz, xxz_ansatz
from .magnus import BranchAmbiguityError, floquet_via_log, magnus_truncation, omega0
from .models import (
    ClusterParams,
    ErrorInjection,
    SchwingerParams,
    XXZParams,
    cluster_builder,
    cluster_target,
    schwinger_builder,
    xxz_builder,
    xxz_jump_set,
    xxz_lindblad_builder,
)
from .pauli import PauliOperator, PauliString
from .simulator import NoiseModel, block_unitary, neel_state, random_product_states

log = logging.getLogger(__name__)

FHL_COLUMNS = ["tau", "lambda1", "lambda1_normalized", "spectral_gap", "param_distance", "alpha",
               "n_con", "n_ansatz", "n_shots", "seed"]
FHL_COEF_COLUMNS = ["label", "c_rec", "c_exact", "order_tag"]
FLL_COLUMNS = ["tau", "delta", "delta_bound", "n_con", "n_unknowns", "n_shots", "seed"]
FLL_COEF_COLUMNS = ["label", "kind", "c_rec", "c_exact"]
RMT_COLUMNS = ["tau", "n", "delta_rmt_lambda", "delta_rmt_Q", "lambda_rmt", "mc_stderr"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ScenarioResult:
    columns: list[str]
    rows: list[dict]
    coef_columns: list[str] | None = None
    coefficients: list[dict] | None = None
    summary: dict = field(default_factory=dict)
    unresolved: bool = False


# ---------------------------------------------------------------- shared analysis helpers

def schwinger_conserved(ansatz: AnsatzSet) -> list[np.ndarray]:
    """Coefficient vectors of total magnetization and of the all-pairs ZZ sum.

    Both commute with every gate of the Schwinger circuit, so the constraint
    matrix cannot fix the generator's component along them.
    """
    n = ansatz.n_qubits
    q1 = np.zeros(len(ansatz))
    q1[ansatz.indices([PauliString.from_sites(n, {j: "Z"}).label for j in range(n)])] = 1.0
    q2 = np.zeros(len(ansatz))
    pairs = [PauliString.from_sites(n, {i: "Z", j: "Z"}).label for i in range(n) for j in range(i + 1, n)]
    q2[ansatz.indices(pairs)] = 1.0
    return [q1, q2]


def schwinger_zz_indices(ansatz: AnsatzSet) -> tuple[list[tuple[int, int]], list[int]]:
    n = ansatz.n_qubits
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    labels = [PauliString.from_sites(n, {i: "Z", j: "Z"}).label for i, j in pairs]
    return pairs, ansatz.indices(labels)


def schwinger_scaled(block, c_rec: np.ndarray, ansatz: AnsatzSet, tau: float, noise: NoiseModel,
                     total_time: float = 2.0, n_states: int = 4, seed: int = 5,
                     stream: int = 99) -> np.ndarray:
    """Absolute generator coefficients: fit the scale of ``c_rec`` and the conserved components together."""
    n = ansatz.n_qubits
    conserved = schwinger_conserved(ansatz)
    states = random_product_states(n, n_states, seed, stream)
    steps = max(1, round(total_time / tau))
    probes = [fhl.ScaleProbe(s, PauliOperator.from_sites(n, {j: letter}), steps)
              for s in states for j in range(0, n, 2) for letter in "XY"]
    w = fhl.fit_generator_components(block, [c_rec] + conserved, ansatz, probes, tau, noise)
    return w[0] * c_rec + sum(wk * q for wk, q in zip(w[1:], conserved))


def cluster_first_order(block, m: np.ndarray, ansatz: AnsatzSet, tau: float, noise: NoiseModel,
                        n_states: int = 3, seed: int = 4, stream: int = 97) -> np.ndarray:
    """Absolute first-order coefficients of the balanced cluster sequence.

    At ``J_b = J`` the generator splits into two commuting sublattice parts, both
    inside the ansatz, so the constraint matrix has a two-dimensional near-null
    space. Its weights are fixed from ``Y_j`` probe traces.
    """
    n = ansatz.n_qubits
    dirs = fhl.null_directions(m, 2)
    states = random_product_states(n, n_states, seed, stream)
    steps = max(1, round(1.0 / (2.0 * tau * tau)))
    probes = [fhl.ScaleProbe(s, PauliOperator.from_sites(n, {j: "Y"}), steps) for s in states for j in range(n)]
    w = fhl.fit_generator_components(block, list(dirs), ansatz, probes, tau, noise)
    return w @ dirs


def bond_alpha_estimates(c_rec: np.ndarray, ansatz: AnsatzSet, reference: np.ndarray,
                         weights: tuple[float, float, float, float]) -> np.ndarray:
    """Per-bond deviation strength from the ``XZ, ZX, YZ, ZY`` coefficients.

    ``c_rec`` is first scaled to best match ``reference`` (the known target
    couplings); ``weights`` are the expected coefficients per unit deviation.
    """
    scale = float(np.dot(c_rec, reference) / np.dot(c_rec, c_rec))
    c = scale * c_rec
    idx = {k: ansatz.pattern_indices(k) for k in ("XZ", "ZX", "YZ", "ZY")}
    w = np.asarray(weights, dtype=float)
    out = []
    for j in range(ansatz.n_qubits - 1):
        vals = np.array([c[idx[k][j]] for k in ("XZ", "ZX", "YZ", "ZY")])
        out.append(float(np.dot(w, vals) / np.dot(w, w)))
    return np.array(out)


# ---------------------------------------------------------------- config plumbing

def _get(cfg: dict, path: str, default: Any = ...) -> Any:
    cur: Any = cfg
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if default is ...:
                raise ConfigError(path, "required field is missing")
            return default
        cur = cur[part]
    return cur


def _number(cfg: dict, path: str, default: Any = ..., positive: bool = False, integer: bool = False,
            allow_inf: bool = False) -> float:
    val = _get(cfg, path, default)
    if isinstance(val, str) and val.strip().lower() in ("inf", "infinity", ".inf"):
        val = math.inf
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(path, f"expected a number, got {val!r}")
    if math.isinf(val) and not allow_inf:
        raise ConfigError(path, "infinite value not allowed here")
    if math.isnan(val):
        raise ConfigError(path, "NaN not allowed")
    if positive and val <= 0:
        raise ConfigError(path, f"must be positive, got {val}")
    if integer and not math.isinf(val):
        if int(val) != val:
            raise ConfigError(path, f"must be an integer, got {val}")
        return int(val)
    return float(val)


def _numbers(cfg: dict, path: str, default: Any = ..., positive: bool = False,
             allow_inf: bool = False) -> list[float]:
    val = _get(cfg, path, default)
    if not isinstance(val, (list, tuple)) or not val:
        raise ConfigError(path, f"expected a non-empty list of numbers, got {val!r}")
    out = []
    for k, v in enumerate(val):
        try:
            out.append(_number({"v": v}, "v", positive=positive, allow_inf=allow_inf))
        except ConfigError as exc:
            raise ConfigError(f"{path}[{k}]", str(exc).split(": ", 1)[1]) from None
    return out


def tau_grid(cfg: dict, path: str = "tau_grid") -> np.ndarray:
    """A list of values or ``{logspace: [start, stop, count]}``; must be positive and ascending."""
    val = _get(cfg, path)
    if isinstance(val, dict):
        if set(val) != {"logspace"}:
            raise ConfigError(path, f"mapping form must be {{logspace: [start, stop, count]}}, got keys {sorted(val)}")
        spec = val["logspace"]
        if not isinstance(spec, (list, tuple)) or len(spec) != 3:
            raise ConfigError(path, "logspace needs [start, stop, count]")
        start = _number({"v": spec[0]}, "v", positive=True)
        stop = _number({"v": spec[1]}, "v", positive=True)
        count = _number({"v": spec[2]}, "v", positive=True, integer=True)
        grid = np.geomspace(start, stop, int(count))
    else:
        grid = np.asarray(_numbers(cfg, path), dtype=float)
    if np.any(grid <= 0):
        raise ConfigError(path, "tau values must be strictly positive")
    if np.any(np.diff(grid) <= 0):
        raise ConfigError(path, "tau values must be strictly ascending")
    return grid


def noise_model(cfg: dict, n_shots: float | None = None, realization: int = 0) -> NoiseModel:
    ns = _number(cfg, "measurement.n_shots", math.inf, positive=True, integer=True, allow_inf=True) \
        if n_shots is None else n_shots
    seed = _number(cfg, "master_seed", 0, integer=True)
    if math.isinf(ns):
        return NoiseModel.exact(seed)
    mode = _get(cfg, "measurement.sampling", "binomial")
    if mode not in ("binomial", "gaussian"):
        raise ConfigError("measurement.sampling", f"must be binomial or gaussian, got {mode!r}")
    return NoiseModel(int(ns), mode, seed)


def time_policy(cfg: dict) -> fhl.TimePolicy:
    path = "measurement.time_policy"
    kind = _get(cfg, path + ".kind")
    if kind not in fhl.TIME_POLICIES:
        raise ConfigError(path + ".kind", f"must be one of {fhl.TIME_POLICIES}, got {kind!r}")
    if kind in ("fixed_cycles", "final_times"):
        vals = _numbers(cfg, path + ".value", positive=True)
        return fhl.TimePolicy(kind, tuple(vals))
    value = _number(cfg, path + ".value", positive=True)
    n_times = _number(cfg, path + ".n_times", 6, positive=True, integer=True)
    return fhl.TimePolicy(kind, value, int(n_times))


def constraint_spec(cfg: dict, n_shots: float | None = None, realization: int = 0) -> fhl.ConstraintSpec:
    n_states = _number(cfg, "measurement.n_initial_states", positive=True, integer=True)
    seed = _number(cfg, "measurement.state_seed", _get(cfg, "master_seed", 0), integer=True)
    return fhl.ConstraintSpec(int(n_states), time_policy(cfg), noise_model(cfg, n_shots), int(seed), realization)


def _model(build, *args, **kwargs):
    """Construct a model object, reporting its own validation errors against ``model``."""
    try:
        return build(*args, **kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None


def xxz_params(cfg: dict) -> XXZParams:
    n = int(_number(cfg, "model.n_qubits", positive=True, integer=True))
    kind = _get(cfg, "model.kind", "uniform")
    if kind == "disordered":
        seed = int(_number(cfg, "model.seed", integer=True))
        return _model(XXZParams.disordered, n, seed)
    if kind != "uniform":
        raise ConfigError("model.kind", f"must be uniform or disordered, got {kind!r}")
    vals = {k: _number(cfg, f"model.{k}", 0.0 if k in ("by", "bz") else ...) for k in ("jx", "jy", "jz", "bx", "by", "bz")}
    return _model(XXZParams.uniform, n, **vals)


def _is_pattern_list(obj) -> bool:
    return isinstance(obj, list) and bool(obj) and all(
        isinstance(x, str) and x and set(x) <= set("XYZ") for x in obj)


def _patterns(cfg: dict, path: str, default=...) -> list[str]:
    pats = _get(cfg, path, default)
    if not _is_pattern_list(pats):
        raise ConfigError(path, "expected a nonempty list of Pauli patterns such as [XX, ZZ]")
    return pats


def candidate_groups(cfg: dict) -> list[list[str]]:
    groups = _get(cfg, "ansatz.candidate_groups")
    if not isinstance(groups, list) or not groups or not all(_is_pattern_list(g) for g in groups):
        raise ConfigError("ansatz.candidate_groups", "expected a list of pattern lists, e.g. [[XZ, ZX], [YZ, ZY]]")
    return groups


def xxz_ansatz_for(cfg: dict, p: XXZParams, order: int) -> AnsatzSet:
    if order not in (0, 1, 2):
        raise ConfigError("ansatz.order", f"must be 0, 1 or 2, got {order!r}")
    y_field = bool(np.any(p.by != 0))
    if order == 2:
        # no closed pattern list at second order: use the support of the truncated expansion
        _, frags = xxz_builder(p)(0.1)
        a = AnsatzSet.from_operator(magnus_truncation(frags, 0.1, 2), 2)
    else:
        a = xxz_ansatz(p.n_qubits, order, y_field=y_field)
    extra = _get(cfg, "ansatz.extra", [])
    if extra:
        if not isinstance(extra, list) or not all(isinstance(e, str) for e in extra):
            raise ConfigError("ansatz.extra", "expected a list of Pauli patterns such as XZ")
        for e in extra:
            if not e or set(e) - set("XYZ") or len(e) > p.n_qubits:
                raise ConfigError("ansatz.extra", f"invalid pattern {e!r}")
        a = a | AnsatzSet.from_patterns(p.n_qubits, extra, "extra")
    return a


def _orders(cfg: dict) -> list[int]:
    val = _get(cfg, "ansatz.order")
    vals = val if isinstance(val, list) else [val]
    for v in vals:
        if v not in (0, 1, 2) or isinstance(v, bool):
            raise ConfigError("ansatz.order", f"must be 0, 1 or 2 (or a list of them), got {v!r}")
    return [int(v) for v in vals]


def _seed(cfg: dict) -> int:
    return int(_number(cfg, "master_seed", 0, integer=True))


def _fhl_row(pt: fhl.ScanPoint, n_shots: float, seed: int, alpha: float = math.nan, **extra) -> dict:
    res = pt.result
    row = dict(tau=pt.tau, lambda1=res.lambda1, lambda1_normalized=res.lambda1_normalized,
               spectral_gap=res.spectral_gap, param_distance=pt.param_distance, alpha=alpha,
               n_con=res.n_con, n_ansatz=res.n_ansatz, n_shots=n_shots, seed=seed)
    row.update(extra)
    return row


def _coef_rows(ansatz: AnsatzSet, c_rec: np.ndarray, c_exact: np.ndarray) -> list[dict]:
    return [dict(label=l, c_rec=float(a), c_exact=float(b), order_tag=t)
            for l, a, b, t in zip(ansatz.labels, c_rec, c_exact, ansatz.order_tags)]


def _nearest(grid: np.ndarray, value: float) -> int:
    return int(np.argmin(np.abs(np.log(grid) - math.log(value))))


def _threshold_summary(taus, values) -> list[float] | None:
    try:
        return list(fhl.detect_threshold(taus, values))
    except (fhl.NoThresholdError, ValueError) as exc:
        log.info("threshold detection: %s", exc)
        return None


# ---------------------------------------------------------------- scenarios

def run_xxz_scaling(cfg: dict) -> ScenarioResult:
    p = xxz_params(cfg)
    grid = tau_grid(cfg)
    spec = constraint_spec(cfg)
    seed = _seed(cfg)
    builder = xxz_builder(p)
    rows, summary, coefs = [], {}, None
    coef_tau = _number(cfg, "output.coefficient_tau", float(grid[0]), positive=True)
    for order in _orders(cfg):
        a = xxz_ansatz_for(cfg, p, order)
        scan = fhl.tau_scan(builder, a, spec, grid)
        rows += [_fhl_row(pt, spec.noise.n_shots, seed, ansatz_order=order) for pt in scan.points]
        summary[f"order_{order}"] = dict(
            slope_lambda1=scan.slope("lambda1"), slope_distance=scan.slope("distance"),
            threshold_lambda1=_threshold_summary(scan.taus, scan.lambda1),
            threshold_distance=_threshold_summary(scan.taus, scan.distances),
        )
        pt = fhl.scan_point(builder, a, spec, coef_tau)
        c_ex = fhl.exact_coefficients(builder(coef_tau)[1], a, coef_tau)
        coefs = _coef_rows(a, pt.result.c_rec, fhl.unit(c_ex))
    summary["coefficient_tau"] = coef_tau
    return ScenarioResult(["ansatz_order"] + FHL_COLUMNS, rows, FHL_COEF_COLUMNS, coefs, summary)


def run_xxz_disorder(cfg: dict) -> ScenarioResult:
    """Noise plateau over shot budgets and realizations on the disordered chain."""
    p = xxz_params(cfg)
    grid = tau_grid(cfg)
    order = _orders(cfg)[0]
    a = xxz_ansatz_for(cfg, p, order)
    builder = xxz_builder(p)
    shots = _numbers(cfg, "measurement.n_shots_list", positive=True, allow_inf=True)
    n_real = int(_number(cfg, "measurement.n_realizations", 1, positive=True, integer=True))
    seed = _seed(cfg)
    rows, summary = [], {"plateau": {}}
    unitaries = {float(t): builder(float(t)) for t in grid}
    for ns in shots:
        plateaus = []
        for r in range(n_real):
            spec = constraint_spec(cfg, n_shots=ns, realization=r)
            for tau in grid:
                block, frags = unitaries[float(tau)]
                data = fhl.build_constraint_matrix(block, a, spec, float(tau))
                res = fhl.reconstruct(data.matrix)
                c_ex = fhl.exact_coefficients(frags, a, float(tau))
                pt = fhl.ScanPoint(float(tau), res, fhl.unit(c_ex), fhl.aligned_distance(res.c_rec, c_ex),
                                   data.step_counts)
                rows.append(_fhl_row(pt, ns, seed, realization=r))
            plateaus.append(rows[-len(grid)]["lambda1"])
        bound = fhl.noise_threshold(rows[-1]["n_con"], len(a), ns) if not math.isinf(ns) else None
        summary["plateau"][str(ns)] = dict(mean_lambda1=float(np.mean(plateaus)), bound=bound)
    block, frags = unitaries[float(grid[0])]
    spec = constraint_spec(cfg, n_shots=shots[-1])
    res = fhl.reconstruct(fhl.build_constraint_matrix(block, a, spec, float(grid[0])).matrix)
    coefs = _coef_rows(a, res.c_rec, fhl.unit(fhl.exact_coefficients(frags, a, float(grid[0]))))
    return ScenarioResult(["realization"] + FHL_COLUMNS, rows, FHL_COEF_COLUMNS, coefs, summary)


def run_adaptive_errors(cfg: dict) -> ScenarioResult:
    p = xxz_params(cfg)
    alpha = _get(cfg, "model.alpha")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (p.n_qubits - 1,))
    e = ErrorInjection(ErrorInjection.alpha_deviation(p.n_qubits, alpha))
    builder = xxz_builder(p, e)
    grid = tau_grid(cfg)
    spec = constraint_spec(cfg)
    if spec.noise.is_exact:
        raise ConfigError("measurement.n_shots", "adaptive learning needs a finite shot budget")
    groups = candidate_groups(cfg)
    base = xxz_ansatz_for(cfg, p, _orders(cfg)[0])
    pool = fhl.pattern_batches(p.n_qubits, groups)
    max_it = _get(cfg, "ansatz.max_iterations", None)
    result = fhl.adaptive_extend(builder, base, pool, spec, grid, max_it)
    seed = _seed(cfg)
    rows = [_fhl_row(pt, spec.noise.n_shots, seed) for pt in result.final_scan.points]
    pt0 = result.final_scan.points[0]
    c_ex = result.ansatz.coefficients(omega0(builder(pt0.tau)[1]))
    c_rec = pt0.result.c_rec * float(np.dot(pt0.result.c_rec, c_ex))
    coefs = _coef_rows(result.ansatz, c_rec, c_ex)
    summary = dict(
        added=[s.added for s in result.audit if s.added],
        audit=[dict(ansatz_size=s.ansatz_size, added=s.added, plateau=s.plateau, threshold=s.threshold)
               for s in result.audit],
        final_ansatz_size=len(result.ansatz),
    )
    return ScenarioResult(FHL_COLUMNS, rows, FHL_COEF_COLUMNS, coefs, summary, result.unresolved)


def run_rotation_errors(cfg: dict) -> ScenarioResult:
    p = xxz_params(cfg)
    grid = tau_grid(cfg)
    spec = constraint_spec(cfg)
    deltas = _numbers(cfg, "model.rotation_delta")
    if any(d < 0 for d in deltas):
        raise ConfigError("model.rotation_delta", "rotation error strengths must be nonnegative")
    offset_seed = int(_number(cfg, "model.offset_seed", 0, integer=True))
    target_patterns = _patterns(cfg, "ansatz.target_patterns", ["X", "XX", "YY", "ZZ"])
    a = AnsatzSet.from_patterns(p.n_qubits, target_patterns)
    target = a.coefficients(p.hamiltonian())
    seed = _seed(cfg)
    rows, summary = [], {"tau_opt": {}}
    for d in deltas:
        e = ErrorInjection(rotation_offsets=ErrorInjection.draw_rotation_offsets(p.n_qubits, d, offset_seed))
        try:
            out = fhl.optimal_tau(xxz_builder(p, e), target, a, spec, grid)
            summary["tau_opt"][str(d)] = out.tau_opt
        except fhl.NoInteriorMinimumError as exc:
            out = exc.curve
            summary["tau_opt"][str(d)] = None
            log.warning("delta_theta=%g: %s", d, exc)
        for t, dist, lam in zip(out.taus, out.distances, out.lambda1):
            rows.append(dict(delta_theta=d, tau=t, lambda1=lam, lambda1_normalized=lam / math.sqrt(spec.n_con(t)),
                             spectral_gap=math.nan, param_distance=dist, alpha=math.nan, n_con=spec.n_con(t),
                             n_ansatz=len(a), n_shots=spec.noise.n_shots, seed=seed))
    return ScenarioResult(["delta_theta"] + FHL_COLUMNS, rows, None, None, summary)


def run_schwinger(cfg: dict) -> ScenarioResult:
    n = int(_number(cfg, "model.n_qubits", positive=True, integer=True))
    p = SchwingerParams(n, _number(cfg, "model.J"), _number(cfg, "model.w"), _number(cfg, "model.m"))
    order = _orders(cfg)[0]
    if order not in (0, 1):
        raise ConfigError("ansatz.order", "Schwinger ansatz is available at order 0 or 1")
    a = schwinger_ansatz(n, order)
    builder = schwinger_builder(p)
    grid = tau_grid(cfg)
    spec = constraint_spec(cfg)
    cons = schwinger_conserved(a)
    seed = _seed(cfg)
    rows = []
    coef_tau = _number(cfg, "output.coefficient_tau", float(grid[0]), positive=True)
    coefs, summary = None, {}
    for tau in list(grid) + ([coef_tau] if coef_tau not in grid else []):
        pt = fhl.scan_point(builder, a, spec, float(tau), cons, exact_order=order)
        block, frags = builder(float(tau))
        scaled = schwinger_scaled(block, pt.result.c_rec, a, float(tau), spec.noise)
        alpha = float(np.dot(scaled, pt.result.c_rec))
        if tau in grid:
            rows.append(_fhl_row(pt, spec.noise.n_shots, seed, alpha))
        if float(tau) == coef_tau:
            exact = a.coefficients(magnus_truncation(frags, float(tau), order))
            coefs = _coef_rows(a, scaled, exact)
            pairs, zz = schwinger_zz_indices(a)
            summary["zz_couplings"] = {f"Z{i + 1}Z{j + 1}": float(scaled[k]) for (i, j), k in zip(pairs, zz)}
    summary["coefficient_tau"] = coef_tau
    return ScenarioResult(FHL_COLUMNS, rows, FHL_COEF_COLUMNS, coefs, summary)


def run_cluster_gate_design(cfg: dict) -> ScenarioResult:
    n = int(_number(cfg, "model.n_qubits", positive=True, integer=True))
    J = _number(cfg, "model.J")
    jb0 = _number(cfg, "model.J_b0")
    schedule = tau_grid(cfg)[::-1]
    spec = constraint_spec(cfg)
    if spec.noise.is_exact:
        raise ConfigError("measurement.n_shots", "gate design needs a finite shot budget for its noise floor")
    budget = int(_number(cfg, "optimizer.budget", 80, positive=True, integer=True))
    a1 = cluster_ansatz(n, (1,))
    a0 = cluster_ansatz(n, (0,))
    result = fhl.gate_design_loop(lambda jb: cluster_builder(ClusterParams(n, J, jb)), J, jb0, a1, a0, spec,
                                  list(schedule), budget)
    rows = [dict(tau=s.tau, j_b=s.j_b, delta_j=s.delta_j, lambda1=s.lambda1,
                 lambda1_normalized=s.lambda1_normalized, c0_norm=s.c0_norm, threshold=result.threshold)
            for s in result.audit]
    tau = float(schedule[-1])
    block, _ = cluster_builder(ClusterParams(n, J, result.j_b))(tau)
    m = fhl.build_constraint_matrix(block, a1, spec, tau).matrix
    c = cluster_first_order(block, m, a1, tau, spec.noise)
    target = a1.coefficients(cluster_target(n, J)) * tau
    coefs = _coef_rows(a1, c, target)
    summary = dict(j_b=result.j_b, converged=result.converged, n_evaluations=result.n_evaluations,
                   threshold=result.threshold)
    cols = ["tau", "j_b", "delta_j", "lambda1", "lambda1_normalized", "c0_norm", "threshold"]
    return ScenarioResult(cols, rows, FHL_COEF_COLUMNS, coefs, summary, not result.converged)


def lindblad_ansatz_for(jumps, hamiltonian: AnsatzSet, mode: str = "diagonal") -> fll.LindbladAnsatz:
    """Hamiltonian terms plus one dissipator per jump, labelled ``L:<string>`` (``L:SM<site>`` for lowering)."""
    names = ["L:" + (f"SM{op.support[0] + 1}" if len(op) > 1 else op.strings()[0].label) for op, _ in jumps]
    return fll.LindbladAnsatz(tuple(hamiltonian.terms), tuple((nm, op) for nm, (op, _) in zip(names, jumps)), mode)


def run_fll_xxz(cfg: dict) -> ScenarioResult:
    _check_fll(cfg)
    n = int(_number(cfg, "model.n_qubits"))
    p = XXZParams.uniform(n, *(_number(cfg, f"model.{k}") for k in ("jx", "jy", "jz", "bx")))
    rates = [_number(cfg, f"model.{k}") for k in ("gamma_minus", "gamma_zz", "gamma_xxx")]
    jumps = xxz_jump_set(n, *rates)
    mode = _get(cfg, "ansatz.dissipator_mode", "diagonal")
    if mode not in fll.DISSIPATOR_MODES:
        raise ConfigError("ansatz.dissipator_mode", f"must be one of {fll.DISSIPATOR_MODES}")
    ham = xxz_ansatz(n, 0)
    full = lindblad_ansatz_for(jumps, ham, mode)
    grid = tau_grid(cfg)
    n_states = int(_number(cfg, "measurement.n_initial_states", positive=True, integer=True))
    total = _number(cfg, "measurement.total_time", positive=True)
    noise = noise_model(cfg)
    state_seed = int(_number(cfg, "measurement.state_seed", _seed(cfg), integer=True))
    builder = xxz_lindblad_builder(p, jumps)
    factory = lambda tau: fll.single_site_constraints(n, n_states, max(1, round(total / tau)), state_seed)
    seed = _seed(cfg)
    rows, summary = [], {}
    coefs = None
    n_gates = len(builder(float(grid[0])))
    for name, ans in (("full", full), ("hamiltonian_only", full.without_dissipators())):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            scan = fll.delta_tau_scan(builder, ans, factory, grid, noise)
        for w in caught:
            log.warning("%s ansatz: %s", name, w.message)
        for pt in scan.points:
            bound = math.nan
            if not noise.is_exact:
                bound = fll.ll_noise_bound(pt.n_con, ans.n_unknowns, noise.n_shots, pt.n_steps, pt.tau,
                                           float(np.linalg.norm(pt.result.coefficients)))
            rows.append(dict(ansatz=name, tau=pt.tau, delta=pt.result.delta, delta_bound=bound, n_con=pt.n_con,
                             n_unknowns=ans.n_unknowns, n_shots=noise.n_shots, seed=seed))
        summary[name] = dict(slope=scan.slope(), plateau=scan.plateau())
        if name == "full":
            r = scan.points[0].result
            _, frags = xxz_builder(p)(float(grid[0]))
            c_h = ham.coefficients(omega0(frags))
            rates_ex = np.array([rate * n_gates for _, rate in jumps])
            coefs = [dict(label=l, kind="H", c_rec=float(a), c_exact=float(b))
                     for l, a, b in zip(ham.labels, r.c_h, c_h)]
            if mode == "diagonal":
                coefs += [dict(label=l, kind="D", c_rec=float(a), c_exact=float(b))
                          for l, a, b in zip(full.dissipator_labels(), r.c_d, rates_ex)]
            else:
                k = len(jumps)
                ex = np.concatenate([rates_ex, np.zeros(k * k - k)])
                coefs += [dict(label=l, kind="D", c_rec=float(a), c_exact=float(b))
                          for l, a, b in zip(full.dissipator_labels(), r.c_d, ex)]
    return ScenarioResult(["ansatz"] + FLL_COLUMNS, rows, FLL_COEF_COLUMNS, coefs, summary)


def run_rmt_chaos(cfg: dict) -> ScenarioResult:
    p = xxz_params(cfg)
    a = xxz_ansatz_for(cfg, p, _orders(cfg)[0])
    grid = tau_grid(cfg)
    spec = constraint_spec(cfg)
    n_range = [int(v) for v in _numbers(cfg, "rmt.n_range", positive=True)]
    n_haar = int(_number(cfg, "rmt.n_haar_samples", 10_000, positive=True, integer=True))
    base = rmt.rmt_baseline_mc(a, spec.states(p.n_qubits), n_haar, master_seed=_seed(cfg))
    tails, curves = rmt.tail_mean_curve(xxz_builder(p), a, spec, grid, n_range, base)
    rows = [r for c in curves for r in c.rows()]
    summary = dict(lambda_rmt=base.lambda_rmt, mc_stderr=base.mc_stderr,
                   tail_mean_delta_lambda={f"{t:.6g}": float(v) for t, v in zip(grid, tails)})
    return ScenarioResult(RMT_COLUMNS, rows, None, None, summary)


def run_scale_reconstruction(cfg: dict) -> ScenarioResult:
    p = xxz_params(cfg)
    order = _orders(cfg)[0]
    a = xxz_ansatz_for(cfg, p, order)
    grid = tau_grid(cfg)
    spec = constraint_spec(cfg)
    builder = xxz_builder(p)
    total = _number(cfg, "scale.total_time", 5.0, positive=True)
    site = int(_number(cfg, "scale.site", 0, integer=True))
    letter = _get(cfg, "scale.observable", "Z")
    if letter not in ("X", "Y", "Z") or not 0 <= site < p.n_qubits:
        raise ConfigError("scale", "observable must be X, Y or Z on a site inside the chain")
    obs = PauliOperator.from_sites(p.n_qubits, {site: letter})
    q_order = int(_number(cfg, "scale.quadrature_order", 4, integer=True))
    seed = _seed(cfg)
    rows, coefs = [], None
    for tau in grid:
        pt = fhl.scan_point(builder, a, spec, float(tau))
        block, frags = builder(float(tau))
        probe = fhl.ScaleProbe(neel_state(p.n_qubits), obs, max(1, round(total / tau)))
        try:
            alpha = fhl.reconstruct_scale(block, pt.result.c_rec, a, probe, float(tau), spec.noise, q_order)
        except fhl.InsensitiveProbeError as exc:
            log.warning("tau=%g: %s", tau, exc)
            alpha = math.nan
        try:
            c_log = a.coefficients(floquet_via_log(block_unitary(block, p.n_qubits), float(tau)))
            ref = float(np.linalg.norm(c_log))
        except BranchAmbiguityError:
            ref = math.nan
        rows.append(_fhl_row(pt, spec.noise.n_shots, seed, alpha, alpha_reference=ref))
        if coefs is None:
            coefs = _coef_rows(a, alpha * pt.result.c_rec, fhl.exact_coefficients(frags, a, float(tau)))
    return ScenarioResult(FHL_COLUMNS + ["alpha_reference"], rows, FHL_COEF_COLUMNS, coefs, {})


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    runner: Callable[[dict], ScenarioResult]


SCENARIOS: dict[str, Scenario] = {s.name: s for s in (
    Scenario("xxz_scaling", "order-by-order scaling of lambda1 and coefficient distance on the XXZ chain",
             run_xxz_scaling),
    Scenario("xxz_disorder", "finite-shot plateau of lambda1 over shot budgets and noise realizations",
             run_xxz_disorder),
    Scenario("adaptive_errors", "adaptive ansatz growth that uncovers injected two-body control errors",
             run_adaptive_errors),
    Scenario("rotation_errors", "optimal Trotter step under single-qubit rotation errors", run_rotation_errors),
    Scenario("schwinger", "lattice Schwinger model verification with conserved directions removed",
             run_schwinger),
    Scenario("cluster_gate_design", "tuning a backward coupling to engineer the cluster-state Hamiltonian",
             run_cluster_gate_design),
    Scenario("fll_xxz", "Floquet Liouvillian learning for the dissipative XXZ circuit", run_fll_xxz),
    Scenario("rmt_chaos", "deviation of the constraint matrix from its Haar average across the threshold",
             run_rmt_chaos),
    Scenario("scale_reconstruction", "overall energy scale from a single observable trace", run_scale_reconstruction),
)}


def template_text(name: str) -> str:
    return resources.files("floquetlearn").joinpath("configs", f"{name}.yaml").read_text()


def template(name: str) -> dict:
    return yaml.safe_load(template_text(name))


TOP_KEYS = {"scenario", "master_seed", "output_dir", "model", "tau_grid", "ansatz", "measurement",
            "output", "optimizer", "rmt", "scale"}


def validate(cfg: Any) -> dict:
    """Check structure and every field a scenario reads; returns a deep copy."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    cfg = copy.deepcopy(cfg)
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], f"unknown top-level field; allowed: {sorted(TOP_KEYS)}")
    name = _get(cfg, "scenario")
    if name not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {name!r}; run list-scenarios for the options")
    if not isinstance(_get(cfg, "output_dir"), str):
        raise ConfigError("output_dir", "expected a path string")
    _number(cfg, "master_seed", 0, integer=True)
    tau_grid(cfg)
    for section in ("model", "measurement"):
        if not isinstance(_get(cfg, section), dict):
            raise ConfigError(section, "expected a mapping")
    _VALIDATORS[name](cfg)
    return cfg


def _check_xxz(cfg):
    p = xxz_params(cfg)
    constraint_spec(cfg)
    xxz_ansatz_for(cfg, p, _orders(cfg)[0])
    _orders(cfg)


def _check_fll(cfg):
    n = int(_number(cfg, "model.n_qubits", positive=True, integer=True))
    if not 3 <= n <= fll.MAX_FLL_QUBITS:
        raise ConfigError("model.n_qubits", f"must be between 3 and {fll.MAX_FLL_QUBITS}, got {n}")
    for k in ("jx", "jy", "jz", "bx"):
        _number(cfg, f"model.{k}")
    for k in ("gamma_minus", "gamma_zz", "gamma_xxx"):
        if _number(cfg, f"model.{k}") < 0:
            raise ConfigError(f"model.{k}", "rates must be nonnegative")
    _number(cfg, "measurement.n_initial_states", positive=True, integer=True)
    _number(cfg, "measurement.total_time", positive=True)
    noise_model(cfg)


def _check_fhl_common(cfg):
    constraint_spec(cfg)
    _orders(cfg)


_VALIDATORS: dict[str, Callable[[dict], None]] = {
    "xxz_scaling": _check_xxz,
    "xxz_disorder": lambda c: (_check_xxz(c), _numbers(c, "measurement.n_shots_list", positive=True, allow_inf=True)),
    "adaptive_errors": lambda c: (_check_xxz(c), _get(c, "model.alpha"), candidate_groups(c)),
    "rotation_errors": lambda c: (xxz_params(c), constraint_spec(c), _numbers(c, "model.rotation_delta"),
                                  _patterns(c, "ansatz.target_patterns", ["X", "XX", "YY", "ZZ"])),
    "schwinger": lambda c: (_check_fhl_common(c), _model(
        SchwingerParams, int(_number(c, "model.n_qubits", positive=True, integer=True)),
        _number(c, "model.J"), _number(c, "model.w"), _number(c, "model.m"))),
    "cluster_gate_design": lambda c: (_check_fhl_common(c), _model(
        ClusterParams, int(_number(c, "model.n_qubits", positive=True, integer=True)),
        _number(c, "model.J"), _number(c, "model.J_b0"))),
    "fll_xxz": _check_fll,
    "rmt_chaos": lambda c: (_check_xxz(c), _numbers(c, "rmt.n_range", positive=True)),
    "scale_reconstruction": _check_xxz,
}

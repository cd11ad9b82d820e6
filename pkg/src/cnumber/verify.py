"""Budgeted numerical checks of the c-number substitution inequalities.

Every check returns a :class:`VerificationReport` whose ``raw_gap`` is
positive when the inequality (or trend) holds strictly; the verdict is
PASS iff ``raw_gap >= -budget.total``.  Budgets are computed from the run
(quadrature rule comparisons, resolution-of-identity residual, Boltzmann
mass at the zero-mode cap, finite-difference disagreement), never tuned.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .coherent import (QuadratureGrid, coherent_tail, disc_grid, identity_residual,
                       zmax_radius_sq)
from .ensemble import (FullSystem, SubstitutedSystem, density_upper_estimate, direct_zero_mode,
                       full_system, integrate, p_max, support_edge, weight)
from .fock import FockBasis, SizingError, build_basis
from .model import EnsembleParams, ModelSpec, make_model

PASS, FAIL, INCOMPLETE = "PASS", "FAIL", "INCOMPLETE"


@dataclass(frozen=True)
class ErrorBudget:
    quad_residual: float = 0.0
    coherent_tail: float = 0.0
    cap_tail: float = 0.0
    fd_error: float = 0.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v >= 0:
                raise ValueError(f"budget component {k}={v} must be non-negative")

    @property
    def total(self) -> float:
        return self.quad_residual + self.coherent_tail + self.cap_tail + self.fd_error

    def __add__(self, other: ErrorBudget) -> ErrorBudget:
        return ErrorBudget(*(a + b for a, b in zip(astuple_(self), astuple_(other))))

    def scaled(self, c: float) -> ErrorBudget:
        return ErrorBudget(*(c * a for a in astuple_(self)))

    def to_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


def astuple_(b: ErrorBudget) -> tuple[float, ...]:
    return (b.quad_residual, b.coherent_tail, b.cap_tail, b.fd_error)


@dataclass(frozen=True)
class VerificationReport:
    check: str
    inputs_hash: str
    raw_gap: float
    budget: ErrorBudget
    verdict: str
    point: dict = field(default_factory=dict)
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"check": self.check, "inputs_hash": self.inputs_hash, "raw_gap": self.raw_gap,
                "budget": self.budget.to_dict(), "verdict": self.verdict,
                "point": self.point, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> VerificationReport:
        b = {k: v for k, v in d["budget"].items() if k != "total"}
        return cls(d["check"], d["inputs_hash"], d["raw_gap"], ErrorBudget(**b), d["verdict"],
                   d.get("point", {}), d.get("payload", {}))

    @property
    def passed(self) -> bool:
        return self.verdict == PASS


def verdict_for(raw_gap: float, budget: ErrorBudget) -> str:
    return PASS if raw_gap >= -budget.total else FAIL


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.complexfloating):
        return [float(x.real), float(x.imag)]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    return x


def inputs_hash(*parts) -> str:
    blob = json.dumps(_jsonable(list(parts)), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- model instances and numerics ---------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelInstance:
    """A model together with its truncated basis."""

    spec: ModelSpec
    basis: FockBasis

    @property
    def cap0(self) -> int:
        return self.basis.caps[self.basis.position(self.spec.zero_mode)]

    @property
    def volume(self) -> float:
        return self.spec.volume

    def key(self) -> dict:
        return {"model": self.spec.key(), "caps": list(self.basis.caps)}


def instance(spec: ModelSpec, caps: Sequence[int], dim_limit: int = 20000) -> ModelInstance:
    return ModelInstance(spec, build_basis(spec.modes, caps, dim_limit))


def default_instance() -> ModelInstance:
    from .model import default_model
    return instance(default_model(), (10, 24, 10))


def scaled_caps(caps: Sequence[int], spec: ModelSpec, v0: float, scaling: str = "linear"
                ) -> list[int]:
    """Truncation caps for a family member of volume spec.volume.

    ``linear`` scales every cap by V/V0 (ceil), ``zero`` scales only the
    zero-mode cap, ``fixed`` keeps the caps.
    """
    ratio = spec.volume / v0
    if scaling == "linear":
        return [int(math.ceil(c * ratio - 1e-9)) for c in caps]
    if scaling == "zero":
        return [int(math.ceil(c * ratio - 1e-9)) if md.is_zero else int(c)
                for c, md in zip(caps, spec.modes)]
    if scaling == "fixed":
        return [int(c) for c in caps]
    raise ValueError(f"unknown cap scaling {scaling!r}")


def family_instances(specs: Sequence[ModelSpec], caps: Sequence[int], scaling: str = "linear",
                     dim_limit: int = 20000) -> list[ModelInstance]:
    specs = sorted(specs, key=lambda s: s.volume)
    v0 = specs[0].volume
    return [instance(s, scaled_caps(caps, s, v0, scaling), dim_limit) for s in specs]


def volume_family(lengths: Sequence[float], caps: Sequence[int], labels=((-1,), (0,), (1,)),
                  g: float = 1.0, sigma: float = 0.5, scaling: str = "linear",
                  dim_limit: int = 20000, nu=None, phi=None) -> list[ModelInstance]:
    """Models at each box length with caps grown along the family."""
    specs = [make_model(float(L), labels, g, sigma, phi, nu=nu) for L in lengths]
    return family_instances(specs, caps, scaling, dim_limit)


@dataclass(frozen=True)
class Numerics:
    n_radial: int = 48
    n_angular: int = 32
    radius_sq: float | None = None
    fd_step: float | None = None
    n_scan: int = 241
    multimode_radial: int = 32
    multimode_angular: int = 16
    zmax_sigmas: float = 12.0
    log_drop: float = 23.0
    quad_estimate: bool = True

    def radius_sq_for(self, model: ModelInstance, params: EnsembleParams, mode=None) -> float:
        if self.radius_sq is not None and mode is None:
            return float(self.radius_sq)
        mode = model.spec.zero_mode if mode is None else mode
        cap = model.basis.caps[model.basis.position(mode)]
        edge = support_edge(model.spec, params, self.log_drop, mode=mode)
        return zmax_radius_sq(cap, edge, self.zmax_sigmas)

    def grid(self, model: ModelInstance, params: EnsembleParams) -> QuadratureGrid:
        # the trapezoid rule resolves exp(i k theta) exactly only for |k| < n_angular;
        # coherent projectors up to the cap carry harmonics up to k = cap
        n_angular = max(self.n_angular, model.cap0 + 2)
        return disc_grid(self.radius_sq_for(model, params), self.n_radial, n_angular)


def _point(model: ModelInstance, params: EnsembleParams) -> dict:
    return {"beta": params.beta, "mu": params.mu, "lam": params.lam, "V": model.volume}


@dataclass
class _Evaluated:
    """Integral plus a quadrature-error estimate from a refined rule."""

    log_value: float
    quad_error: float
    boundary_fraction: float
    coherent_tail: float = 0.0


def _substituted(model: ModelInstance, params: EnsembleParams, grids, variant: str,
                 numerics: Numerics, plan_modes=None) -> _Evaluated:
    system = SubstitutedSystem(model.spec, params, model.basis, variant, plan_modes)
    main = integrate(system, grids)
    err = 0.0
    if numerics.quad_estimate:
        # product grids are compared with a cheaper coarse rule, which
        # overstates the error of the base rule
        other = ([grids.refined()] if isinstance(grids, QuadratureGrid)
                 else [g.coarsened() for g in grids])
        alt = integrate(system, other, check_coverage=False)
        err = abs(alt.value.log_value - main.value.log_value)
    return _Evaluated(main.value.log_value, err + main.boundary_fraction, main.boundary_fraction,
                      _weighted_tail(system, main))


def _weighted_tail(system: SubstitutedSystem, main) -> float:
    """-log(1 - t), t the integrand-weighted coherent mass above the caps.

    The full system is truncated at the substituted modes' caps while the
    substituted integrals are not; t measures how much of the integrand sits
    on coherent states the truncated space cannot hold.
    """
    ns = main.nodes
    keep = np.ones(len(ns.weights))
    for s, cap in enumerate(system.caps):
        keep = keep * (1.0 - coherent_tail(ns.nodes[:, s], cap))
    lt = main.log_traces
    w = ns.weights * np.exp(lt - lt.max())
    t = float(np.sum(w * (1.0 - keep)) / np.sum(w))
    return float(-np.log1p(-min(t, 1.0 - 1e-300)))


def _ires(model: ModelInstance, grid: QuadratureGrid) -> float:
    return identity_residual(model.cap0, grid)


# -- checks -------------------------------------------------------------------

def check_sandwich(model: ModelInstance, params: EnsembleParams,
                   numerics: Numerics = Numerics(), system: FullSystem | None = None
                   ) -> VerificationReport:
    """log Xi' <= log Xi <= log Xi''."""
    grid = numerics.grid(model, params)
    system = system or full_system(model.spec, params, model.basis)
    lo = _substituted(model, params, grid, "lower", numerics)
    up = _substituted(model, params, grid, "upper", numerics)
    log_xi = system.log_xi
    gap_lower = log_xi - lo.log_value
    gap_upper = up.log_value - log_xi
    budget = ErrorBudget(quad_residual=_ires(model, grid) + lo.quad_error + up.quad_error,
                         coherent_tail=lo.coherent_tail + up.coherent_tail,
                         cap_tail=system.cap_tail())
    raw = min(gap_lower, gap_upper)
    bV = params.beta * model.volume
    payload = {
        "log_xi": log_xi, "log_xi_lower": lo.log_value, "log_xi_upper": up.log_value,
        "gap_lower": gap_lower, "gap_upper": gap_upper,
        "upper_minus_lower": up.log_value - lo.log_value,
        "p": log_xi / bV, "p_lower": lo.log_value / bV, "p_upper": up.log_value / bV,
        "radius_sq": grid.radius_sq,
    }
    return VerificationReport("sandwich", inputs_hash("sandwich", model.key(), params, numerics),
                              raw, budget, verdict_for(raw, budget), _point(model, params), payload)


def check_shift(model: ModelInstance, params: EnsembleParams,
                numerics: Numerics = Numerics()) -> VerificationReport:
    """log Xi'' <= log Xi'(mu + 2 phi/V) + beta (|mu| + phi/V)."""
    spec = model.spec
    grid = numerics.grid(model, params)
    shift = 2 * spec.phi / spec.volume
    up = _substituted(model, params, grid, "upper", numerics)
    lo_shift = _substituted(model, params.shifted(shift), grid, "lower", numerics)
    rhs = lo_shift.log_value + params.beta * (abs(params.mu) + spec.phi / spec.volume)
    raw = rhs - up.log_value
    budget = ErrorBudget(quad_residual=up.quad_error + lo_shift.quad_error)
    payload = {"log_xi_upper": up.log_value, "log_xi_lower_shifted": lo_shift.log_value,
               "mu_shifted": params.mu + shift, "log_rhs": rhs}
    return VerificationReport("shift", inputs_hash("shift", model.key(), params, numerics),
                              raw, budget, verdict_for(raw, budget), _point(model, params), payload)


def check_maxz(model: ModelInstance, params: EnsembleParams, numerics: Numerics = Numerics(),
               system: FullSystem | None = None) -> VerificationReport:
    """log Xi >= max_z log Tr exp(-beta H'(z))."""
    grid = numerics.grid(model, params)
    system = system or full_system(model.spec, params, model.basis)
    peak = p_max(model.spec, params, model.basis, "lower", radius=grid.radius,
                 n_scan=numerics.n_scan)
    raw = system.log_xi - peak.value.log_value
    budget = ErrorBudget(cap_tail=system.cap_tail())
    payload = {"log_xi": system.log_xi, "log_peak": peak.value.log_value,
               "p_max": peak.value.pressure, "z_max": peak.z_max}
    return VerificationReport("maxz", inputs_hash("maxz", model.key(), params, numerics),
                              raw, budget, verdict_for(raw, budget), _point(model, params),
                              _jsonable(payload))


def check_peak(model: ModelInstance, params: EnsembleParams,
               numerics: Numerics = Numerics()) -> VerificationReport:
    """log Xi'' <= log(2 [V rho'' + 1]) + max_z log Tr exp(-beta H''(z))."""
    spec = model.spec
    grid = numerics.grid(model, params)
    system = SubstitutedSystem(spec, params, model.basis, "upper")
    main = integrate(system, grid)
    up = _substituted(model, params, grid, "upper", numerics)
    dens = density_upper_estimate(spec, params, model.basis, grid, numerics.fd_step)
    peak = p_max(spec, params, model.basis, "upper", radius=grid.radius, n_scan=numerics.n_scan)
    occ = spec.volume * dens.value + 1.0
    bound = math.log(2 * occ) + peak.value.log_value
    raw = bound - up.log_value

    # the two pieces of the split at the optimizing radius xi
    lt, ns = main.log_traces, main.nodes
    t = np.abs(ns.nodes[:, 0]) ** 2
    xi_opt = math.sqrt(occ * math.exp(up.log_value - peak.value.log_value))
    inside = math.log(xi_opt) + peak.value.log_value
    mask = t >= xi_opt
    outside = (float(np.log(np.sum(ns.weights[mask] * t[mask] * np.exp(lt[mask] - lt.max()))))
               + float(lt.max()) - math.log(xi_opt)) if np.any(mask) else -math.inf
    split_rhs = np.logaddexp(inside, outside)

    budget = ErrorBudget(quad_residual=up.quad_error,
                         fd_error=spec.volume * dens.fd_error / occ)
    payload = {"log_xi_upper": up.log_value, "rho_upper": dens.value,
               "log_peak_upper": peak.value.log_value, "z_max_upper": peak.z_max,
               "log_bound": bound, "split_xi": xi_opt, "split_log_inside": inside,
               "split_log_outside": float(outside), "split_log_rhs": float(split_rhs),
               "split_holds": bool(split_rhs >= up.log_value - up.quad_error)}
    return VerificationReport("peak", inputs_hash("peak", model.key(), params, numerics),
                              raw, budget, verdict_for(raw, budget), _point(model, params),
                              _jsonable(payload))


def pressures(model: ModelInstance, params: EnsembleParams,
              numerics: Numerics = Numerics()) -> dict:
    """The four finite-volume pressures p, p', p'', p^max and their budget."""
    grid = numerics.grid(model, params)
    system = full_system(model.spec, params, model.basis)
    lo = _substituted(model, params, grid, "lower", numerics)
    up = _substituted(model, params, grid, "upper", numerics)
    peak = p_max(model.spec, params, model.basis, "lower", radius=grid.radius,
                 n_scan=numerics.n_scan)
    bV = params.beta * model.volume
    budget = ErrorBudget(quad_residual=lo.quad_error + up.quad_error + _ires(model, grid),
                         coherent_tail=lo.coherent_tail + up.coherent_tail,
                         cap_tail=system.cap_tail()).scaled(1.0 / bV)
    return {"p": system.log_xi / bV, "p_lower": lo.log_value / bV,
            "p_upper": up.log_value / bV, "p_max": peak.value.log_value / bV,
            "z_max": peak.z_max, "budget": budget}


def free_log_partition(spec: ModelSpec, params: EnsembleParams) -> dict:
    """Closed-form log Xi, log Xi', log Xi'' and max-z log for nu = 0.

    Untruncated Fock space.  With kappa = e_0 - mu > 0 the zero-mode field
    term is removed by a displacement, giving an extra beta V lam^2 / kappa.
    """
    if any(abs(v) > 0 for v in spec.nu.values()):
        raise ValueError("closed form needs a non-interacting model (nu = 0)")
    b = params.beta
    rest = 0.0
    kappa = None
    for md in spec.modes:
        e = spec.energy(md) - params.mu
        if e <= 0:
            raise ValueError(f"mode {md.label} has e - mu = {e} <= 0: no grand canonical state")
        if md.is_zero:
            kappa = e
        else:
            rest += -math.log1p(-math.exp(-b * e))
    if kappa is None:
        raise ValueError("model has no zero mode")
    field_term = b * spec.volume * abs(params.lam) ** 2 / kappa
    return {"log_xi": rest - math.log1p(-math.exp(-b * kappa)) + field_term,
            "log_xi_lower": rest - math.log(b * kappa) + field_term,
            "log_xi_upper": rest - math.log(b * kappa) + b * kappa + field_term,
            "log_peak": rest + field_term}


def free_pressures(spec: ModelSpec, params: EnsembleParams) -> dict:
    logs = free_log_partition(spec, params)
    bV = params.beta * spec.volume
    return {"p": logs["log_xi"] / bV, "p_lower": logs["log_xi_lower"] / bV,
            "p_upper": logs["log_xi_upper"] / bV, "p_max": logs["log_peak"] / bV,
            "z_max": -math.sqrt(spec.volume) * params.lam / (spec.energy(spec.zero_mode) - params.mu),
            "budget": ErrorBudget()}


def check_pressure_collapse(family: Sequence[ModelInstance], params: EnsembleParams,
                            numerics: Numerics = Numerics(), ratio_limit: float = 0.25,
                            closed_form: bool = False) -> VerificationReport:
    """Spread of the four pressures shrinks along the volume family.

    ``closed_form`` evaluates a non-interacting family exactly instead of
    by diagonalization and quadrature.
    """
    if len(family) < 3:
        raise ValueError("pressure collapse needs at least 3 volumes")
    family = sorted(family, key=lambda m: m.volume)
    rows, spreads = [], []
    budget = ErrorBudget()
    for m in family:
        pr = free_pressures(m.spec, params) if closed_form else pressures(m, params, numerics)
        vals = [pr["p"], pr["p_lower"], pr["p_upper"], pr["p_max"]]
        s = max(vals) - min(vals)
        spreads.append(s)
        budget = budget + pr["budget"]
        rows.append({"V": m.volume, "caps": list(m.basis.caps), "p": pr["p"],
                     "p_lower": pr["p_lower"], "p_upper": pr["p_upper"], "p_max": pr["p_max"],
                     "spread": s})
    mono = min(a - b for a, b in zip(spreads, spreads[1:]))
    ratio = spreads[-1] / spreads[0] if spreads[0] > 0 else 0.0
    raw = min(mono, (ratio_limit - ratio) * spreads[0])
    payload = {"family": rows, "spread_ratio": ratio,
               "volume_ratio": family[-1].volume / family[0].volume,
               "monotone_margin": mono}
    payload["closed_form"] = closed_form
    h = inputs_hash("collapse", [m.key() for m in family], params, numerics, closed_form)
    return VerificationReport("pressure_collapse", h, raw, budget, verdict_for(raw, budget),
                              {"beta": params.beta, "mu": params.mu, "lam": params.lam,
                               "V": family[-1].volume}, _jsonable(payload))


def check_condensate(family: Sequence[ModelInstance], params: EnsembleParams,
                     lams: Sequence[float], numerics: Numerics = Numerics()
                     ) -> VerificationReport:
    """Finite-volume surrogates of <n0>/V = |<a0>|^2/V = |z_max|^2/V."""
    lams = sorted(float(x) for x in lams)
    if len(lams) < 4 or any(x <= 0 for x in lams):
        raise ValueError("condensate check needs a grid of at least 4 positive lambda values")
    family = sorted(family, key=lambda m: m.volume)
    rows = []
    cs_margin = math.inf
    spreads = []
    budget = ErrorBudget()
    n0_last = []
    for m in family:
        worst = 0.0
        for lam in lams:
            p = EnsembleParams(params.beta, params.mu, lam)
            system = full_system(m.spec, p, m.basis)
            n0, a0 = direct_zero_mode(system)
            grid = numerics.grid(m, p)
            peak = p_max(m.spec, p, m.basis, "lower", radius=grid.radius, n_scan=numerics.n_scan)
            V = m.volume
            q = [n0 / V, abs(a0) ** 2 / V, abs(peak.z_max) ** 2 / V]
            spread = max(q) - min(q)
            worst = max(worst, spread)
            cs_margin = min(cs_margin, n0 - abs(a0) ** 2)
            tail = system.cap_tail()
            budget = budget + ErrorBudget(cap_tail=tail * max(1.0, m.cap0))
            rows.append({"V": V, "lam": lam, "n0": n0, "a0": a0, "z_max": peak.z_max,
                         "n0_per_V": q[0], "a0sq_per_V": q[1], "zmax_sq_per_V": q[2],
                         "spread": spread})
            if m is family[-1]:
                n0_last.append(n0)
        spreads.append(worst)
    mono_lam = min(b - a for a, b in zip(n0_last, n0_last[1:]))
    mono_vol = min(a - b for a, b in zip(spreads, spreads[1:])) if len(spreads) > 1 else 0.0
    raw = min(cs_margin, mono_lam, mono_vol)
    payload = {"rows": rows, "cs_margin": cs_margin, "n0_monotone_margin": mono_lam,
               "spread_by_volume": spreads, "spread_monotone_margin": mono_vol}
    h = inputs_hash("condensate", [m.key() for m in family], params, lams, numerics)
    return VerificationReport("condensate", h, raw, budget, verdict_for(raw, budget),
                              {"beta": params.beta, "mu": params.mu, "lam": lams[-1],
                               "V": family[-1].volume}, _jsonable(payload))


def check_concentration(family: Sequence[ModelInstance], params: EnsembleParams,
                        numerics: Numerics = Numerics()) -> VerificationReport:
    """W and W'' narrow in zeta = z/sqrt(V) along the family and share a centre."""
    if params.lam == 0.0:
        raise ValueError("concentration needs lam != 0: at lam = 0 the weight fills a disc")
    family = sorted(family, key=lambda m: m.volume)
    rows = []
    var_full, var_upper, agree = [], [], []
    budget = ErrorBudget()
    for m in family:
        grid = numerics.grid(m, params)
        system = full_system(m.spec, params, m.basis)
        wf = weight(m.spec, params, m.basis, grid, "full", system=system)
        wu = weight(m.spec, params, m.basis, grid, "upper")
        mf, vf = wf.scaled(m.volume)
        mu_, vu = wu.scaled(m.volume)
        var_full.append(vf)
        var_upper.append(vu)
        sd = math.sqrt(max(vf, vu, 0.0))
        agree.append(sd - abs(mf - mu_))
        # moment drift under a refined rule plus the normalization defect of W
        fine = grid.refined()
        drift = abs(wf.norm - 1.0)
        for src, (mean0, var0) in (("full", (mf, vf)), ("upper", (mu_, vu))):
            mean1, var1 = weight(m.spec, params, m.basis, fine, src, system=system).scaled(m.volume)
            drift += abs(mean1 - mean0) + abs(var1 - var0)
        budget = budget + ErrorBudget(quad_residual=drift, cap_tail=system.cap_tail())
        rows.append({"V": m.volume, "mean_full": mf, "mean_upper": mu_, "var_full": vf,
                     "var_upper": vu, "norm_full": wf.norm})
    mono = min(min(a - b for a, b in zip(v, v[1:])) for v in (var_full, var_upper))
    raw = min(mono, min(agree))
    payload = {"rows": rows, "variance_monotone_margin": mono, "mean_agreement_margin": agree}
    h = inputs_hash("concentration", [m.key() for m in family], params, numerics)
    return VerificationReport("concentration", h, raw, budget, verdict_for(raw, budget),
                              {"beta": params.beta, "mu": params.mu, "lam": params.lam,
                               "V": family[-1].volume}, _jsonable(payload))


def mode_grid(model: ModelInstance, params: EnsembleParams, mode,
              numerics: Numerics = Numerics()) -> QuadratureGrid:
    return disc_grid(numerics.radius_sq_for(model, params, mode), numerics.multimode_radial,
                     numerics.multimode_angular)


def check_multimode(model: ModelInstance, params: EnsembleParams, plan_modes: Sequence,
                    numerics: Numerics = Numerics(), tolerance: float = 0.0
                    ) -> VerificationReport:
    """Sandwich and shift-type bound when several modes are substituted at once."""
    plan_modes = tuple(plan_modes)
    m = len(plan_modes)
    if m > 2:
        raise SizingError(f"{m}-mode substitution needs a {2 * m}-dimensional quadrature")
    if m == 1:
        grids = [numerics.grid(model, params)]
    else:
        grids = [mode_grid(model, params, md, numerics) for md in plan_modes]
    spec = model.spec
    system = full_system(spec, params, model.basis)
    lo = _substituted(model, params, grids, "lower", numerics, plan_modes)
    up = _substituted(model, params, grids, "upper", numerics, plan_modes)
    shift = 2 * m * spec.phi / spec.volume
    lo_shift = _substituted(model, params.shifted(shift), grids, "lower", numerics, plan_modes)
    log_xi = system.log_xi
    gap_lower = log_xi - lo.log_value
    gap_upper = up.log_value - log_xi
    # secant of the convex log Xi' in mu: mean N' over [mu, mu + shift]
    mean_n = (lo_shift.log_value - lo.log_value) / (params.beta * shift) if shift > 0 else 0.0
    constant = params.beta * sum(abs(params.mu - spec.energy(md)) + spec.phi / spec.volume
                                 for md in plan_modes)
    bound = (2 * params.beta * m * spec.phi * mean_n / spec.volume + constant) * (1 + tolerance)
    diff = up.log_value - lo.log_value
    raw = min(gap_lower, gap_upper, bound - diff)
    budget = ErrorBudget(quad_residual=lo.quad_error + up.quad_error + lo_shift.quad_error,
                         coherent_tail=lo.coherent_tail + up.coherent_tail,
                         cap_tail=system.cap_tail())
    payload = {"modes": [list(md.label) for md in plan_modes], "log_xi": log_xi,
               "log_xi_lower": lo.log_value, "log_xi_upper": up.log_value,
               "gap_lower": gap_lower, "gap_upper": gap_upper, "upper_minus_lower": diff,
               "bound": bound, "mean_number": mean_n, "per_mode_gap": diff / m}
    h = inputs_hash("multimode", model.key(), params, [md.label for md in plan_modes], numerics)
    return VerificationReport("multimode", h, raw, budget, verdict_for(raw, budget),
                              _point(model, params), _jsonable(payload))


def chain_consistency(sandwich: VerificationReport, maxz: VerificationReport,
                      peak: VerificationReport) -> dict:
    """Cross-check of the sandwich, max-z and peak reports at one point.

    The provable link is log Xi <= log Xi'' <= log(2[V rho''+1]) + log max''.
    The stronger form maxz gap <= upper gap + log(2[V rho''+1]) compares the
    lower-symbol peak with the upper ensemble and is reported, not enforced.
    """
    budget = sandwich.budget.total + peak.budget.total + maxz.budget.total
    occ = math.log(2 * (peak.point["V"] * peak.payload["rho_upper"] + 1.0))
    provable = occ + peak.payload["log_peak_upper"] - sandwich.payload["log_xi"]
    literal = sandwich.payload["gap_upper"] + occ - maxz.raw_gap
    return {"provable_margin": provable, "literal_margin": literal, "budget": budget,
            "holds": provable >= -budget}

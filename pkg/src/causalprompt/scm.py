"""Exact checks of hallucination-risk theory on finite structural causal models.

Model: F (facts), S (spurious content), U_X and U_Y are independent with
finite priors; the observed context is ``X = phi(F, S, U_X)`` and the true
answer ``Y* = g(F, q, U_Y)`` for a fixed query ``q``. ``A(F)`` is the set of
admissible answers. A refinement ``tau`` maps X to R.

Everything is computed by enumerating the joint distribution. Risks use

    risk(W) = 1 - sum_w max_y P(W = w, Y* = y, y in A(F))

i.e. E[1 - max_y P(Y* = y, y in A(F) | W)].
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Hashable, Iterable, Literal, Mapping, Sequence

import numpy as np

from .errors import (
    AssumptionViolated,
    DomainTooLarge,
    EmptyShiftFamily,
    NotRecoverable,
    SupportMismatch,
    ValidationError,
    ZeroLength,
)

Value = Hashable
Which = Literal["X", "R", "F"]

PRIOR_TOL = 1e-12
CI_TOL = 1e-10
MAX_ATOMS = 10**7

_F, _S, _X, _Y = 0, 1, 2, 3


def _check_prior(name: str, prior: Mapping[Value, float]) -> dict[Value, float]:
    prior = {k: float(v) for k, v in prior.items()}
    if not prior:
        raise ValidationError(f"{name} prior is empty")
    if any(v < 0 for v in prior.values()):
        raise ValidationError(f"{name} prior has negative mass")
    total = math.fsum(prior.values())
    if abs(total - 1.0) > PRIOR_TOL:
        raise ValidationError(f"{name} prior sums to {total!r}, not 1")
    return prior


@dataclass(frozen=True, eq=False)
class DiscreteSCM:
    f_prior: Mapping[Value, float]
    s_prior: Mapping[Value, float]
    ux_prior: Mapping[Value, float]
    uy_prior: Mapping[Value, float]
    phi: Mapping[tuple, Value]  # (f, s, ux) -> x
    g: Mapping[tuple, Value]  # (f, uy) -> y*, query fixed
    admissible: Mapping[Value, frozenset]
    q: Value = 0

    def __post_init__(self):
        for name in ("f", "s", "ux", "uy"):
            object.__setattr__(self, f"{name}_prior", _check_prior(name, getattr(self, f"{name}_prior")))
        phi, g = dict(self.phi), dict(self.g)
        for key in product(self.f_prior, self.s_prior, self.ux_prior):
            if key not in phi:
                raise ValidationError(f"phi undefined at {key}")
        for key in product(self.f_prior, self.uy_prior):
            if key not in g:
                raise ValidationError(f"g undefined at {key}")
        adm = {}
        for f in self.f_prior:
            a = frozenset(self.admissible.get(f, ()))
            rng = {g[(f, uy)] for uy in self.uy_prior}
            if not a:
                raise ValidationError(f"admissible set for F={f!r} is empty")
            if not a <= rng:
                raise ValidationError(f"admissible set for F={f!r} leaves the range of g")
            adm[f] = a
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "admissible", adm)

    @classmethod
    def from_functions(
        cls,
        f_prior: Mapping[Value, float],
        s_prior: Mapping[Value, float],
        ux_prior: Mapping[Value, float],
        uy_prior: Mapping[Value, float],
        phi: Callable[[Value, Value, Value], Value],
        g: Callable[[Value, Value, Value], Value],
        q: Value = 0,
        admissible: Callable[[Value, Value], Iterable[Value]] | None = None,
    ) -> "DiscreteSCM":
        """Tabulate callables. ``g`` takes ``(f, q, uy)``; ``admissible``
        takes ``(f, q)`` and defaults to the full range of ``g(f, q, .)``."""
        phi_t = {(f, s, ux): phi(f, s, ux) for f in f_prior for s in s_prior for ux in ux_prior}
        g_t = {(f, uy): g(f, q, uy) for f in f_prior for uy in uy_prior}
        if admissible is None:
            adm = {f: frozenset(g_t[(f, uy)] for uy in uy_prior) for f in f_prior}
        else:
            adm = {f: frozenset(admissible(f, q)) for f in f_prior}
        return cls(f_prior, s_prior, ux_prior, uy_prior, phi_t, g_t, adm, q)

    @property
    def x_domain(self) -> set:
        return set(self.phi.values())

    def with_s_prior(self, s_prior: Mapping[Value, float]) -> "DiscreteSCM":
        if set(s_prior) - set(self.s_prior):
            raise ValidationError("shifted S prior uses values outside the S domain")
        full = {s: s_prior.get(s, 0.0) for s in self.s_prior}
        return DiscreteSCM(self.f_prior, full, self.ux_prior, self.uy_prior, self.phi, self.g, self.admissible, self.q)

    # declarative text format
    def to_json(self) -> str:
        def prior(p):
            return [[_enc(k), v] for k, v in p.items()]

        doc = {
            "q": _enc(self.q),
            "priors": {n: prior(getattr(self, f"{n}_prior")) for n in ("f", "s", "ux", "uy")},
            "phi": [[_enc(f), _enc(s), _enc(ux), _enc(x)] for (f, s, ux), x in self.phi.items()],
            "g": [[_enc(f), _enc(uy), _enc(y)] for (f, uy), y in self.g.items()],
            "admissible": [[_enc(f), sorted((_enc(y) for y in a), key=repr)] for f, a in self.admissible.items()],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DiscreteSCM":
        doc = json.loads(text)
        pri = {n: {_dec(k): v for k, v in doc["priors"][n]} for n in ("f", "s", "ux", "uy")}
        phi = {(_dec(f), _dec(s), _dec(ux)): _dec(x) for f, s, ux, x in doc["phi"]}
        g = {(_dec(f), _dec(uy)): _dec(y) for f, uy, y in doc["g"]}
        adm = {_dec(f): frozenset(_dec(y) for y in ys) for f, ys in doc["admissible"]}
        return cls(pri["f"], pri["s"], pri["ux"], pri["uy"], phi, g, adm, _dec(doc["q"]))


def _enc(v):
    return [_enc(x) for x in v] if isinstance(v, tuple) else v


def _dec(v):
    return tuple(_dec(x) for x in v) if isinstance(v, list) else v


@dataclass(frozen=True)
class ShiftFamily:
    shifts: tuple[Mapping[Value, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "shifts", tuple(_check_prior("shifted S", s) for s in self.shifts))

    def __len__(self) -> int:
        return len(self.shifts)

    def __iter__(self):
        return iter(self.shifts)


@dataclass(frozen=True)
class CipTransform:
    mapping: Mapping[Value, Value]

    def __call__(self, x: Value) -> Value:
        return self.mapping[x]

    def covers(self, xs: Iterable[Value]) -> bool:
        return all(x in self.mapping for x in xs)


@dataclass
class Joint:
    """Exact distribution over (f, s, x, y*)."""

    atoms: dict[tuple, float]
    n_configurations: int

    def marginal(self, key: Callable[[tuple], Hashable]) -> dict:
        out: dict = defaultdict(float)
        for a, p in self.atoms.items():
            out[key(a)] += p
        return dict(out)


def joint_table(scm: DiscreteSCM, shift: Mapping[Value, float] | None = None, max_atoms: int = MAX_ATOMS) -> Joint:
    s_prior = scm.with_s_prior(shift).s_prior if shift is not None else scm.s_prior
    size = len(scm.f_prior) * len(s_prior) * len(scm.ux_prior) * len(scm.uy_prior)
    if size > max_atoms:
        raise DomainTooLarge(f"{size} exogenous configurations exceed the limit of {max_atoms}")
    atoms: dict[tuple, float] = defaultdict(float)
    for f, pf in scm.f_prior.items():
        if pf == 0:
            continue
        for s, ps in s_prior.items():
            if ps == 0:
                continue
            for ux, pux in scm.ux_prior.items():
                if pux == 0:
                    continue
                x = scm.phi[(f, s, ux)]
                for uy, puy in scm.uy_prior.items():
                    if puy:
                        atoms[(f, s, x, scm.g[(f, uy)])] += pf * ps * pux * puy
    return Joint(dict(atoms), size)


def _view(which: Which, tau: CipTransform | None) -> Callable[[tuple], Hashable]:
    if which == "X":
        return lambda a: a[_X]
    if which == "F":
        return lambda a: a[_F]
    if which == "R":
        if tau is None:
            raise ValidationError("W='R' needs a transform")
        return lambda a: tau(a[_X])
    raise ValueError(f"unknown information set {which!r}")


def _admissible_cells(scm: DiscreteSCM, joint: Joint, which: Which, tau: CipTransform | None) -> dict:
    """w -> {y: P(W=w, Y*=y, y in A(F))}."""
    view = _view(which, tau)
    cells: dict = defaultdict(lambda: defaultdict(float))
    for a, p in joint.atoms.items():
        w = view(a)
        cells[w]  # register w even if the answer is inadmissible
        if a[_Y] in scm.admissible[a[_F]]:
            cells[w][a[_Y]] += p
    return cells


def _argmax(d: Mapping[Value, float]) -> Value | None:
    if not d:
        return None
    return max(sorted(d, key=repr), key=lambda y: d[y])


def bayes_risk(
    scm: DiscreteSCM,
    which: Which = "X",
    tau: CipTransform | None = None,
    shift: Mapping[Value, float] | None = None,
) -> float:
    """Risk of the Bayes predictor fitted to the (possibly shifted) distribution itself."""
    cells = _admissible_cells(scm, joint_table(scm, shift), which, tau)
    hit = math.fsum(max(c.values(), default=0.0) for c in cells.values())
    return max(0.0, 1.0 - hit)


@dataclass(frozen=True)
class Predictor:
    table: Mapping[Value, Value]
    fallback: Value | None

    def __call__(self, w: Value) -> Value | None:
        return self.table.get(w, self.fallback)


def fit_predictor(scm: DiscreteSCM, which: Which, tau: CipTransform | None = None) -> Predictor:
    """Bayes rule on the base distribution. Inputs never seen there get the
    a-priori most likely admissible answer."""
    cells = _admissible_cells(scm, joint_table(scm), which, tau)
    table = {w: _argmax(c) for w, c in cells.items()}
    overall: dict = defaultdict(float)
    for c in cells.values():
        for y, p in c.items():
            overall[y] += p
    return Predictor(table, _argmax(overall))


def deployed_risk(
    scm: DiscreteSCM,
    which: Which,
    tau: CipTransform | None = None,
    shift: Mapping[Value, float] | None = None,
    predictor: Predictor | None = None,
) -> float:
    """Risk under ``shift`` of the predictor fitted on the base distribution."""
    pred = predictor or fit_predictor(scm, which, tau)
    cells = _admissible_cells(scm, joint_table(scm, shift), which, tau)
    hit = math.fsum(c.get(pred(w), 0.0) for w, c in cells.items())
    return max(0.0, 1.0 - hit)


def robust_risk(
    scm: DiscreteSCM,
    which: Which,
    tau: CipTransform | None,
    shifts: ShiftFamily | Sequence[Mapping[Value, float]],
    predictor: Literal["bayes", "deployed"] = "bayes",
) -> float:
    """Worst case over the shift family plus the identity (base) distribution."""
    family = list(shifts)
    if not family:
        raise EmptyShiftFamily("shift family is empty")
    dists = [None, *family]
    if predictor == "bayes":
        return max(bayes_risk(scm, which, tau, s) for s in dists)
    fitted = fit_predictor(scm, which, tau)
    return max(deployed_risk(scm, which, tau, s, fitted) for s in dists)


def oracle_tau(scm: DiscreteSCM) -> CipTransform:
    """Map every context value to the unique fact value that can produce it."""
    mapping: dict = {}
    for (f, s, ux), x in scm.phi.items():
        if mapping.setdefault(x, f) != f:
            raise NotRecoverable(f"context {x!r} arises from facts {mapping[x]!r} and {f!r}")
    return CipTransform(mapping)


# conditional-independence diagnostics --------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    c1: float
    c2: float
    c3: float
    tol: float = CI_TOL

    @property
    def ok(self) -> bool:
        return max(self.c1, self.c2, self.c3) <= self.tol


def _conditional(joint: Joint, target: Callable, given: Callable) -> dict:
    num = joint.marginal(lambda a: (given(a), target(a)))
    den = joint.marginal(given)
    return {k: v / den[k[0]] for k, v in num.items() if den[k[0]] > 0}


def _max_gap(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return max((abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys), default=0.0)


def _do_answer(scm: DiscreteSCM) -> dict:
    out: dict = defaultdict(float)
    for (f, uy), y in scm.g.items():
        out[(f, y)] += scm.uy_prior[uy]
    return out


def check_conditions(scm: DiscreteSCM, tau: CipTransform, shifts: Iterable[Mapping] = ()) -> ConditionReport:
    """Largest violation of sufficiency (C1), deconfounding (C2) and
    identifiability (C3) across the base and shifted distributions."""
    if not tau.covers(scm.x_domain):
        raise AssumptionViolated("transform is not total on the context domain")
    do = _do_answer(scm)
    c1 = c2 = c3 = 0.0
    for shift in [None, *shifts]:
        joint = joint_table(scm, shift)
        r = lambda a: tau(a[_X])  # noqa: E731
        # C1: P(y|x) == P(y|r(x)), and R determines F
        y_x = _conditional(joint, lambda a: a[_Y], lambda a: a[_X])
        y_r = _conditional(joint, lambda a: a[_Y], r)
        c1 = max(c1, max((abs(p - y_r.get((tau(x), y), 0.0)) for (x, y), p in y_x.items()), default=0.0))
        f_of_r: dict = {}
        for a in joint.atoms:
            if f_of_r.setdefault(r(a), a[_F]) != a[_F]:
                c1 = max(c1, 1.0)
        # C2: P(r|f,s) == P(r|f)
        r_fs = _conditional(joint, r, lambda a: (a[_F], a[_S]))
        r_f = _conditional(joint, r, lambda a: a[_F])
        c2 = max(c2, max((abs(p - r_f.get((fs[0], rv), 0.0)) for (fs, rv), p in r_fs.items()), default=0.0))
        for fs in {k[0] for k in r_fs}:
            for (f, rv), p in r_f.items():
                if f == fs[0] and (fs, rv) not in r_fs:
                    c2 = max(c2, p)
        # C3: P(y|r) == P(y|do(f)) for facts f co-occurring with r
        pairs = {(r(a), a[_F]) for a in joint.atoms}
        ys = {y for _, y in do} | {a[_Y] for a in joint.atoms}
        for rv, f in pairs:
            for y in ys:
                c3 = max(c3, abs(y_r.get((rv, y), 0.0) - do.get((f, y), 0.0)))
    return ConditionReport(c1, c2, c3)


# risk comparisons ------------------------------------------------------------


@dataclass(frozen=True)
class NonexpansionResult:
    r_rob_R: float
    r_rob_X: float
    holds: bool
    margin: float
    strict: bool
    spurious: bool
    bayes_rob_R: float
    bayes_rob_X: float


def has_spurious_dependence(scm: DiscreteSCM, shifts: Iterable[Mapping]) -> bool:
    """True if some shift moves mass onto contexts never seen under the base distribution."""
    seen = set(joint_table(scm).marginal(lambda a: a[_X]))
    for shift in shifts:
        xs = joint_table(scm, shift).marginal(lambda a: a[_X])
        if any(p > 0 and x not in seen for x, p in xs.items()):
            return True
    return False


def verify_nonexpansion(
    scm: DiscreteSCM,
    tau: CipTransform,
    shifts: ShiftFamily | Sequence[Mapping],
    check: bool = True,
    tol: float = 1e-12,
) -> NonexpansionResult:
    family = list(shifts)
    if check:
        rep = check_conditions(scm, tau, family)
        if not rep.ok:
            raise AssumptionViolated(f"C1-C3 violated: {rep}")
    r_R = robust_risk(scm, "R", tau, family, "deployed")
    r_X = robust_risk(scm, "X", tau, family, "deployed")
    b_R = robust_risk(scm, "R", tau, family, "bayes")
    b_X = robust_risk(scm, "X", tau, family, "bayes")
    margin = r_X - r_R
    spurious = has_spurious_dependence(scm, family)
    holds = r_R <= r_X + tol and b_R <= b_X + tol
    return NonexpansionResult(r_R, r_X, holds, margin, spurious and margin > tol, spurious, b_R, b_X)


def _tv(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _answer_given(joint: Joint, view: Callable) -> dict:
    cond = _conditional(joint, lambda a: a[_Y], view)
    out: dict = defaultdict(dict)
    for (w, y), p in cond.items():
        out[w][y] = p
    return out


def verify_invariance(
    scm: DiscreteSCM,
    tau: CipTransform,
    shifts: ShiftFamily | Sequence[Mapping],
    check: bool = True,
) -> float:
    """Largest total-variation distance between P'(Y*|R) and P(Y*|R) over shifts."""
    family = list(shifts)
    if check:
        rep = check_conditions(scm, tau, family)
        if not rep.ok:
            raise AssumptionViolated(f"C1-C3 violated: {rep}")
    view = lambda a: tau(a[_X])  # noqa: E731
    base = _answer_given(joint_table(scm), view)
    worst = 0.0
    for shift in family:
        shifted = _answer_given(joint_table(scm, shift), view)
        for r, dist in shifted.items():
            if r in base:
                worst = max(worst, _tv(dist, base[r]))
    return worst


def kl_divergence(p: Mapping, q: Mapping) -> float:
    """KL(p || q) in nats; raises SupportMismatch if p is not dominated by q."""
    total = 0.0
    for k, pk in p.items():
        if pk <= 0:
            continue
        qk = q.get(k, 0.0)
        if qk <= 0:
            raise SupportMismatch(f"mass at {k!r} has no support under the reference")
        total += pk * math.log(pk / qk)
    return max(total, 0.0)


@dataclass(frozen=True)
class DpiResult:
    kl_before: float
    kl_after: float
    holds: bool


def dpi_check(scm: DiscreteSCM, tau: CipTransform, shift: Mapping[Value, float], tol: float = 1e-10) -> DpiResult:
    """KL(Q_XY || P_XY) >= KL of their images under (x, y) -> (tau(x), y)."""
    base, moved = joint_table(scm), joint_table(scm, shift)
    xy = lambda a: (a[_X], a[_Y])  # noqa: E731
    ry = lambda a: (tau(a[_X]), a[_Y])  # noqa: E731
    before = kl_divergence(moved.marginal(xy), base.marginal(xy))
    after = kl_divergence(moved.marginal(ry), base.marginal(ry))
    return DpiResult(before, after, after <= before + tol)


@dataclass(frozen=True)
class RaoBlackwellResult:
    bayes_risk_X: float
    bayes_risk_R: float
    equal: bool


def rao_blackwell_check(
    scm: DiscreteSCM,
    tau: CipTransform,
    shift: Mapping[Value, float] | None = None,
    require_sufficiency: bool = False,
    tol: float = 1e-12,
) -> RaoBlackwellResult:
    if require_sufficiency:
        rep = check_conditions(scm, tau, [shift] if shift else [])
        if rep.c1 > rep.tol:
            raise AssumptionViolated(f"sufficiency violated by {rep.c1:.3g}")
    rx = bayes_risk(scm, "X", tau, shift)
    rr = bayes_risk(scm, "R", tau, shift)
    return RaoBlackwellResult(rx, rr, abs(rx - rr) <= tol)


@dataclass(frozen=True)
class PinskerResult:
    risk: float
    bound: float
    holds: bool
    irreducible: float
    divergence_term: float
    half_constant_bound: float

    @property
    def half_constant_holds(self) -> bool:
        return self.risk <= self.half_constant_bound + 1e-10


_INADMISSIBLE = object()


def pinsker_check(
    scm: DiscreteSCM,
    which: Which,
    tau: CipTransform | None = None,
    shift: Mapping[Value, float] | None = None,
    tol: float = 1e-10,
) -> PinskerResult:
    """risk(W) <= risk(F) + E_{F,W}[sqrt(KL(P_F || P_W) / 2)].

    ``P_F`` and ``P_W`` are the laws of the outcome "Y* = y and y admissible"
    (with one extra outcome for inadmissible answers) given F and given W.
    Pinsker's inequality gives the bound term by term.
    """
    joint = joint_table(scm, shift)
    view = _view(which, tau)

    def outcome(a):
        return a[_Y] if a[_Y] in scm.admissible[a[_F]] else _INADMISSIBLE

    by_f = _group(joint, lambda a: a[_F], outcome)
    by_w = _group(joint, view, outcome)
    fw = joint.marginal(lambda a: (a[_F], view(a)))
    risk = bayes_risk(scm, which, tau, shift)
    irreducible = bayes_risk(scm, "F", None, shift)
    term = half = 0.0
    for (f, w), p in fw.items():
        if p <= 0:
            continue
        kl = kl_divergence(by_f[f], by_w[w])
        term += p * math.sqrt(kl / 2.0)
        half += p * 0.5 * math.sqrt(kl)
    bound = irreducible + term
    return PinskerResult(risk, bound, risk <= bound + tol, irreducible, term, half)


def _group(joint: Joint, key: Callable, outcome: Callable) -> dict:
    num: dict = defaultdict(lambda: defaultdict(float))
    for a, p in joint.atoms.items():
        num[key(a)][outcome(a)] += p
    out = {}
    for k, d in num.items():
        z = math.fsum(d.values())
        out[k] = {o: v / z for o, v in d.items()}
    return out


def mutual_information(joint: Joint, left: Callable, right: Callable) -> float:
    pab = joint.marginal(lambda a: (left(a), right(a)))
    pa = joint.marginal(left)
    pb = joint.marginal(right)
    mi = math.fsum(p * math.log(p / (pa[a] * pb[b])) for (a, b), p in pab.items() if p > 0)
    return max(mi, 0.0)


def default_length(w: Value) -> float:
    return float(len(w)) if isinstance(w, tuple) else 1.0


def eid_exact(
    scm: DiscreteSCM,
    which: Which,
    tau: CipTransform | None = None,
    length: Callable[[Value], float] | Mapping[Value, float] | None = None,
    shift: Mapping[Value, float] | None = None,
) -> float:
    """I(F; W | Q) / E[|W|] in nats per unit length (Q is fixed)."""
    joint = joint_table(scm, shift)
    view = _view(which, tau)
    size = length if callable(length) else (length.__getitem__ if length is not None else default_length)
    expected = math.fsum(p * size(w) for w, p in joint.marginal(view).items())
    if expected <= 0:
        raise ZeroLength("expected representation length is zero")
    return mutual_information(joint, lambda a: a[_F], view) / expected


def lab_answer_text(scm: DiscreteSCM, tau: CipTransform) -> str:
    """One causal sentence per refined input: the base-fitted answer for R as
    an edge from that fact to an admissible answer. Facts and answers live in
    separate namespaces, so the claims cannot close a cycle."""
    pred = fit_predictor(scm, "R", tau)
    lines = []
    for r, y in sorted(pred.table.items(), key=lambda kv: repr(kv[0])):
        if y is not None:
            lines.append(f"Fact {_word(r)} causes answer {_word(y)}.")
    return " ".join(lines)


def _word(v: Value) -> str:
    return "-".join(map(str, v)) if isinstance(v, tuple) else str(v)


# constructive family --------------------------------------------------------


@dataclass
class LabInstance:
    seed: int
    scm: DiscreteSCM
    tau: CipTransform
    shifts: ShiftFamily
    ac_shifts: tuple[Mapping, ...]
    spurious_in_x: bool
    meta: dict = field(default_factory=dict)


def _simplex(rng: np.random.Generator, n: int, floor: float = 0.1) -> np.ndarray:
    p = (1 - floor) * rng.dirichlet(np.ones(n)) + floor / n
    return p / p.sum()


def _prior(values: Sequence, probs: Sequence[float]) -> dict:
    probs = [float(p) for p in probs]
    # absorb rounding into the largest entry so the table sums to 1
    i = int(np.argmax(probs))
    probs[i] = 1.0 - math.fsum(probs[:i] + probs[i + 1:])
    return dict(zip(values, probs))


def random_constructive_scm(seed: int) -> LabInstance:
    """Random SCM whose context X always carries F as its first coordinate.

    S has "seen" values (positive base mass) and "novel" values (zero base
    mass). When ``spurious_in_x`` is set, X also records S, so a shift onto
    novel S values produces contexts never seen under the base distribution.
    """
    rng = np.random.default_rng(seed)
    nf = int(rng.integers(2, 4))
    n_seen = int(rng.integers(2, 4))
    n_novel = int(rng.integers(1, 3))
    nux = int(rng.integers(1, 3))
    nuy = int(rng.integers(2, 4))
    spurious = bool(rng.random() < 0.6)

    fs = list(range(nf))
    ss = list(range(n_seen + n_novel))
    uxs = list(range(nux))
    uys = list(range(nuy))
    p0 = float(rng.uniform(0.55, 0.85))
    rest = (1 - p0) * _simplex(rng, nuy - 1)
    uy_prior = _prior(uys, [p0, *rest])
    s_prior = _prior(ss, [*_simplex(rng, n_seen), *([0.0] * n_novel)])

    def phi(f, s, ux):
        return (f, s, ux) if spurious else (f, ux)

    def g(f, q, uy):
        return f if uy == 0 else (f + uy) % nf

    extra = {f: {(f + uy) % nf for uy in uys[1:] if rng.random() < 0.5} for f in fs}

    def admissible(f, q):
        return {f} | extra[f]

    scm = DiscreteSCM.from_functions(
        _prior(fs, _simplex(rng, nf)), s_prior, _prior(uxs, _simplex(rng, nux)), uy_prior, phi, g, 0, admissible
    )
    ac = tuple(_prior(ss, [*_simplex(rng, n_seen), *([0.0] * n_novel)]) for _ in range(2))
    novel = _prior(ss, _simplex(rng, n_seen + n_novel))
    return LabInstance(seed, scm, oracle_tau(scm), ShiftFamily((*ac, novel)), ac, spurious)


@dataclass(frozen=True)
class SuiteRow:
    seed: int
    spurious: bool
    nonexpansion: bool
    strict: bool
    margin: float
    invariance: float
    dpi: bool
    rao_blackwell: bool
    pinsker_x: bool
    pinsker_r: bool
    eid_x: float
    eid_r: float

    @property
    def passed(self) -> bool:
        return (
            self.nonexpansion
            and (self.strict or not self.spurious)
            and self.invariance <= 1e-12
            and self.dpi
            and self.rao_blackwell
            and self.pinsker_x
            and self.pinsker_r
            and self.eid_r > self.eid_x
        )


def run_instance(inst: LabInstance) -> SuiteRow:
    scm, tau = inst.scm, inst.tau
    ne = verify_nonexpansion(scm, tau, inst.shifts)
    inv = verify_invariance(scm, tau, inst.shifts)
    dpi = all(dpi_check(scm, tau, s).holds for s in inst.ac_shifts)
    rb = rao_blackwell_check(scm, tau).equal
    px = pinsker_check(scm, "X", tau).holds
    pr = pinsker_check(scm, "R", tau).holds
    return SuiteRow(
        inst.seed, ne.spurious, ne.holds, ne.strict, ne.margin, inv, dpi, rb, px, pr,
        eid_exact(scm, "X", tau), eid_exact(scm, "R", tau),
    )


def run_suite(seeds: Iterable[int]) -> list[SuiteRow]:
    return [run_instance(random_constructive_scm(s)) for s in seeds]

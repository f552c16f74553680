"""Numeric validation layer.

Everything here treats the symbolic pipeline as a black box and checks
it with arithmetic: finite-difference bracket stencils, twin closed-
loop integrations in x- and z-coordinates, and reconstruction of the
full state and input history from the flat output alone. Fixed-step
RK4 throughout; no adaptive solver, so runs are bit-reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .symx import (
    ZERO,
    Expr,
    Frame,
    Point,
    Sym,
    compile_fn,
    diff,
    eval_at,
    free_symbols,
    linear_decompose,
    normalize,
    parse,
    subst,
)
from .diffgeo import VectorField
from .chained import Chart
from .triangular import TriangularRealization

DEFAULT_REG_THRESHOLD = 1e-3
DEFAULT_FD_STEP = 1e-5

T_FRAME = Frame("time", ("t",), ())


class HarnessError(Exception):
    """Numeric validation failure (not a verdict: a broken run)."""


class RegularityError(HarnessError):
    """|r_i| dipped below the safety threshold during a run."""

    def __init__(self, msg: str, t: float, index: int):
        super().__init__(msg)
        self.t = t
        self.index = index


@dataclass(frozen=True)
class SampleBox:
    """Seeded uniform sampler over a coordinate box.

    reject, when given, returns True for points to discard (e.g. near
    a denominator's zero set); rejected draws are replaced so the
    output always has `count` points. Deterministic for a fixed seed.
    """

    bounds: tuple[tuple[float, float], ...]
    count: int
    seed: int = 0
    reject: Callable[[Point], bool] | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("sample count must be positive")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"empty box interval [{lo}, {hi}]")

    def points(self, frame: Frame,
               params: dict[str, float] | None = None) -> list[Point]:
        if len(self.bounds) != frame.n:
            raise ValueError("box dimension does not match the frame")
        rng = np.random.default_rng(self.seed)
        params = dict(params or {})
        out: list[Point] = []
        attempts = 0
        cap = max(50 * self.count, 100)
        while len(out) < self.count:
            if attempts >= cap:
                raise HarnessError(
                    f"sampling rejected too often ({attempts} attempts "
                    f"for {self.count} points)")
            attempts += 1
            coords = [float(rng.uniform(lo, hi)) for lo, hi in self.bounds]
            q = frame.point(coords, params)
            if self.reject is not None and self.reject(q):
                continue
            out.append(q)
        return out


@dataclass(frozen=True)
class VSignal:
    """External input v(t) = (v1, v2) as expressions in t.

    Symbolic in t so that exact time derivatives of any order are one
    diff away; reconstruction quality then measures the method, not a
    numeric differentiator.
    """

    v1: Expr
    v2: Expr

    @classmethod
    def from_strings(cls, s1: str, s2: str) -> "VSignal":
        return cls(parse(s1, T_FRAME), parse(s2, T_FRAME))

    def derivative(self, which: int, order: int) -> Expr:
        e = (self.v1, self.v2)[which - 1]
        for _ in range(order):
            e = diff(e, "t")
        return normalize(e)

    def values(self, t: np.ndarray) -> np.ndarray:
        f1 = compile_fn(self.v1, ("t",))
        f2 = compile_fn(self.v2, ("t",))
        t = np.asarray(t, dtype=float)
        return np.column_stack([np.broadcast_to(f1([t]), t.shape),
                                np.broadcast_to(f2([t]), t.shape)])


@dataclass
class Trajectory:
    """Time grid plus state/input histories in both coordinate systems.

    x and u may be None when the chart has no usable inverse; CSV
    export requires the full record.
    """

    t: np.ndarray
    z: np.ndarray
    x: np.ndarray | None
    v: np.ndarray
    u: np.ndarray | None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.z.shape[1]

    def to_csv(self, path: str) -> None:
        if self.x is None or self.u is None:
            raise HarnessError("trajectory lacks x/u data for CSV export")
        n = self.n
        header = (["t"] + [f"z{i}" for i in range(1, n + 1)]
                  + [f"x{i}" for i in range(1, n + 1)] + ["v1", "v2", "u1", "u2"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self.t)):
                row = ([self.t[k]] + list(self.z[k]) + list(self.x[k])
                       + list(self.v[k]) + list(self.u[k]))
                w.writerow([f"{val:.17g}" for val in row])


def fd_bracket(X: VectorField, Y: VectorField, q: Point,
               h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference [X, Y](q) = J_Y(q) X(q) - J_X(q) Y(q)."""
    if X.frame is not Y.frame and X.frame.name != Y.frame.name:
        raise HarnessError("bracket operands live in different charts")
    frame = X.frame
    n = frame.n
    base = np.asarray(q.coords, dtype=float)

    def vals(F: VectorField, coords: np.ndarray) -> np.ndarray:
        env = dict(zip(frame.states, coords))
        env.update(q.params)
        try:
            return np.array([eval_at(c, env) for c in F.components])
        except Exception as exc:
            raise HarnessError(
                f"evaluation failure in the stencil at {tuple(coords)}: "
                f"{exc}") from exc

    def jac(F: VectorField) -> np.ndarray:
        J = np.empty((n, n))
        for j in range(n):
            step = np.zeros(n)
            step[j] = h
            J[:, j] = (vals(F, base + step) - vals(F, base - step)) / (2 * h)
        return J

    return jac(Y) @ vals(X, base) - jac(X) @ vals(Y, base)


def _rk4(rhs: Callable[[float, np.ndarray], np.ndarray], y0: Sequence[float],
         t: np.ndarray,
         on_node: Callable[[int, float, np.ndarray], None] | None = None
         ) -> np.ndarray:
    y = np.asarray(y0, dtype=float)
    out = np.empty((len(t), len(y)))
    out[0] = y
    if on_node is not None:
        on_node(0, float(t[0]), y)
    for k in range(len(t) - 1):
        tk, h = float(t[k]), float(t[k + 1] - t[k])
        # divergence surfaces as the non-finite check, not as numpy warnings
        with np.errstate(all="ignore"):
            k1 = rhs(tk, y)
            k2 = rhs(tk + h / 2, y + h / 2 * k1)
            k3 = rhs(tk + h / 2, y + h / 2 * k2)
            k4 = rhs(tk + h, y + h * k3)
            y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise HarnessError(f"non-finite state at t = {t[k + 1]:.6g}")
        out[k + 1] = y
        if on_node is not None:
            on_node(k + 1, float(t[k + 1]), y)
    return out


def _grid(T: float, dt: float) -> np.ndarray:
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"horizon {T} is not a multiple of dt {dt}")
    return np.linspace(0.0, T, steps + 1)


def _bound_all_params(real: TriangularRealization,
                      extra: dict[str, float]) -> dict[str, float]:
    params = dict(real.system.param_values)
    params.update(extra)
    missing = set(real.chart.x_frame.params) - set(params)
    if missing:
        raise HarnessError(f"unbound parameters: {sorted(missing)}")
    return params


def _x_from_z(chart: Chart, z: np.ndarray,
              params: dict[str, float]) -> np.ndarray:
    """Map a z-history through the inverse chart (rowwise)."""
    fns = [compile_fn(c, chart.z_frame.states, params) for c in chart.inverse]
    cols = [z[:, j] for j in range(z.shape[1])]
    return np.column_stack([np.broadcast_to(f(cols), z.shape[:1])
                            for f in fns])


def simulate(real: TriangularRealization, z0: Point, v: VSignal,
             T: float, dt: float,
             reg_threshold: float = DEFAULT_REG_THRESHOLD) -> Trajectory:
    """Integrate the closed loop twice: the triangular z-dynamics, and
    the original x-dynamics under u = alpha + beta v from the matched
    initial state. Both histories land in the returned Trajectory, so
    any disagreement through the chart is visible to the caller.

    Aborts with RegularityError the moment any |r_i| at a grid node
    drops below reg_threshold: past that point reconstruction from the
    flat output is ill-posed, so the run would not mean anything.
    """
    if real.phis is None:
        raise HarnessError("simulate needs z-coordinate drift rows "
                           "(chart has no symbolic inverse)")
    n = real.n
    chart = real.chart
    params = _bound_all_params(real, dict(z0.params))
    zs = chart.z_frame.states

    phi_fns = [compile_fn(p, zs, params) for p in real.phis]
    reg_fns = [compile_fn(r, zs + ("v1",), params) for r in real.regularity]
    v1_fn = compile_fn(v.v1, ("t",))
    v2_fn = compile_fn(v.v2, ("t",))

    def rhs_z(tk: float, z: np.ndarray) -> np.ndarray:
        v1, v2 = v1_fn([tk]), v2_fn([tk])
        dz = np.empty(n)
        for i in range(n - 2):
            dz[i] = phi_fns[i](z) + z[i + 1] * v1
        dz[n - 2] = v2
        dz[n - 1] = v1
        return dz

    min_reg = math.inf

    def monitor(_k: int, tk: float, z: np.ndarray) -> None:
        nonlocal min_reg
        v1 = v1_fn([tk])
        for i, rf in enumerate(reg_fns):
            val = abs(rf(list(z) + [v1]))
            min_reg = min(min_reg, val)
            if val < reg_threshold:
                raise RegularityError(
                    f"regularity |r_{i + 1}| = {val:.3e} < {reg_threshold} "
                    f"at t = {tk:.6g}", t=tk, index=i + 1)

    t = _grid(T, dt)
    ztraj = _rk4(rhs_z, list(z0.coords), t, on_node=monitor)

    if chart.inverse is not None:
        env = dict(zip(zs, z0.coords))
        env.update(params)
        x0 = [eval_at(c, env) for c in chart.inverse]
    else:
        x0 = list(_invert_chart_point(chart, np.asarray(z0.coords), params))

    sys_ = real.system
    xs = chart.x_frame.states
    f_fns = [compile_fn(c, xs, params) for c in sys_.f.components]
    g1_fns = [compile_fn(c, xs, params) for c in sys_.g1.components]
    g2_fns = [compile_fn(c, xs, params) for c in sys_.g2.components]
    a_fns = [compile_fn(a, xs, params) for a in real.feedback.alpha]
    b_fns = [[compile_fn(b, xs, params) for b in row]
             for row in real.feedback.beta]

    def inputs(tk: float, x: np.ndarray) -> np.ndarray:
        v1, v2 = v1_fn([tk]), v2_fn([tk])
        return np.array([
            a_fns[0](x) + b_fns[0][0](x) * v1 + b_fns[0][1](x) * v2,
            a_fns[1](x) + b_fns[1][0](x) * v1 + b_fns[1][1](x) * v2,
        ])

    def rhs_x(tk: float, x: np.ndarray) -> np.ndarray:
        u1, u2 = inputs(tk, x)
        return np.array([f_fns[i](x) + g1_fns[i](x) * u1 + g2_fns[i](x) * u2
                         for i in range(n)])

    xtraj = _rk4(rhs_x, x0, t)
    vvals = v.values(t)
    uvals = np.array([inputs(float(t[k]), xtraj[k]) for k in range(len(t))])

    return Trajectory(t=t, z=ztraj, x=xtraj, v=vvals, u=uvals,
                      meta={"min_abs_regularity": float(min_reg),
                            "dt": dt, "horizon": T})


def _invert_chart_point(chart: Chart, z_target: np.ndarray,
                        params: dict[str, float],
                        guess: np.ndarray | None = None) -> np.ndarray:
    """Damped Newton solve of forward(x) = z_target; fallback for
    charts without a closed-form inverse."""
    states = chart.x_frame.states
    fwd = [compile_fn(c, states, params) for c in chart.forward]
    jac = [[compile_fn(diff(c, s), states, params) for s in states]
           for c in chart.forward]
    x = np.array(z_target if guess is None else guess, dtype=float)

    def residual(xv: np.ndarray) -> np.ndarray:
        return np.array([f(xv) for f in fwd]) - z_target

    r = residual(x)
    for _ in range(100):
        if np.linalg.norm(r) < 1e-12:
            return x
        J = np.array([[jf(x) for jf in row] for row in jac])
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise HarnessError("singular Jacobian while inverting the "
                               "chart numerically") from exc
        lam = 1.0
        while lam > 1e-8:
            cand = x - lam * step
            rc = residual(cand)
            if np.all(np.isfinite(rc)) and np.linalg.norm(rc) < np.linalg.norm(r):
                x, r = cand, rc
                break
            lam /= 2
        else:
            raise HarnessError("numeric chart inversion stalled")
    raise HarnessError("numeric chart inversion did not converge")


# --- flat-output reconstruction -------------------------------------

def _jet_name(base: str, order: int) -> str:
    return f"{base}_d{order}"


def _total_derivative(e: Expr, succ: dict[str, Expr]) -> Expr:
    acc: Expr | None = None
    for s in sorted(free_symbols(e)):
        if s not in succ:
            continue
        term = diff(e, s) * succ[s]
        acc = term if acc is None else acc + term
    return normalize(acc) if acc is not None else ZERO


@dataclass(frozen=True)
class FlatSignal:
    """Sampled flat output with derivative stacks.

    y1_jets[:, m] holds d^m y1 / dt^m on the grid; likewise y2. State
    reconstruction at level i consumes y1 up to order n-i and v1 =
    dy2/dt up to order n-1-i, so full input recovery needs both stacks
    up to order n-1.
    """

    t: np.ndarray
    y1_jets: np.ndarray
    y2_jets: np.ndarray

    @classmethod
    def from_trajectory(cls, real: TriangularRealization, traj: Trajectory,
                        v: VSignal) -> "FlatSignal":
        """Exact derivatives along a simulated run, obtained by
        differentiating the closed-loop dynamics symbolically rather
        than the sampled curve numerically."""
        if real.phis is None:
            raise HarnessError("reconstruction needs z-coordinate drift rows")
        n = real.n
        depth = n - 1
        zs = real.chart.z_frame.states
        params = _bound_all_params(real, {})

        vnames = [[_jet_name(f"v{j}", k) for k in range(depth + 1)]
                  for j in (1, 2)]
        succ: dict[str, Expr] = {}
        v1_0, v2_0 = Sym(vnames[0][0]), Sym(vnames[1][0])
        for i in range(n):
            if i < n - 2:
                rhs = normalize(real.phis[i] + Sym(zs[i + 1]) * v1_0)
            elif i == n - 2:
                rhs = v2_0
            else:
                rhs = v1_0
            succ[zs[i]] = rhs
        for j in (0, 1):
            for k in range(depth):
                succ[vnames[j][k]] = Sym(vnames[j][k + 1])

        order = list(zs) + vnames[0] + vnames[1]
        vjets = np.empty((len(traj.t), 2, depth + 1))
        for j in (1, 2):
            for k in range(depth + 1):
                fn = compile_fn(v.derivative(j, k), ("t",))
                vjets[:, j - 1, k] = np.broadcast_to(fn([traj.t]),
                                                     traj.t.shape)

        cols = [traj.z[:, i] for i in range(n)]
        cols += [vjets[:, 0, k] for k in range(depth + 1)]
        cols += [vjets[:, 1, k] for k in range(depth + 1)]

        jets = {}
        for name, base in (("y1", zs[0]), ("y2", zs[n - 1])):
            stack = np.empty((len(traj.t), depth + 1))
            e: Expr = Sym(base)
            for m in range(depth + 1):
                fn = compile_fn(e, order, params)
                stack[:, m] = np.broadcast_to(fn(cols), traj.t.shape)
                if m < depth:
                    e = _total_derivative(e, succ)
            jets[name] = stack
        return cls(t=traj.t.copy(), y1_jets=jets["y1"], y2_jets=jets["y2"])

    @classmethod
    def from_samples(cls, t: np.ndarray, y1: np.ndarray, y2: np.ndarray,
                     depth: int) -> "FlatSignal":
        """Spline-differentiated stacks for external data. Documented
        lower-accuracy path: noise amplifies with each order."""
        from scipy.interpolate import make_interp_spline

        t = np.asarray(t, dtype=float)
        k = min(max(depth + 2, 3), 7)
        stacks = []
        for y in (y1, y2):
            spl = make_interp_spline(t, np.asarray(y, dtype=float), k=k)
            stacks.append(np.column_stack(
                [spl.derivative(m)(t) if m else spl(t)
                 for m in range(depth + 1)]))
        return cls(t=t, y1_jets=stacks[0], y2_jets=stacks[1])


def _newton_grid(F, dF, known_cols: list[np.ndarray], npts: int,
                 level: int, t: np.ndarray,
                 reg_threshold: float) -> np.ndarray:
    """Vectorized safeguarded Newton for the order-0 cascade equation.

    Starts from w = 0 everywhere and iterates w -= F/F'. Samples that
    fail to converge (stalled, NaN, near-zero slope mid-iteration)
    fall back to bisection on an expanding bracket; a sample with no
    bracket is a hard error naming time and level. The regularity
    check happens at the solution, where F' is r_i.
    """
    w = np.zeros(npts)
    for _ in range(80):
        fv = np.broadcast_to(F([w] + known_cols), (npts,))
        dv = np.broadcast_to(dF([w] + known_cols), (npts,))
        with np.errstate(all="ignore"):
            step = np.where(np.abs(dv) > 1e-300, fv / dv, 0.0)
        step = np.where(np.isfinite(step), step, 0.0)
        w = w - step
        if np.max(np.abs(step)) < 1e-14 * (1 + np.max(np.abs(w))):
            break
    fv = np.broadcast_to(F([w] + known_cols), (npts,))
    ok = np.abs(fv) <= 1e-9 * (1 + np.abs(w))
    for j in np.nonzero(~ok)[0]:
        cols_j = [np.array([c[j]]) for c in known_cols]

        def scalar(wj: float) -> float:
            return float(np.asarray(F([np.array([wj])] + cols_j)).reshape(-1)[0])

        w[j] = _bisect_expanding(scalar, 0.0, level, float(t[j]))

    dv = np.broadcast_to(dF([w] + known_cols), (npts,))
    j = int(np.argmin(np.abs(dv)))
    if abs(dv[j]) < reg_threshold:
        raise RegularityError(
            f"regularity |r_{level}| = {abs(dv[j]):.3e} < {reg_threshold} "
            f"at t = {t[j]:.6g}", t=float(t[j]), index=level)
    return w


def _bisect_expanding(fn, center: float, level: int, tj: float) -> float:
    width = 1e-6
    a = b = center
    fa = fb = math.nan
    for _ in range(120):
        a, b = center - width, center + width
        fa, fb = fn(a), fn(b)
        if math.isfinite(fa) and math.isfinite(fb) and fa * fb <= 0:
            break
        width *= 2
    else:
        raise HarnessError(
            f"root-finder failure at t = {tj:.6g}, level {level}: no sign "
            f"change in [{a:.3e}, {b:.3e}]")
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = fn(m)
        if fa * fm <= 0:
            b = m
        else:
            a, fa = m, fm
        if abs(b - a) < 1e-15 * (1 + abs(m)):
            break
    return 0.5 * (a + b)


def reconstruct(real: TriangularRealization, flat: FlatSignal,
                reg_threshold: float = DEFAULT_REG_THRESHOLD) -> Trajectory:
    """Recover the full state and inputs from the flat output alone.

    z_1 = y1 and z_n = y2 seed the cascade; level i then solves
    dz_i/dt = phi_i(z_1..z_{i+1}, z_n) + z_{i+1} v1 for z_{i+1}
    (safeguarded Newton at order 0, a linear solve with coefficient
    r_i for each higher derivative order), ending with v2 = dz_{n-1}.
    The x/u history is attached when the chart inverts symbolically.
    """
    if real.phis is None:
        raise HarnessError("reconstruction needs z-coordinate drift rows")
    n = real.n
    depth_y = n - 1
    if flat.y1_jets.shape[1] < depth_y + 1 or flat.y2_jets.shape[1] < depth_y + 1:
        raise HarnessError(
            f"flat signal needs derivative stacks up to order {depth_y}")
    chart = real.chart
    zs = chart.z_frame.states
    params = _bound_all_params(real, {})
    t = flat.t
    npts = len(t)

    # jets[name][m] is the m-th derivative column of that variable
    jets: dict[str, list[np.ndarray]] = {
        zs[0]: [flat.y1_jets[:, m] for m in range(depth_y + 1)],
        zs[n - 1]: [flat.y2_jets[:, m] for m in range(depth_y + 1)],
        "v1": [flat.y2_jets[:, m + 1] for m in range(depth_y)],
    }

    for i in range(1, n - 1):      # level i solves for z_{i+1}
        need = n - 1 - i           # highest derivative order required
        w = "w"
        base_syms = [zs[j] for j in range(i)] + [zs[n - 1], "v1"]
        rhs = normalize(
            subst(real.phis[i - 1], {zs[i]: Sym(w)}) + Sym(w) * Sym("v1"))

        # rewrite base symbols at jet order 0, set up the successor map
        ren = {s: Sym(_jet_name(s, 0)) for s in base_syms + [w]}
        e = subst(rhs, ren)
        succ = {}
        for s in base_syms + [w]:
            for k in range(need + 2):
                succ[_jet_name(s, k)] = Sym(_jet_name(s, k + 1))

        w_jets: list[np.ndarray] = []
        for m in range(need + 1):
            known = sorted(free_symbols(e) - set(params)
                           - {_jet_name(w, m)})
            cols = []
            for s in known:
                base, _, ord_s = s.rpartition("_d")
                k = int(ord_s)
                col = (w_jets[k] if base == w
                       else jets[base][k])
                cols.append(col)
            order = [_jet_name(w, m)] + known
            if m == 0:
                target = jets[zs[i - 1]][1]
                Ffn = compile_fn(normalize(e), order, params)
                dFfn = compile_fn(normalize(diff(e, _jet_name(w, 0))),
                                  order, params)

                def F(vcols, _f=Ffn, _tg=target):
                    return _f(vcols) - _tg

                w_jets.append(_newton_grid(F, dFfn, cols, npts, i, t,
                                           reg_threshold))
            else:
                coeffs, rest = _affine_split(e, _jet_name(w, m))
                cfn = compile_fn(coeffs, order, params)
                rfn = compile_fn(rest, order, params)
                zero = np.zeros(npts)
                cval = cfn([zero] + cols)
                rval = rfn([zero] + cols)
                target = jets[zs[i - 1]][m + 1]
                cval = np.broadcast_to(cval, (npts,))
                j = int(np.argmin(np.abs(cval)))
                if abs(cval[j]) < reg_threshold:
                    raise RegularityError(
                        f"regularity |r_{i}| = {abs(cval[j]):.3e} < "
                        f"{reg_threshold} at t = {t[j]:.6g}",
                        t=float(t[j]), index=i)
                w_jets.append((target - rval) / cval)
            if m < need:
                e = _total_derivative(e, succ)
        jets[zs[i]] = w_jets

    z = np.column_stack([jets[zs[i]][0] for i in range(n)])
    v = np.column_stack([jets["v1"][0], jets[zs[n - 2]][1]])

    x = u = None
    if chart.inverse is not None:
        x = _x_from_z(chart, z, params)
        xs = chart.x_frame.states
        xcols = [x[:, j] for j in range(n)]
        a_val = [np.broadcast_to(compile_fn(a, xs, params)(xcols), (npts,))
                 for a in real.feedback.alpha]
        b_val = [[np.broadcast_to(compile_fn(b, xs, params)(xcols), (npts,))
                  for b in row] for row in real.feedback.beta]
        u = np.column_stack([
            a_val[0] + b_val[0][0] * v[:, 0] + b_val[0][1] * v[:, 1],
            a_val[1] + b_val[1][0] * v[:, 0] + b_val[1][1] * v[:, 1],
        ])

    return Trajectory(t=t.copy(), z=z, x=x, v=v, u=u,
                      meta={"reconstructed": True})


def _affine_split(e: Expr, sym: str) -> tuple[Expr, Expr]:
    """e = coeff*sym + rest with rest free of sym (sym enters jets
    linearly at top order, so this never loses anything)."""
    coeff_map, rest = linear_decompose(e, [sym])
    return coeff_map.get(sym, ZERO), rest

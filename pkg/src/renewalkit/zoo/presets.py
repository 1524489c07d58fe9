"""Named ready-to-run examples with claim-versus-measured tables."""
import inspect
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError
from ..kernels import TimeGrid
from . import adaptation, ffl, hopfield, polymer

__all__ = ["ClaimRow", "DemoResult", "PRESETS", "run_preset", "mean_time_regime_params"]


@dataclass(frozen=True)
class ClaimRow:
    quantity: str
    claim: str
    measured: float
    tolerance: str
    ok: bool


@dataclass
class DemoResult:
    name: str
    rows: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (columns, 2-D array)

    def add(self, quantity, claim, measured, tolerance, ok):
        self.rows.append(ClaimRow(quantity, claim, float(measured), tolerance, bool(ok)))

    @property
    def all_ok(self):
        return all(r.ok for r in self.rows)

    def summary(self):
        head = ("quantity", "claim", "measured", "tolerance", "ok")
        body = [(r.quantity, r.claim, f"{r.measured:.12g}", r.tolerance, "yes" if r.ok else "no")
                for r in self.rows]
        widths = [max(len(x[i]) for x in [head] + body) for i in range(5)]
        fmt = "  ".join("{:<%d}" % w for w in widths)
        lines = [f"== {self.name} ==", fmt.format(*head)]
        lines += [fmt.format(*row) for row in body]
        return "\n".join(lines)


def _rel(x, ref):
    return abs(x - ref) / abs(ref)


def mean_time_regime_params():
    """Parameters inside the regime where the mean-time ratio approaches ``theta^2``
    (slow activation, fast unbinding, ``beta e^{E1} << alpha << e^{E1}``)."""
    p = hopfield.HopfieldParams(alpha=1e-3, beta=1e-7, Q=1e4, mu=0.0, lam=1e-4,
                                E1=np.log(100.0), E2=np.log(1e5))
    pb = p.with_energies(np.log(400.0), np.log(4e5))
    return p, pb


def random_hopfield_pairs(rng, count=100):
    """Random parameter pairs (log-uniform rates, preferred substrate first)."""
    out = []
    for _ in range(count):
        lo = lambda a, b: float(10 ** rng.uniform(a, b))
        E1 = rng.uniform(-1.0, 2.0)
        gap = rng.uniform(0.1, 2.0)
        shift = rng.uniform(-1.0, 3.0)
        p = hopfield.HopfieldParams(alpha=lo(-3, 0), beta=lo(-3, 0), Q=lo(0, 3), mu=lo(-3, 0),
                                    lam=lo(-3, 0), E1=E1, E2=E1 + shift)
        out.append((p, p.with_energies(E1 + gap, E1 + gap + shift)))
    return out


def hopfield_fig4(seed=42):
    res = DemoResult("hopfield-fig4")
    eps, s = 0.01, 0.5
    p, pb = hopfield.reference_params(eps, s)
    grids = []
    for q in (p, pb):
        slow = float(np.min(np.abs(np.linalg.eigvals(q.generator()).real)))
        grids.append(np.ceil(12.0 / slow))
    t_max = float(max(grids))
    grid = TimeGrid(t_max, t_max / 100000)
    d = hopfield.hopfield_discrimination(p, pb, grid)
    r = hopfield.hopfield_response(p, grid)
    rb = hopfield.hopfield_response(pb, grid)
    theta2 = d.theta**2
    target = eps**s / p.xi**2
    res.add("P_inf (Laplace)", f"{target:g} within 15%", d.P, "15% rel", _rel(d.P, target) <= 0.15)
    res.add("P_inf quadrature - Laplace", "0", r.P_quadrature - r.P_laplace, "1e-6 abs",
            abs(r.P_quadrature - r.P_laplace) <= 1e-6)
    res.add("ratio P_bar/P (Laplace)", f"theta^2 = {theta2:g} within 15%", d.ratio, "15% rel",
            _rel(d.ratio, theta2) <= 0.15)
    res.add("ratio - theta^2", ">= 0", d.ratio - theta2, "lower bound", d.ratio >= theta2)
    res.add("ratio P_bar/P (quadrature)", "equals Laplace ratio", d.ratio_quadrature, "1e-5 rel",
            _rel(d.ratio_quadrature, d.ratio) <= 1e-5)
    res.add("T/T_bar, these parameters (mu=0)", f"theta^2 = {theta2:g} within 20%", d.time_ratio,
            "20% rel (regime not met)", _rel(d.time_ratio, theta2) <= 0.2)
    q, qb = mean_time_regime_params()
    tr = hopfield.hopfield_mean_time(q) / hopfield.hopfield_mean_time(qb)
    th2 = np.exp(-2 * (qb.E1 - q.E1))
    res.add("T/T_bar, mean-time regime", f"theta^2 = {th2:g} within 20%", tr, "20% rel", _rel(tr, th2) <= 0.2)
    one = hopfield.HopfieldParams(alpha=0.0, beta=p.beta, Q=1.0, mu=p.mu, lam=p.lam, E1=p.E1, E2=p.E2)
    single = hopfield.hopfield_yield(one.with_energies(pb.E1, pb.E2)) / hopfield.hopfield_yield(one)
    res.add("single-step ratio (alpha=0)", f"about theta = {d.theta:g}", single, "reported", True)
    worst = min(hopfield.hopfield_discrimination(a, b, quadrature=False).ratio
                / np.exp(-2 * (b.E1 - a.E1)) for a, b in random_hopfield_pairs(np.random.default_rng(seed)))
    res.add(f"min ratio/theta^2 over 100 random draws (seed {seed})", ">= 1", worst, "lower bound", worst >= 1.0)
    stride = max(1, grid.n // 2000)
    res.tables["hopfield_response"] = (["t", "Phi", "Phi_bar"],
                                       np.column_stack([grid.nodes, r.phi, rb.phi])[::stride])
    return res


def polymer_front_demo(t_max=200.0, dt=0.05, L_max=260):
    res = DemoResult("polymer-front")
    grid = TimeGrid(t_max, dt)
    t = grid.nodes
    kernels = {"exponential": np.exp(-t), "erlang2": 4 * t * np.exp(-2 * t),
               "erlang5": polymer.erlang_kernel(5, 1.0, t)}
    fronts, profiles = [grid.nodes], [np.arange(1, L_max + 1)]
    for name, psi in kernels.items():
        out = polymer.polymer_front(psi, grid, L_max)
        res.add(f"front speed ({name})", f"1/mu = {1 / out.mu:.6g} within 5%", out.speed, "5% rel",
                _rel(out.speed, 1 / out.mu) <= 0.05 and not out.boundary_hit)
        res.add(f"plateau ({name})", f"mu = {out.mu:.6g} within 5%", out.plateau, "5% rel",
                _rel(out.plateau, out.mu) <= 0.05)
        fronts.append(out.front.astype(float))
        profiles.append(out.n[-1])
    stride = max(1, grid.n // 2000)
    res.tables["polymer_front"] = (["t"] + [f"front[{k}]" for k in kernels], np.column_stack(fronts)[::stride])
    res.tables["polymer_profile"] = (["l"] + [f"n[{k}]" for k in kernels], np.column_stack(profiles))
    return res


def adaptation_demo(dt=1e-3):
    res = DemoResult("adaptation")
    grid = TimeGrid(40.0, dt)
    main = adaptation.AdaptationParams(2.0, 3.0)
    ref = adaptation.AdaptationParams(1.0, 3.0)
    for prm in (main, ref):
        phi = adaptation.adaptation_kernel(prm, grid.nodes)
        tag = f"a={prm.a:g}, b={prm.b:g}"
        res.add(f"Phi(0) ({tag})", f"b = {prm.b:g}", phi[0], "1e-12 abs", abs(phi[0] - prm.b) <= 1e-12)
        integral = float(adaptation.adaptation_kernel_integral(prm, 40.0))
        res.add(f"int_0^40 Phi ({tag})", "0", integral, "1e-6 abs", abs(integral) <= 1e-6)
        out = adaptation.adaptation_response(prm, grid, 2 * prm.b)
        late = float(np.abs(out.X[grid.nodes >= 20.0] - 1.0).max())
        res.add(f"max |X-1|, t>=20, step to 2b ({tag})", "0", late, "1e-4 abs", late <= 1e-4)
        if prm is main:
            res.tables["adaptation"] = (["t", "Phi", "X"], np.column_stack([grid.nodes, phi, out.X])[::10])
    flat = adaptation.adaptation_response(main, grid, main.b)
    res.add("max |X-1| for s = b", "0", float(np.abs(flat.X - 1).max()), "exact", np.all(flat.X == 1.0))
    return res


def ffl_fig6(dt=0.01):
    res = DemoResult("ffl-fig6")
    prm = ffl.FFLParams(5.0, 1.0, 5.0)
    coarse = np.linspace(0.0, 3.0, 61)
    K = ffl.ffl_kernel(prm, coarse[:, None], coarse[None, :])
    res.add("min K(eta, xi) on grid", ">= 0", K.min(), "1e-15 abs", K.min() >= -1e-15)
    grid = TimeGrid(5.0, dt)
    sig = lambda t: 1.0 + np.sin(t)
    out = ffl.ffl_response(prm, grid, sig)
    res.add("sup |Z_kernel - Z_ode|", f"<= 5 dt = {5 * dt:g}", out.deviation, "5 dt", out.deviation <= 5 * dt)
    lg = TimeGrid(5.0, 1e-3)
    lim = ffl.ffl_limit_response(lg, 1.0)
    err = float(np.abs(lim - (1 - np.exp(-lg.nodes))).max())
    res.add("limit step-on vs 1 - e^{-tau}", "0", err, "1e-6 abs", err <= 1e-6)
    fast = ffl.FFLParams(200.0, 1.0, 200.0)
    tau, xi, _ = ffl.ffl_step_off(fast, 2.0, 4.0)
    after = float(np.abs(xi[tau >= 2.05]).max())
    res.add("step-off xi(tau), tau >= t_off + 0.05 (a=c=200)", "0", after, "1e-3 abs", after <= 1e-3)
    rise = ffl.ffl_ode(fast, lg, lambda _: 1.0)[:, 2] * fast.a**2 * fast.b * fast.c
    on_err = float(np.abs(rise - (1 - np.exp(-lg.nodes))).max())
    res.add("step-on ODE vs 1 - e^{-tau} (a=c=200)", "O(1/a)", on_err, "5/a abs", on_err <= 5 / fast.a)
    eta, xx = np.meshgrid(coarse, coarse, indexing="ij")
    res.tables["ffl_kernel"] = (["eta", "xi", "K"], np.column_stack([eta.ravel(), xx.ravel(), K.ravel()]))
    res.tables["ffl_response"] = (["t", "Z_kernel", "Z_ode"], np.column_stack([grid.nodes, out.Z_kernel, out.Z_ode]))
    res.tables["ffl_step_off"] = (["tau", "xi"], np.column_stack([tau, xi])[::10])
    return res


def nonlinear_polymer_demo(dt=1e-3, t_max=20.0, L_max=30):
    res = DemoResult("nonlinear-polymer")
    grid = TimeGrid(t_max, dt)
    t = grid.nodes
    zero = polymer.nonlinear_polymer(polymer.erlang_kernel(4, 0.05, t), 0.0, grid, L_max)
    res.add("max state, S = 0 and zero data", "0", float(max(np.abs(zero.n).max(), np.abs(zero.w).max())),
            "exact", not zero.n.any() and not zero.w.any())
    bd = polymer.becker_doring_reference(1.0, grid, L_max)
    devs = []
    for width in (0.05, 0.025):
        run = polymer.nonlinear_polymer(polymer.erlang_kernel(4, width, t), 1.0, grid, L_max)
        dev = float(np.abs(run.n - bd).max())
        devs.append(dev)
        res.add(f"mass residual per unit time (mean delay {width:g})", f"<= 10 dt = {10 * dt:g}",
                run.mass_residual(), "10 dt", run.mass_residual() <= 10 * dt)
        res.add(f"sup |n - n_instant| (mean delay {width:g})", "O(delay)", dev, "reported", True)
        if width == 0.05:
            keep = run
    res.add("deviation ratio when the delay halves", "about 2", devs[0] / devs[1], "1.5 .. 2.5",
            1.5 <= devs[0] / devs[1] <= 2.5)
    cols = [t, keep.n[:, 0], keep.total_mass()] + [keep.n[:, k] for k in range(1, 5)]
    res.tables["nonlinear_polymer"] = (["t", "n[1]", "mass", "n[2]", "n[3]", "n[4]", "n[5]"],
                                       np.column_stack(cols)[::20])
    return res


PRESETS = {
    "hopfield-fig4": hopfield_fig4,
    "polymer-front": polymer_front_demo,
    "adaptation": adaptation_demo,
    "ffl-fig6": ffl_fig6,
    "nonlinear-polymer": nonlinear_polymer_demo,
}


def run_preset(name, seed=42):
    try:
        fn = PRESETS[name]
    except KeyError:
        raise InputError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    if "seed" in inspect.signature(fn).parameters:
        return fn(seed=seed)
    return fn()

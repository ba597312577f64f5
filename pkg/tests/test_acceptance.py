"""Acceptance criteria, one test each; a pass/fail line per criterion is
printed in the terminal summary."""
import math
import time

import numpy as np

from pmthermo.hofbauer import (build_extension, direct_full_branch, induced_pipeline,
                               level_R_induced, tower_params)
from pmthermo.maps import quadratic, tent
from pmthermo.stability import (entry_time, evvn_check, exo1_experiment, kappa_vn,
                                keller_experiment, measure_distance, usc_entropy_check)
from pmthermo.symbolic import (find_tent_parameter, kneading, kneading_order,
                               topological_entropy)
from pmthermo.thermo import (gibbs_weights, markov_gibbs, markov_pressure, pressure_curve,
                             solve_pressure, spread, stats, tail_exponent)
from pmthermo.ulam import chebyshev_cell_masses, ulam_acip

LOG2 = math.log(2)
REPORT = {}


def record(n, name, checks, detail=""):
    ok = all(checks.values())
    bad = [k for k, v in checks.items() if not v]
    line = f"criterion {n:2d} {name}: {'PASS' if ok else 'FAIL'}"
    if bad:
        line += " [failed: " + ", ".join(bad) + "]"
    if detail:
        line += " | " + detail
    REPORT[n] = line
    print(line)
    assert ok, line


def test_01_chebyshev():
    t0 = time.time()
    f = quadratic(4)
    u = ulam_acip(f, 4096)
    l1 = float(np.abs(u.density.cell_mass - chebyshev_cell_masses(4096)).sum())
    ind = level_R_induced(f, 8, 40)
    p, _ = markov_pressure(ind, 1.0)
    s = stats(ind, markov_gibbs(ind, 1.0), 1.0)
    dt = time.time() - t0
    record(1, "Chebyshev suite", {
        "density L1 <= 5%": l1 <= 0.05,
        "lambda log2 +-1%": abs(u.lam / LOG2 - 1) <= 0.01,
        "p(1) = 0 +- 2e-3": abs(p) <= 2e-3,
        "h log2 +-2%": abs(s.entropy / LOG2 - 1) <= 0.02,
        "runtime <= 60 s": dt <= 60},
        f"L1={l1:.4f} lambda={u.lam:.6f} p(1)={p:.2e} h={s.entropy:.6f} {dt:.1f}s")


def test_02_affine_closed_form():
    fb = direct_full_branch(tent(2))
    ts = np.linspace(-1, 2, 61)
    err = max(abs(solve_pressure(fb, t)[0] - (1 - t) * LOG2) for t in ts)
    record(2, "affine closed form", {"|p - (1-t)log2| <= 1e-10": err <= 1e-10},
           f"max error {err:.2e} over {len(ts)} t values in [-1, 2]")


def test_03_pressure_derivative():
    ts = np.round(np.arange(0.1, 0.901, 0.05), 10)
    pc = pressure_curve(tent(1.9), ts, R=4, tau_max=40)
    dp = (pc.p_values[2:] - pc.p_values[:-2]) / (ts[2:] - ts[:-2])
    inner = ts[1:-1]
    sel = (inner >= 0.2 - 1e-9) & (inner <= 0.8 + 1e-9)
    gap = float(np.max(np.abs(dp + pc.lambda_values[1:-1])[sel]))
    conv = pc.convexity_defect()
    record(3, "pressure derivative", {
        "all resolved": bool(np.all(pc.resolved)),
        "|p' + lambda| <= 1e-3": gap <= 1e-3,
        "convex": conv >= -1e-8},
        f"max gap {gap:.2e}, min second difference {conv:.2e}")


def test_04_counting_bounds():
    t0 = time.time()
    f = quadratic(3.9)
    g = build_extension(f, 12)
    ind = level_R_induced(f, 12, 40, graph=g)
    rep = ind.counting_check()
    eps = tower_params(12, 2, strict=False).epsilon
    every = {n: c for n, c in rep.counts.items() if c > math.exp(n * eps)}
    dt = time.time() - t0
    record(4, "counting bounds", {
        "explicit bound, every n": not rep.exceed_explicit,
        "exp(n eps) for n >= n0": rep.ok,
        "exp(n eps) for every enumerated n": not every,
        "domains <= (2dR)^2": len(g.domains) <= (2 * 2 * 12) ** 2,
        "runtime <= 120 s": dt <= 120},
        f"n0={rep.n0}, counts above exp(n eps) at n={sorted(every)}, "
        f"{len(g.domains)} domains, {dt:.1f}s")


def test_05_kac():
    ind = level_R_induced(quadratic(3.9), 12, 40)
    w = markov_gibbs(ind, 1.0)
    bound = 1.0 / tower_params(12, 2, strict=False).eta + w.budget
    record(5, "Kac bound", {"mean tau <= 1/eta + budget": w.mean_tau <= bound},
           f"mean tau {w.mean_tau:.4f} <= {bound:.4f}")


def test_06_exponential_tails():
    _, ind, fb = induced_pipeline(quadratic(3.9), 2, 24)
    p, _ = markov_pressure(ind, 1.0)
    slope, ns, _ = tail_exponent(fb, gibbs_weights(fb, 1.0, p=p))
    record(6, "exponential tails", {"fitted exponent < 0": slope < 0},
           f"slope {slope:.4f} over tau0 in [{ns[len(ns) // 2]}, {ns[-1]}]")


def test_07_kneading():
    golden = (1 + math.sqrt(5)) / 2
    s = find_tent_parameter(prefix="RLC")
    rng = np.random.default_rng(7)
    pairs = np.sort(rng.uniform(1.01, 2.0, (50, 2)), axis=1)
    mono = all(kneading_order(kneading(a, 40).word, kneading(b, 40).word) <= 0
               for a, b in pairs)
    ent = {sl: topological_entropy(tent(sl), 16).value for sl in (1.3, 1.5, 1.7, 1.9, 2.0)}
    worst = max(abs(v / math.log(sl) - 1) for sl, v in ent.items())
    record(7, "kneading suite", {
        "golden slope to 1e-9": abs(s - golden) <= 1e-9,
        "monotone on 50 pairs": mono,
        "entropy within 2%": worst <= 0.02},
        f"|s - golden|={abs(s - golden):.1e}, worst entropy error {worst:.2%}")


def test_08_entry_times():
    e = entry_time(0.5, 10, 0)
    k = kappa_vn(1, 2)
    rows = evvn_check(range(3, 9), n_x=100)
    worst = max(r[-1] for r in rows)
    record(8, "entry-time machinery", {
        "e = 6": e == 6,
        "kappa(1,2) golden to 1e-10": abs(k - (math.sqrt(5) - 1) / 2) <= 1e-10,
        "+3 inequality": worst <= 0},
        f"e={e}, kappa error {abs(k - (math.sqrt(5) - 1) / 2):.1e}, worst excess {worst}")


def test_09_keller():
    t0 = time.time()
    res = keller_experiment([0.4, 0.2, 0.1, 0.05])
    dt = time.time() - t0
    lam_err = max(abs(s.lam / e - 1) for s, e in zip(res.stats, res.extra["lambda_expected"]))
    w1 = res.extra["w1_tip"]
    record(9, "Keller instability", {
        "lambda = log(2 - eps) +- 1%": lam_err <= 0.01,
        "W1 to tip decreasing": all(b < a for a, b in zip(w1[:-1], w1[1:])),
        "entropy >= log 1.5": min(res.entropy) >= math.log(1.5),
        "runtime <= 60 s": dt <= 60},
        "W1 " + ", ".join(f"{x:.3f}" for x in w1)
        + f"; jump to limit-map acip {res.extra['jump']:.3f}")


def test_10_exo1_limit():
    t0 = time.time()
    res = exo1_experiment(1.0, [8, 10, 12, 14])
    dt = time.time() - t0
    rows = res.extra["rows"]
    target = res.extra["target"]
    mass = [r["mass_near"] for r in rows]
    dist = [abs(m - target) for m in mass]
    detail = ("engineering tolerance 0.05; mass near 1/3 (scaled radius) "
              + ", ".join(f"{m:.3f}" for m in mass)
              + "; radius 1/k " + ", ".join(f"{r['mass_near_inv_k']:.3f}" for r in rows)
              + "; W1 to predicted limit " + ", ".join(f"{r['limit_w1']:.3f}" for r in rows)
              + f"; {dt:.0f}s")
    record(10, "exo1 limit", {
        "all k resolved": len(rows) == 4,
        "monotone toward 0.5": all(b < a for a, b in zip(dist[:-1], dist[1:])),
        "0.5 +- 0.05 at k=14": bool(dist) and dist[-1] <= 0.05,
        "tails e^-j/4, e^-j/8": res.extra["tails_ref"]["ok_E"] and res.extra["tails_ref"]["ok_R"]
        and all(r["tails_ok_E"] and r["tails_ok_R"] for r in rows),
        "runtime <= 10 min": dt <= 600},
        detail)


def test_11_oracle_agreement():
    out = {}
    for name, f, R in (("quadratic(4)", quadratic(4), 8), ("tent(1.9)", tent(1.9), 4)):
        ind = level_R_induced(f, R, 40)
        m, _ = spread(ind, markov_gibbs(ind, 1.0), 4096)
        out[name] = measure_distance(m, ulam_acip(f, 4096).density)
    record(11, "oracle cross-agreement", {f"{k} W1 <= 0.02": v <= 0.02 for k, v in out.items()},
           ", ".join(f"{k} W1={v:.2e}" for k, v in out.items()))


def test_12_usc():
    seq = [4 - 2.0 ** -k for k in range(1, 9)] + [4.0]
    rep = usc_entropy_check("quadratic", seq, t=1.0, R=8, tau_max=40)
    record(12, "USC diagnostic", {"margin >= -bracket": rep["ok"],
                                  "margin >= 0": rep["margin"] >= 0},
           f"margin {rep['margin']:.4f}, bracket {rep['bracket']:.4f}, "
           f"{len(rep['notes'])} parameter(s) excluded")

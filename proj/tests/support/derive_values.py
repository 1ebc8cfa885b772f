"""Reference values for the bound and divergence tests, computed with mpmath at
50 digits. Run once; the printed numbers are pasted into tests/unit."""
from mpmath import mp, mpf, sqrt, log, log1p, exp, ceil, e

mp.dps = 50


def main_bound(k, n, d, p, K, eps, delta, c, C, J, W, Lg=None):
    lg = k["Lg"] if Lg is None else Lg
    inner = p * log1p(8 * J * W * (k["d"] * k["Lg"] * K + k["Lphi"] + k["gamma"]) / eps) + log(5 * K / delta)
    return eps / (32 * C * K * k["d"] * lg * sqrt(2 * c)) * sqrt(n * d / inner)


def sample_size(k, K, r, eps, delta):
    main = 300 * log(10 * K / delta) / eps**2 * (k["m1"] + k["m2"] + 2 * max(3 * k["gamma"], k["m3"]) * (k["m0"] + k["a0"]))**2
    mix = 2048 * K**2 * k["gamma"]**2 * r * k["d"]**2 * log(10 * K * r / delta) / eps**2
    return main, mix, ceil(max(main, mix))


def failure(k, n, d, p, K, r, eps, delta, c, C, J, W, L, pre_softmax=False):
    lg = 2 if pre_softmax else k["Lg"]
    nu = eps / (2 * (k["d"] * k["Lg"] * K + k["Lphi"] + k["gamma"]))
    net_log = p * log1p(4 * W * J / nu)
    e_ = eps / 8 if r == 1 else eps / 16
    terms = {"term_net": K * exp(net_log - n * d * e_**2 / (2 * c * C**2 * K**2 * k["d"]**2 * L**2 * lg**2))}
    if r > 1:
        terms["term_mixture"] = 2 * K * r * exp(-n * (eps / 16)**2 / (8 * K**2 * k["gamma"]**2 * r * k["d"]**2))
    for name in ("M0", "M1", "M2"):
        terms["term_" + name] = 2 * K * exp(-2 * n * (eps / 8)**2 / k[name]**2)
    return nu, net_log, terms, sum(terms.values())


def show(label, v):
    print(f"{label} = {mp.nstr(v, 20)}")


# Case A: scalar square loss, M = 1.
A = dict(d=mpf(2), Lg=mpf(2), Lphi=mpf(2), gamma=mpf(2), m0=mpf(1), a0=mpf(1), m1=mpf(1), m2=mpf(1), m3=mpf(2))
A.update(M0=A["m1"] + A["m2"] + A["m3"] * (A["m0"] + A["a0"]), M1=2 * A["m3"] * (A["m0"] + A["a0"]),
         M2=6 * A["gamma"] * (A["m0"] + A["a0"]))
a = dict(n=mpf(10)**6, d=mpf(100), p=mpf(10)**4, K=1, eps=mpf("0.1"), delta=mpf("0.1"), c=mpf(1), C=mpf(2), J=mpf(10), W=mpf(50))
show("A.L_floor", main_bound(A, **a))
m, x, cnt = sample_size(A, 1, 1, a["eps"], a["delta"])
show("A.n_main", m); show("A.n_mixture", x); show("A.n_required", cnt)
nu, nl, t, tot = failure(A, a["n"], a["d"], a["p"], 1, 1, a["eps"], a["delta"], a["c"], a["C"], a["J"], a["W"], mpf(5))
show("A.nu", nu); show("A.net_log", nl)
for k_, v in t.items(): show("A." + k_, v)
show("A.log_term_net", log(t["term_net"]))
show("A.total", tot)

# Case B: made-up constants, K = 2, three mixture components.
B = dict(d=mpf(1), Lg=mpf("14.7"), Lphi=mpf("3.1"), gamma=mpf("3.1"), m0=mpf(1), a0=mpf("0.9"), m1=mpf("0.69"),
         m2=mpf("0.6"), m3=mpf("4.6"))
B.update(M0=B["m1"] + B["m2"] + B["m3"] * (B["m0"] + B["a0"]), M1=2 * B["m3"] * (B["m0"] + B["a0"]),
         M2=6 * B["gamma"] * (B["m0"] + B["a0"]))
b = dict(n=mpf(5) * 10**7, d=mpf(20), p=mpf(300), K=2, eps=mpf("0.2"), delta=mpf("0.05"), c=mpf(1), C=mpf(2), J=mpf(4), W=mpf(7))
show("B.L_floor", main_bound(B, **b))
show("B.L_floor_pre_softmax", main_bound(B, **b, Lg=mpf(2)))
m, x, cnt = sample_size(B, 2, 3, b["eps"], b["delta"])
show("B.n_main", m); show("B.n_mixture", x); show("B.n_required", cnt)
for pre in (False, True):
    nu, nl, t, tot = failure(B, b["n"], b["d"], b["p"], 2, 3, b["eps"], b["delta"], b["c"], b["C"], b["J"], b["W"], mpf("0.3"), pre)
    tag = "B.pre" if pre else "B"
    show(tag + ".nu", nu); show(tag + ".net_log", nl)
    for k_, v in t.items(): show(tag + "." + k_, v)
    show(tag + ".log_term_net", log(t["term_net"]))
    show(tag + ".total", tot)

# Corollaries.
K, M, J, W, n, d, p, eps, delta, c, C, r = 2, mpf("1.5"), mpf(3), mpf(20), mpf(10)**5, mpf(50), mpf(1000), mpf("0.3"), mpf("0.1"), mpf(1), mpf(2), 1
reg = eps / (128 * C * K * M * sqrt(2 * c)) * sqrt(n * d / (p * log1p(64 * J * W * K * M / eps) + log(5 * K / delta)))
show("reg.value", reg)
show("reg.n_condition", 202800 * M**4 * K**3 * r * log(10 * K * r / delta) / eps**2)

K, M, alpha, r = 3, mpf(1), mpf("0.1"), 2
t2 = sqrt(K) * (1 + 2 * M + log(K))
gen = eps / (32 * C * K**2 * exp(2 * M) * sqrt(2 * c)) * sqrt(n * d / (p * log1p(8 * J * W * (exp(2 * M) * K**2 + 2 * t2) / eps) + log(5 * K / delta)))
imp = eps / (64 * C * K * sqrt(2 * c)) * sqrt(n * d / (p * log1p(8 * J * W * (exp(2 * M) * K**2 + t2) / eps) + log(5 * K / delta)))
show("cls.generic", gen)
show("cls.improved", imp)
show("cls.n_condition", 58800 * K**3 * r * log(10 * K * r / delta) / eps**2 * max(1 + 2 * M + log(K), 1 + abs(log(alpha)))**2)

# Divergences.
y1 = [mpf("0.2"), mpf("0.5"), mpf("0.3")]
y2 = [mpf("0.1"), mpf("0.6"), mpf("0.3")]
show("kl", sum(a_ * log(a_ / b_) - a_ + b_ for a_, b_ in zip(y1, y2)))
show("xent_onehot", -log(mpf("0.6")))
p_, q_ = mpf("0.3"), mpf("0.8")
show("binary", p_ * log(p_ / q_) + (1 - p_) * log((1 - p_) / (1 - q_)))
A2 = [[mpf(2), mpf("0.5")], [mpf("0.5"), mpf(1)]]
v = [mpf("0.7"), mpf("-1.2")]
show("mahalanobis", sum(v[i] * A2[i][j] * v[j] for i in range(2) for j in range(2)))

import numpy as np

from abconformal import (PhiFunction, RandersModel, ab_metric, check_ab_system, check_conformal_finsler,
                         conformal_field, draw_samples, flow_check)
from abconformal.catalog import ModelParams

# A flat Randers metric: alpha is Euclidean and beta is a constant 1-form.
e = np.array([0.3, 0.0, 0.2])
model = RandersModel(0.0, 0.0, e, 3)
alpha, beta = model.alpha, model.beta
print(model)

# A homothetic field: dilation with rate tau, a rotation Q that fixes e, and a translation gamma.
Q = np.array([[0.0, 0.2, 0.0], [-0.2, 0.0, 0.3], [0.0, -0.3, 0.0]])
Q -= np.outer(Q @ e, e) / (e @ e) - np.outer(e, Q @ e) / (e @ e)   # kill the e-component
print("Q e =", Q @ e)
params = ModelParams(lam=0.0, mu=0.0, e=e, tau=0.1, Q=Q, gamma=np.array([0.0, 0.1, 0.0]))
V, c = conformal_field("thm2_i", params, 3)
print("conformal factor at origin:", c(np.zeros((1, 3)))[0])

# Both equations of the pair system hold on random points.
S = draw_samples(3, 500, seed=0)
report = check_ab_system(alpha, beta, V, c, S)
print(report.name, report.passed, report.max_residual)

# Any phi gives a conformal (alpha, beta)-metric for the same field.
for phi in (PhiFunction.randers(), PhiFunction.square()):
    print(phi, check_conformal_finsler(ab_metric(alpha, beta, phi), V, c, S).max_residual)

# Along the flow, F scales by exp(-2 c t).
F = ab_metric(alpha, beta, PhiFunction.randers())
t = np.linspace(0.0, 1.0, 11)
report = flow_check(F, V, c, np.array([0.1, 0.0, -0.1]), np.array([0.0, 1.0, 0.5]), t)
print("flow residual:", report.max_residual)

# Breaking Qe = 0 by hand shows up in the beta equation.
bad = ModelParams(lam=0.0, mu=0.0, e=e, tau=0.1, Q=np.array([[0, 0.2, 0], [-0.2, 0, 0], [0, 0, 0]]),
                  gamma=np.zeros(3))
try:
    conformal_field("thm2_i", bad, 3)
except Exception as err:
    print("rejected:", err)

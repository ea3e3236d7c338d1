"""
Evaluating the recovery guarantees
==================================

The guarantees come with constants that can be computed from the RIP
constants and the step size. Where the stated constant and the constant that
its own derivation produces disagree, both are reported.
"""

from nliht import (
    KSparse,
    ProblemSpec,
    Variant,
    admissible_step_niht,
    corollary1_report,
    estimate_C,
    estimate_rip,
    generate_problem,
    lemma1_constants,
    theorem2_report,
)
from nliht.errors import InfeasibleStep

# A tall, well-conditioned problem where a valid step size exists.
problem = generate_problem(ProblemSpec(N=16, M=800, k=1, nonlinearity="sine", h_scale=0.01, seed=0))
A = KSparse(16, 1)
rip = estimate_rip(problem.model, A, trials=2000, seed=0)
C = estimate_C(problem.model, A, trials=2000, seed=0)
print(f"alpha_hat={rip.alpha_hat:.4f} beta_hat={rip.beta_hat:.4f} C_hat={C.empirical:.2e} "
      f"(analytic {C.analytic:.3g}, via mean value theorem {C.analytic_rigorous:.3g})")

window = admissible_step_niht(rip.alpha_hat, rip.beta_hat, C.empirical)
print(f"admissible step sizes {window}")

for variant, rep in corollary1_report(rip.alpha_hat, window.largest, C.empirical, 0.1).items():
    print(f"{variant.value:22s} constant={rep.constant:.4g} bound={rep.error_bound:.4g} flags={rep.flags}")

# The same calculation on the usual 128 x 256 ensemble has no admissible step.
wide = generate_problem(ProblemSpec(N=256, M=128, k=8, seed=0))
w = estimate_rip(wide.model, KSparse(256, 8), trials=2000, seed=0)
try:
    admissible_step_niht(w.alpha_hat, w.beta_hat)
except InfeasibleStep as exc:
    print("wide ensemble:", exc)

for variant, c in lemma1_constants(0.8, 1.2, 0.1).items():
    print(f"{variant.value:22s} Jacobian RIP constants [{c.lower:.4f}, {c.upper:.4f}]")

reps = theorem2_report(1.0, 0.9, 0.01, 1.0, 0.01)
print("projected gradient error bound:",
      {v.value: round(r.error_bound, 4) for v, r in reps.items()},
      "iterations:", reps[Variant.DERIVATION_CONSISTENT].k_star)

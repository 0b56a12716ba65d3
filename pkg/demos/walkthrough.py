"""Certify the cosh extremal step by step, then break the field on purpose.

Run with ``python3 demos/walkthrough.py``.
"""

from pathlib import Path

from varcert.certify import certify
from varcert.domain import sample
from varcert.hilbert import invariance_check
from varcert.problem import load_problem

HERE = Path(__file__).parent

p = load_problem(HERE / "cosh_field.vp")
rep = certify(p)
print(rep.summary())
print()

# The invariance defect is a discretisation error: it drops by about 4x per refinement.
for m in (33, 65, 129):
    q = p.with_overrides(resolution=m)
    st = invariance_check(q.field(), sample(q.grid(), list(q.y0)), 0.5, 20, 42, 4)
    print(f"m = {m:4d}   max relative deviation of I = {st.max_rel_dev:.2e}")
print()

# A nonconvex integrand fails at the convexity stage; the excess shows it too.
bad = certify(load_problem(HERE / "nonconvex.vp"), continue_on_failure=True)
print(bad.summary())

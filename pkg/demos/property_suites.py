"""Run the cheap property suites at small sizes and print the report.

Run from the repository root:  python demos/property_suites.py
The full-size runs live in tests/test_acceptance.py.
"""

from segavd.workbench import run_validation

names = ["lipschitz", "tensor", "lemma1", "eq8", "lemma2", "lemma4", "cor6", "lemma7", "lemma10"]
rep = run_validation(names, seed=7, configs=10, samples=200, pairs=50)
print(rep.to_text())
print("all passed" if rep.passed else "violations found")

"""Writes golden_problems.jsonl. Oracle values come from running each golden program in CPython."""
import cmath
import json
import math
import pathlib

HERE = pathlib.Path(__file__).parent

P = []


def add(pid, tag, level, topic, cats, statement, skeleton, golden, inputs, mutation=None):
    P.append(dict(id=pid, dataset_tag=tag, domain_level=level, topic_id=topic, task_types=cats,
                  statement=statement, skeleton=skeleton, golden_program=golden, inputs=inputs,
                  mutation=mutation))


# direct_calculation
add("fx-dc-01", "easy", "AU", "UG-1.1", ["direct_calculation"],
    "Determine the zero-point energy of a mode of frequency omega in units hbar = 1.",
    "def zero_point(omega: float) -> float:\n    pass\n",
    "def zero_point(omega):\n    return 0.5 * omega\n",
    [[1.0], [2.5], [0.1], [10.0]])
add("fx-dc-02", "easy", "GR", "GR-1.1", ["direct_calculation"],
    "Determine the tree-level decay width of phi -> chi chi with cubic coupling g/2 phi chi^2 for mass M and m.",
    "def width(g: float, M: float, m: float) -> float:\n    pass\n",
    "import math\n\ndef width(g, M, m):\n    beta = math.sqrt(1 - 4 * m * m / (M * M))\n    return g * g * beta / (32 * math.pi * M)\n",
    [[1.0, 10.0, 1.0], [0.5, 3.0, 1.0], [2.0, 100.0, 0.0], [0.1, 5.0, 2.4]])
add("fx-dc-03", "medium", "GR", "GR-2.1", ["direct_calculation"],
    "Find the Mandelstam variable t for elastic scattering of massless particles at energy squared s and angle theta.",
    "def mandelstam_t(s: float, theta: float) -> float:\n    pass\n",
    "import math\n\ndef mandelstam_t(s, theta):\n    return -s / 2 * (1 - math.cos(theta))\n",
    [[100.0, 0.0], [100.0, 3.141592653589793], [4.0, 1.0], [1e6, 0.5]])
add("fx-dc-04", "medium", "AG", "AG-1.1", ["direct_calculation"],
    "Determine the one-loop beta function coefficient of an SU(N) gauge theory with nf Dirac fermions in the fundamental.",
    "def b0(N: int, nf: int) -> float:\n    pass\n",
    "def b0(N, nf):\n    return 11 * N / 3 - 2 * nf / 3\n",
    [[3, 6], [2, 0], [3, 16], [5, 3]])
add("fx-dc-05", "easy", "PG", "PG-1.1", ["direct_calculation"],
    "Find the complex propagator 1/(p2 - m2 + i eps) for given p2, m2 and eps.",
    "def propagator(p2: float, m2: float, eps: float) -> complex:\n    pass\n",
    "def propagator(p2, m2, eps):\n    return 1 / complex(p2 - m2, eps)\n",
    [[2.0, 1.0, 0.1], [1.0, 1.0, 0.5], [-3.0, 1.0, 1e-3]])

# hidden_coefficient
add("fx-hc-01", "easy", "GR", "GR-3.1", ["hidden_coefficient"],
    "The counterterm is C lambda^2/(16 pi^2 eps) times n. Find C times n.",
    "def coefficient(n: int) -> float:\n    pass\n",
    "def coefficient(n):\n    C = 1 / 4\n    return C * n\n",
    [[1], [2], [3], [7]],
    mutation={"from": "C = 1 / 4", "to": "C = 1 / 3"})
add("fx-hc-02", "medium", "AU", "UG-2.1", ["hidden_coefficient"],
    "After the leading terms cancel, find the coefficient of x^2 in the expansion of sqrt(1 + a x).",
    "def x2_coefficient(a: float) -> float:\n    pass\n",
    "def x2_coefficient(a):\n    return -a * a / 8\n",
    [[1.0], [2.0], [-0.5], [3.0]])
add("fx-hc-03", "easy", "AG", "AG-2.1", ["hidden_coefficient"],
    "Identify the anomalous dimension coefficient gamma = c g^2/(16 pi^2) for a Yukawa theory with Nf flavours; return c.",
    "def gamma_coefficient(nf: int) -> float:\n    pass\n",
    "def gamma_coefficient(nf):\n    return 2 * nf + 0.5\n",
    [[1], [2], [3]])
add("fx-hc-04", "medium", "PG", "PG-2.1", ["hidden_coefficient"],
    "Find the coefficient of the log term in the one-loop effective potential, per real scalar of mass m.",
    "def log_coefficient(m: float) -> float:\n    pass\n",
    "import math\n\ndef log_coefficient(m):\n    return m ** 4 / (64 * math.pi ** 2)\n",
    [[1.0], [2.0], [0.5]])

# ratio_comparison
add("fx-rc-01", "easy", "GR", "GR-4.1", ["ratio_comparison"],
    "Find the ratio of muon to electron decay rates of a charged pion including helicity suppression.",
    "def rate_ratio(me: float, mmu: float, mpi: float) -> float:\n    pass\n",
    "def rate_ratio(me, mmu, mpi):\n    num = mmu ** 2 * (mpi ** 2 - mmu ** 2) ** 2\n    den = me ** 2 * (mpi ** 2 - me ** 2) ** 2\n    return num / den\n",
    [[0.000511, 0.1057, 0.1396], [0.001, 0.1, 0.2]])
add("fx-rc-02", "medium", "AU", "UG-3.1", ["ratio_comparison"],
    "Find the ratio of cross sections sigma(E2)/sigma(E1) for a process scaling as 1/E^2.",
    "def sigma_ratio(E1: float, E2: float) -> float:\n    pass\n",
    "def sigma_ratio(E1, E2):\n    return (E1 / E2) ** 2\n",
    [[1.0, 2.0], [10.0, 1.0], [3.0, 3.0]])
add("fx-rc-03", "easy", "PG", "PG-3.1", ["ratio_comparison"],
    "Find the ratio of the conformal factors at radii z1 and z2 for the metric ds^2 = (dx^2)/z^2.",
    "def factor_ratio(z1: float, z2: float) -> float:\n    pass\n",
    "def factor_ratio(z1, z2):\n    return z1 ** -2 / z2 ** -2\n",
    [[1.0, 2.0], [0.5, 4.0], [3.0, 1.5]],
    mutation={"from": "z1 ** -2 / z2 ** -2", "to": "z1 ** 2 / z2 ** 2"})
add("fx-rc-04", "medium", "AG", "AG-3.1", ["ratio_comparison"],
    "Determine the ratio of Thomson to Rayleigh scattering cross sections at frequency w and resonance w0.",
    "def thomson_over_rayleigh(w: float, w0: float) -> float:\n    pass\n",
    "def thomson_over_rayleigh(w, w0):\n    return (w0 / w) ** 4\n",
    [[1.0, 2.0], [0.1, 1.0], [5.0, 5.0]])

# categorical_classification
add("fx-cc-01", "easy", "GR", "GR-5.1", ["categorical_classification"],
    "Identify whether a coupling of mass dimension d is relevant, marginal or irrelevant.",
    "def classify(d: int) -> str:\n    \"\"\"Returns one of {'relevant', 'marginal', 'irrelevant'}.\"\"\"\n    pass\n",
    "def classify(d):\n    if d > 0:\n        return 'relevant'\n    if d == 0:\n        return 'marginal'\n    return 'irrelevant'\n",
    [[2], [0], [-1], [1]])
add("fx-cc-02", "medium", "AU", "UG-4.1", ["categorical_classification"],
    "Identify the statistics of a composite of n fermions.",
    "def statistics(n: int) -> str:\n    \"\"\"Returns one of ['boson', 'fermion'].\"\"\"\n    pass\n",
    "def statistics(n):\n    return 'fermion' if n % 2 else 'boson'\n",
    [[1], [2], [3], [0]])
add("fx-cc-03", "easy", "AG", "AG-4.1", ["categorical_classification"],
    "Identify the representation type of a field with SU(2) spin j.",
    "def rep_type(j2: int) -> str:\n    \"\"\"j2 is twice the spin. Returns one of {'integer', 'half-integer'}.\"\"\"\n    pass\n",
    "def rep_type(j2):\n    return 'half-integer' if j2 % 2 else 'integer'\n",
    [[1], [2], [0], [5]])
add("fx-cc-04", "medium", "PG", "PG-4.1", ["categorical_classification"],
    "Identify the value of (gamma5)^2 in the Dirac algebra, reported as a label.",
    "def gamma5_squared(dim: int) -> str:\n    \"\"\"Returns one of {'identity', 'minus_identity', 'zero'}.\"\"\"\n    pass\n",
    "def gamma5_squared(dim):\n    return 'identity'\n",
    [[4]],
    mutation={"from": "'identity'", "to": "'minus_identity'"})

# logical_consistency
add("fx-lc-01", "easy", "GR", "GR-6.1", ["logical_consistency"],
    "Determine whether a decay A -> B C is kinematically allowed.",
    "def allowed(mA: float, mB: float, mC: float) -> bool:\n    pass\n",
    "def allowed(mA, mB, mC):\n    return mA > mB + mC\n",
    [[3.0, 1.0, 1.0], [2.0, 1.0, 1.0], [1.0, 2.0, 0.0]])
add("fx-lc-02", "medium", "AU", "UG-5.1", ["logical_consistency"],
    "Determine whether a trace identity tr(gamma5 a b c d) with n gamma matrices vanishes.",
    "def trace_vanishes(n: int) -> bool:\n    pass\n",
    "def trace_vanishes(n):\n    return n < 4 or n % 2 == 1\n",
    [[0], [2], [4], [5], [6]])
add("fx-lc-03", "easy", "AG", "AG-5.1", ["logical_consistency"],
    "Determine whether the S-wave unitarity bound |a0| <= 1/2 holds for amplitude a0.",
    "def unitary(re: float, im: float) -> bool:\n    pass\n",
    "def unitary(re, im):\n    return abs(complex(re, im)) <= 0.5\n",
    [[0.1, 0.1], [0.5, 0.0], [0.4, 0.4]])
add("fx-lc-04", "medium", "PG", "PG-5.1", ["logical_consistency"],
    "Determine whether a gauge group with given fermion charges is anomaly free (sum of cubes).",
    "def anomaly_free(q1: int, q2: int, q3: int) -> bool:\n    pass\n",
    "def anomaly_free(q1, q2, q3):\n    return q1 ** 3 + q2 ** 3 + q3 ** 3 == 0\n",
    [[1, -1, 0], [1, 1, -2], [2, -1, -1]])

# hard: linked tasks returning a tuple
add("fx-hard-01", "hard", "PG", "PG-6.1", ["direct_calculation", "hidden_coefficient", "logical_consistency"],
    "For a scalar of mass m: find the threshold energy, the coefficient C of the log, and whether E exceeds threshold.",
    "def linked(m: float, E: float) -> tuple[float, float, bool]:\n    pass\n",
    "def linked(m, E):\n    threshold = 2 * m\n    C = 1 / 4\n    return (threshold, C * m, E > threshold)\n",
    [[1.0, 3.0], [2.0, 3.0], [0.5, 1.0]])
add("fx-hard-02", "hard", "GR", "GR-7.1", ["ratio_comparison", "categorical_classification"],
    "Find the ratio of couplings at two scales and classify the running.",
    "def running(g1: float, g2: float) -> tuple[float, str]:\n    \"\"\"Returns (ratio, label) with label one of {'growing', 'shrinking', 'fixed'}.\"\"\"\n    pass\n",
    "def running(g1, g2):\n    r = g2 / g1\n    label = 'growing' if r > 1 else ('shrinking' if r < 1 else 'fixed')\n    return (r, label)\n",
    [[1.0, 2.0], [2.0, 1.0], [1.0, 1.0]])


def encode(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, complex):
        return {"complex": [v.real, v.imag]}
    if isinstance(v, tuple):
        return [encode(x) for x in v]
    return v


def run(golden, name, args):
    ns = {}
    exec(golden, ns)
    return ns[name](*args)


out = []
for p in P:
    name = p["skeleton"].split("(")[0].split()[-1]
    p["oracle"] = [encode(run(p["golden_program"], name, a)) for a in p["inputs"]]
    if p["mutation"]:
        assert p["mutation"]["from"] in p["golden_program"]
    out.append(json.dumps(p, ensure_ascii=False))
(HERE / "golden_problems.jsonl").write_text("\n".join(out) + "\n")
print(len(out), "problems")

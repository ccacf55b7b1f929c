import itertools
import math

import numpy as np
import pytest


def ladder_matrices(nmax):
    """Dense a, b on the truncated two-mode space with occupations 0..nmax each."""
    dim = nmax + 1
    low = np.diag(np.sqrt(np.arange(1, dim)), 1)
    eye = np.eye(dim)
    return np.kron(low, eye), np.kron(eye, low)


def sector_projection(N, ells):
    """Columns select |N/2 + l, N/2 - l> inside the (N+1)^2 product basis."""
    dim = N + 1
    cols = [(N // 2 + l) * dim + (N // 2 - l) for l in ells]
    return np.array(cols)


def dense_monomial(a, b, p, q, r, s):
    ad, bd = a.conj().T, b.conj().T
    mp = np.linalg.matrix_power
    return mp(ad, p) @ mp(bd, q) @ mp(a, r) @ mp(b, s)


def lattice_fock_state(psi_a, psi_b, na, nb):
    """``a+^na b+^nb |0> / sqrt(na! nb!)`` on a lattice, as {occupation tuple: amplitude}.

    ``psi_a``, ``psi_b`` are the lattice-normalized mode vectors (sum |psi|^2 = 1).
    """
    G = len(psi_a)
    state = {tuple([0] * G): 1.0 + 0j}

    def create(st, vec):
        out = {}
        for occ, amp in st.items():
            for site in range(G):
                if vec[site] == 0:
                    continue
                new = list(occ)
                new[site] += 1
                key = tuple(new)
                out[key] = out.get(key, 0) + amp * vec[site] * math.sqrt(new[site])
        return out

    for _ in range(na):
        state = create(state, psi_a)
    for _ in range(nb):
        state = create(state, psi_b)
    norm = math.sqrt(math.factorial(na) * math.factorial(nb))
    return {k: v / norm for k, v in state.items() if abs(v) > 1e-15}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_offsets(rng, k, low=0.03, high=0.45):
    while True:
        offs = rng.uniform(low, high, size=k - 1)
        pts = np.concatenate([[0.0], np.cumsum(offs)])
        gaps = [abs(p - q) for p, q in itertools.combinations(pts, 2)]
        if min(gaps, default=1.0) > 1e-3:
            return tuple(float(o) for o in offs)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

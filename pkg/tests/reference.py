"""Independent reference implementation used as a test oracle.

Nothing here imports the package.  Fermionic modes are numbered
``up_i -> i`` and ``dn_i -> L + i``; a basis state is the product of
creation operators in ascending mode order acting on the vacuum, and
signs come from the Jordan-Wigner string (number of occupied modes with a
smaller index), which is a different bookkeeping from the package's
"bits strictly between" rule.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


def _sign_before(state: int, mode: int) -> int:
    return -1 if bin(state & ((1 << mode) - 1)).count("1") % 2 else 1


def annihilate(state: int, mode: int):
    if not state >> mode & 1:
        return None
    return _sign_before(state, mode), state ^ (1 << mode)


def create(state: int, mode: int):
    if state >> mode & 1:
        return None
    return _sign_before(state, mode), state | (1 << mode)


def hop(state: int, dst: int, src: int):
    """c^dag_dst c_src |state>."""
    a = annihilate(state, src)
    if a is None:
        return None
    b = create(a[1], dst)
    if b is None:
        return None
    return a[0] * b[0], b[1]


def sector_states(L: int, n_up: int, n_dn: int) -> list[int]:
    """Combined mode masks ordered lexicographically by (up_mask, dn_mask)."""
    ups = sorted(sum(1 << i for i in c) for c in combinations(range(L), n_up))
    dns = sorted(sum(1 << i for i in c) for c in combinations(range(L), n_dn))
    return [u | (d << L) for u in ups for d in dns]


def bonds(L: int, boundary: str) -> list[tuple[int, int]]:
    out = [(i, i + 1) for i in range(L - 1)]
    if boundary == "periodic" and L > 2:
        out.append((L - 1, 0))
    return out


def hamiltonian_row(state: int, L: int, J: float, U: float, v, boundary: str) -> dict[int, float]:
    """<k'|H|state> for every k', applying each term of H separately."""
    row: dict[int, float] = {}
    for i, j in bonds(L, boundary):
        for spin in (0, L):
            for dst, src in ((i + spin, j + spin), (j + spin, i + spin)):
                res = hop(state, dst, src)
                if res is not None:
                    row[res[1]] = row.get(res[1], 0.0) - J * res[0]
    diag = 0.0
    for i in range(L):
        nu, nd = state >> i & 1, state >> (i + L) & 1
        diag += U * nu * nd + v[i] * (nu + nd)
    if diag:
        row[state] = row.get(state, 0.0) + diag
    return row


def sector_hamiltonian(L: int, n_up: int, n_dn: int, J: float, U: float, v,
                       boundary: str = "open") -> np.ndarray:
    states = sector_states(L, n_up, n_dn)
    index = {s: k for k, s in enumerate(states)}
    H = np.zeros((len(states), len(states)))
    for k, s in enumerate(states):
        for t, val in hamiltonian_row(s, L, J, U, v, boundary).items():
            H[index[t], k] += val
    return H


def densities(L: int, n_up: int, n_dn: int) -> np.ndarray:
    """dim x L table of site occupations."""
    states = sector_states(L, n_up, n_dn)
    return np.array([[(s >> i & 1) + (s >> (i + L) & 1) for i in range(L)] for s in states], float)


def embed(amplitudes: np.ndarray, L: int, n_up: int, n_dn: int) -> np.ndarray:
    """Sector amplitudes as a vector over all 4^L Fock states."""
    full = np.zeros(1 << (2 * L))
    full[sector_states(L, n_up, n_dn)] = amplitudes
    return full


def site_reduced_density_matrix(psi_full: np.ndarray, L: int, site: int) -> np.ndarray:
    """4x4 reduced density matrix on the modes (up_site, dn_site) by explicit partial trace.

    Mode m is bit m of the Fock index.  The returned matrix is indexed by
    (n_up + 2 n_dn) of the kept modes.
    """
    n_modes = 2 * L
    psi = psi_full.reshape([2] * n_modes)
    # numpy axis 0 is the most significant bit, i.e. mode n_modes-1
    ax_up = n_modes - 1 - site
    ax_dn = n_modes - 1 - (L + site)
    rest = [a for a in range(n_modes) if a not in (ax_up, ax_dn)]
    m = np.transpose(psi, [ax_dn, ax_up] + rest).reshape(4, -1)
    return m @ m.T

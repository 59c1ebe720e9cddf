"""Two-point-measurement work statistics for sudden quenches.

Two independent routes are provided:

* the spectral route, working with eigenvalues/eigenvectors of H_0 and
  sparse applications of H_f (or the full H_f eigensystem for P(W));
* the density-correlator route, which only needs the occupation-basis
  diagonal of rho_0 and the site-potential change dv.

For a sudden quench of the site potential the two agree exactly for the
mean and the variance.  For the third central moment they differ by

    delta3 = Tr[rho_0 (D H_0 D - H_0 D^2)],   D = H_f - H_0,

which vanishes when [H_0, D] = 0.  The TPM value is the headline number.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from math import comb

import numpy as np
from scipy.special import logsumexp

from .fock import SectorBasis
from .hamiltonian import PotentialDelta, SparseHamiltonian
from .observables import _correlators, occupation_weights, site_rdm_table, linear_entropies
from .spectra import EigenSystem, ThermalWeights

DEFAULT_MERGE_TOL = 1e-9
PAIR_CUTOFF = 1e-16


class BasisMismatchError(ValueError):
    pass


class IdentityViolation(RuntimeError):
    """A numerical identity that must hold exactly failed its tolerance."""


@dataclass(frozen=True, eq=False)
class WorkDistribution:
    w: np.ndarray
    p: np.ndarray
    merge_tol: float
    truncation_mass: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.w.tolist(), self.p.tolist()))

    def __len__(self) -> int:
        return self.w.size

    def raw_moment(self, k: int) -> float:
        return float(np.sum(self.p * self.w ** k))

    def moments(self) -> "MomentSet":
        """Moments summed directly over the support (normalised to the kept mass)."""
        q = self.p / self.p.sum()
        mean = float(q @ self.w)
        d = self.w - mean
        return MomentSet.from_central(mean, *(float(q @ d ** k) for k in (2, 3, 4)))

    def exp_average(self, beta: float) -> float:
        """<exp(-beta W)>."""
        return float(np.sum(self.p * np.exp(-beta * self.w)))

    def to_csv(self) -> str:
        lines = ["w,p"] + [f"{w:.17g},{p:.17g}" for w, p in zip(self.w, self.p)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MomentSet:
    mean: float
    variance: float
    mu3: float
    raw2: float
    raw3: float
    mu4: float | None = None
    raw4: float | None = None

    @classmethod
    def from_raw(cls, raw1: float, raw2: float, raw3: float | None = None,
                 raw4: float | None = None) -> "MomentSet":
        m = raw1
        var = raw2 - m * m
        mu3 = raw3 - 3 * m * raw2 + 2 * m ** 3 if raw3 is not None else float("nan")
        mu4 = None
        if raw4 is not None:
            mu4 = raw4 - 4 * m * raw3 + 6 * m * m * raw2 - 3 * m ** 4
        return cls(m, var, mu3, raw2, raw3 if raw3 is not None else float("nan"), mu4, raw4)

    @classmethod
    def from_central(cls, mean: float, variance: float, mu3: float | None = None,
                     mu4: float | None = None) -> "MomentSet":
        m = mean
        raw2 = variance + m * m
        raw3 = mu3 + 3 * m * variance + m ** 3 if mu3 is not None else float("nan")
        raw4 = None
        if mu4 is not None:
            raw4 = mu4 + 4 * m * mu3 + 6 * m * m * variance + m ** 4
        return cls(m, variance, mu3 if mu3 is not None else float("nan"), raw2, raw3, mu4, raw4)

    @classmethod
    def zero(cls) -> "MomentSet":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def _check_same_dim(*objs):
    dims = {o.dim for o in objs}
    if len(dims) != 1:
        raise BasisMismatchError(f"operators live on different spaces: {sorted(dims)}")


def tpm_distribution(eig0: EigenSystem, eigf: EigenSystem, w0: ThermalWeights,
                     merge_tol: float = DEFAULT_MERGE_TOL,
                     pair_cutoff: float = PAIR_CUTOFF) -> WorkDistribution:
    """P(W) = sum_{n,m} p_n |<m_f|n_0>|^2 delta(W - (e_m^f - e_n^0)).

    Transitions lighter than ``pair_cutoff`` are dropped and their mass is
    added to ``truncation_mass``.
    """
    _check_same_dim(eig0, eigf)
    if w0.p.size != eig0.dim:
        raise BasisMismatchError("weights do not match the initial eigensystem")
    sup = w0.support
    overlaps = np.square(eigf.vectors.T @ eig0.vectors[:, sup])  # (m, n)
    prob = overlaps * w0.p[sup][None, :]
    work = eigf.values[:, None] - eig0.values[sup][None, :]
    keep = prob >= pair_cutoff if pair_cutoff > 0 else prob > 0
    dropped = float(prob[~keep].sum())
    w, p = work[keep], prob[keep]
    order = np.argsort(w, kind="stable")
    w, p = w[order], p[order]
    # merge runs of support points closer than merge_tol
    if w.size:
        breaks = np.flatnonzero(np.diff(w) > merge_tol) + 1
        starts = np.concatenate([[0], breaks])
        p_m = np.add.reduceat(p, starts)
        w_m = np.add.reduceat(p * w, starts) / p_m
        w, p = w_m, p_m
    return WorkDistribution(w, p, merge_tol, w0.truncation_mass + dropped)


def spectral_moments(eig0: EigenSystem, Hf: SparseHamiltonian | EigenSystem, w0: ThermalWeights,
                     max_order: int = 3) -> MomentSet:
    """Raw and central work moments without building P(W).

    <W^k> = sum_j C(k,j) (-1)^(k-j) Tr[rho_0 H_f^j H_0^(k-j)].  With rho_0
    diagonal in the H_0 eigenbasis each term reduces to
    sum_n p_n e_n^(k-j) <n|H_f^j|n>; the sum over j is evaluated as
    <n|(H_f - e_n)^k|n> by repeated shifted applications of H_f.
    """
    if not 1 <= max_order <= 4:
        raise ValueError("max_order must be in 1..4")
    _check_same_dim(eig0, Hf)
    if isinstance(Hf, EigenSystem):
        Vf, Ef = Hf.vectors, Hf.values

        def apply(X):
            return Vf @ (Ef[:, None] * (Vf.T @ X))
    else:
        A = Hf.tocsr()

        def apply(X):
            return A @ X

    sup = w0.support
    p = w0.p[sup] / w0.p[sup].sum()
    e = eig0.values[sup]
    chunk = 512

    def blocks():
        for s in range(0, sup.size, chunk):
            V = eig0.vectors[:, sup[s:s + chunk]]
            yield V, e[s:s + chunk], p[s:s + chunk]

    # two passes: the mean first, then moments of (H_f - e_n - mean) so that
    # no central moment is formed by cancelling large raw moments
    mean = 0.0
    for V, en, pn in blocks():
        mean += float(pn @ np.einsum("ij,ij->j", V, apply(V) - V * en))
    if max_order == 1:
        return MomentSet(mean, float("nan"), float("nan"), float("nan"), float("nan"))
    central = [0.0, 0.0, 0.0]
    for V, en, pn in blocks():
        shift = en + mean
        Y = apply(V) - V * shift
        per = [np.einsum("ij,ij->j", Y, Y)]
        if max_order >= 3:
            Y2 = apply(Y) - Y * shift
            per.append(np.einsum("ij,ij->j", Y, Y2))
            if max_order >= 4:
                per.append(np.einsum("ij,ij->j", Y2, Y2))
        for k, v in enumerate(per):
            central[k] += float(pn @ v)
    return MomentSet.from_central(mean, central[0],
                                  central[1] if max_order >= 3 else None,
                                  central[2] if max_order >= 4 else None)


def _delta_array(delta) -> np.ndarray:
    return np.asarray(delta.delta_v if isinstance(delta, PotentialDelta) else delta, dtype=float)


def correlator_mean(w0, eig0, delta, basis: SectorBasis) -> float:
    """sum_j dv_j Tr[n_j rho_0]."""
    dv = _delta_array(delta)
    (n1,) = _correlators(occupation_weights(eig0, w0), basis.site_densities(), 1)
    return float(dv @ n1)


def correlator_variance(w0, eig0, delta, basis: SectorBasis) -> float:
    dv = _delta_array(delta)
    n1, n2 = _correlators(occupation_weights(eig0, w0), basis.site_densities(), 2)
    cov = n2 - np.outer(n1, n1)
    return float(dv @ cov @ dv)


def correlator_mu3(w0, eig0, delta, basis: SectorBasis) -> float:
    dv = _delta_array(delta)
    n1, n2, n3 = _correlators(occupation_weights(eig0, w0), basis.site_densities(), 3)
    c3 = (n3
          - np.einsum("jl,m->jlm", n2, n1)
          - np.einsum("jm,l->jlm", n2, n1)
          - np.einsum("lm,j->jlm", n2, n1)
          + 2 * np.einsum("j,l,m->jlm", n1, n1, n1))
    return float(np.einsum("jlm,j,l,m->", c3, dv, dv, dv))


def correlator_central_moment(w0, eig0, delta, basis: SectorBasis, order: int) -> float:
    """<(D - <D>)^k> for the diagonal quench operator D = sum_j dv_j n_j."""
    w = occupation_weights(eig0, w0)
    d = basis.site_densities() @ _delta_array(delta)
    m = w @ d
    return float(w @ (d - m) ** order)


def delta3_identity(eig0: EigenSystem, w0: ThermalWeights, delta, basis: SectorBasis,
                    H0: SparseHamiltonian) -> float:
    """Tr[rho_0 (D H_0 D - H_0 D^2)] evaluated on the H_0 eigenbasis."""
    d = basis.site_densities() @ _delta_array(delta)
    A = H0.tocsr()
    sup = w0.support
    total = 0.0
    for s in range(0, sup.size, 512):
        idx = sup[s:s + 512]
        V = eig0.vectors[:, idx]
        DV = d[:, None] * V
        term = np.einsum("ij,ij->j", DV, A @ DV) - eig0.values[idx] * np.einsum("ij,ij->j", DV, DV)
        total += float(w0.p[idx] @ term)
    return total / float(w0.p[sup].sum())


def mu3_discrepancy(eig0: EigenSystem, Hf: SparseHamiltonian | EigenSystem, w0: ThermalWeights,
                    delta, basis: SectorBasis, H0: SparseHamiltonian | None = None,
                    rtol: float = 1e-8) -> float:
    """mu3(TPM) - mu3(correlators); checks it against the commutator identity.

    ``H0`` defaults to ``Hf`` minus the diagonal quench operator.
    """
    spec = spectral_moments(eig0, Hf, w0, max_order=3)
    corr = correlator_mu3(w0, eig0, delta, basis)
    d3 = spec.mu3 - corr
    if H0 is None:
        if not isinstance(Hf, SparseHamiltonian):
            raise ValueError("pass H0 when Hf is an EigenSystem")
        d = basis.site_densities() @ _delta_array(delta)
        H0 = SparseHamiltonian(Hf.dim, Hf.rows, Hf.cols, Hf.vals, Hf.diagonal - d)
    ident = delta3_identity(eig0, w0, delta, basis, H0)
    scale = max(1.0, abs(ident), abs(spec.mu3), abs(corr))
    if abs(d3 - ident) > rtol * scale:
        raise IdentityViolation(f"delta3={d3!r} but commutator identity gives {ident!r}")
    return d3


def jarzynski_residual(dist: WorkDistribution, T: float, log_z0: float, log_zf: float,
                       relative: bool = False) -> float:
    """|<exp(-W/T)> - Z_f/Z_0|, or with ``relative`` |<exp(-W/T)> Z_0/Z_f - 1|.

    The relative form is evaluated in the log domain and stays meaningful
    when Z_f/Z_0 is far from one, where the absolute form is dominated by
    the rounding of a huge number.
    """
    if T <= 0:
        raise ValueError("the fluctuation theorem needs T > 0")
    if relative:
        log_avg = logsumexp(-dist.w / T, b=dist.p)
        return abs(float(np.expm1(log_avg - (log_zf - log_z0))))
    return abs(dist.exp_average(1.0 / T) - float(np.exp(log_zf - log_z0)))


@dataclass(frozen=True)
class PairMoments:
    """Per-pair statistics as reported by the sweeps."""

    mean: float
    variance: float
    mu3: float
    mu3_correlator: float
    delta3: float

    @classmethod
    def zero(cls) -> "PairMoments":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(eq=False)
class StateCorrelators:
    """Reduction of (H_0 eigensystem, weights) to what every quench needs.

    ``kernel[j, l] = sum_n p_n <n| n_j (H_0 - e_n) n_l |n>`` so that the TPM
    third moment exceeds the correlator one by ``dv @ kernel @ dv``.
    """

    T: float
    density: np.ndarray
    two: np.ndarray
    three: np.ndarray
    kernel: np.ndarray
    rdm: np.ndarray
    ground_energy: float
    log_z: float
    truncation_mass: float
    support_size: int

    @property
    def linear_entropy(self) -> float:
        return float(linear_entropies(self.rdm).mean())

    def covariance(self) -> np.ndarray:
        return self.two - np.outer(self.density, self.density)

    def third_cumulant(self) -> np.ndarray:
        n1, n2, n3 = self.density, self.two, self.three
        return (n3 - np.einsum("jl,m->jlm", n2, n1) - np.einsum("jm,l->jlm", n2, n1)
                - np.einsum("lm,j->jlm", n2, n1) + 2 * np.einsum("j,l,m->jlm", n1, n1, n1))

    def pair_moments(self, dv: np.ndarray) -> PairMoments:
        dv = np.asarray(dv, dtype=float)
        mean = float(dv @ self.density)
        var = float(dv @ self.covariance() @ dv)
        mu3c = float(np.einsum("jlm,j,l,m->", self.third_cumulant(), dv, dv, dv))
        d3 = float(dv @ self.kernel @ dv)
        return PairMoments(mean, var, mu3c + d3, mu3c, d3)

    def permuted(self, perm: np.ndarray) -> "StateCorrelators":
        """Summary of the site-relabelled state: new site j is old site ``perm[j]``."""
        perm = np.asarray(perm)
        return replace(self, density=self.density[perm], two=self.two[np.ix_(perm, perm)],
                       three=self.three[np.ix_(perm, perm, perm)],
                       kernel=self.kernel[np.ix_(perm, perm)], rdm=self.rdm[perm])

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {f.name: np.asarray(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_arrays(cls, data) -> "StateCorrelators":
        kw = {}
        for f in fields(cls):
            v = np.asarray(data[f.name])
            kw[f.name] = v.item() if v.ndim == 0 else v
        kw["support_size"] = int(kw["support_size"])
        return cls(**kw)


def summarize_state(eig0: EigenSystem, w0: ThermalWeights, basis: SectorBasis,
                    H0: SparseHamiltonian) -> StateCorrelators:
    _check_same_dim(eig0, H0)
    sup = w0.support
    p = w0.p[sup] / w0.p[sup].sum()
    if sup.max() >= eig0.n_vectors:
        raise BasisMismatchError("weights reach levels whose eigenvectors were not computed")
    V = np.ascontiguousarray(eig0.vectors[:, sup])
    e = eig0.values[sup]
    sq = np.square(V)
    w = sq @ p
    n = basis.site_densities()
    n1, n2, n3 = _correlators(w, n, 3)

    # rho_0 on the hopping pattern: rho[k, k'] = sum_n p_n v_n(k) v_n(k')
    rho_off = np.empty(H0.rows.size)
    for s in range(0, H0.rows.size, 1024):
        r, c = H0.rows[s:s + 1024], H0.cols[s:s + 1024]
        rho_off[s:s + 1024] = (V[r] * V[c]) @ p
    x = H0.vals * rho_off
    r, c = H0.rows, H0.cols
    kernel = n[r].T @ (x[:, None] * n[c])
    kernel = kernel + kernel.T
    # diagonal: sum_k n_j n_l [H_kk w_k - sum_n p_n e_n v_n(k)^2]
    diag_term = H0.diagonal * w - sq @ (p * e)
    kernel += n.T @ (diag_term[:, None] * n)

    return StateCorrelators(
        T=w0.T, density=n1, two=n2, three=n3, kernel=kernel,
        rdm=site_rdm_table(w, basis), ground_energy=float(eig0.values[0]),
        log_z=w0.log_z, truncation_mass=w0.truncation_mass, support_size=int(sup.size))

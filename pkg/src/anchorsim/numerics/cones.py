"""Ray-to-face conversion for small polyhedral cones."""

import itertools
from dataclasses import dataclass

import numpy as np

from ..exceptions import DegenerateCone


@dataclass(frozen=True)
class ConeDescription:
    generators: np.ndarray  # one ray per row
    facets: np.ndarray  # cone = {f : facets @ f <= 0}

    def contains(self, f, tol=1e-9):
        f = np.asarray(f, dtype=float)
        return bool(np.all(self.facets @ f <= tol * max(1.0, np.linalg.norm(f))))


def _normalize(row):
    return row / np.abs(row).max()


def rays_to_facets(generators, tol=1e-10):
    """Face form of the cone spanned by ``generators`` (brute-force double description).

    Candidate normals come from every (r-1)-subset of generators inside the
    r-dimensional linear span; a candidate is kept when all generators lie on
    one side of it.  If the span is a proper subspace, its orthogonal
    complement is added as pairs of opposite rows.  Rows are scaled to unit
    max-norm and duplicates removed.
    """
    G = np.atleast_2d(np.asarray(generators, dtype=float))
    if G.shape[0] > 16 or G.shape[1] > 6:
        raise ValueError("at most 16 generators in dimension <= 6 are supported")
    norms = np.linalg.norm(G, axis=1)
    G = G[norms > tol]
    if G.shape[0] == 0:
        raise DegenerateCone("no nonzero generators")
    dim = G.shape[1]
    _, s, Vt = np.linalg.svd(G)
    r = int(np.sum(s > tol * s[0]))
    if r < 2:
        raise DegenerateCone(f"generators span a {r}-dimensional subspace")
    basis = Vt[:r]  # rows span the generator subspace
    comp = Vt[r:]
    Gs = G @ basis.T  # coordinates inside the span

    rows = []
    for subset in itertools.combinations(range(Gs.shape[0]), r - 1):
        sub = Gs[list(subset)]
        _, ss, vt = np.linalg.svd(sub)
        if r - 1 > 0 and np.sum(ss > tol * max(ss[0], 1.0)) < r - 1:
            continue
        normal = vt[-1]
        vals = Gs @ normal
        scale = np.abs(vals).max()
        if scale <= tol:
            continue
        if np.all(vals <= tol * scale):
            pass
        elif np.all(vals >= -tol * scale):
            normal = -normal
        else:
            continue
        rows.append(_normalize(normal @ basis))
    for c in comp:
        rows.append(_normalize(c))
        rows.append(_normalize(-c))
    if not rows:
        raise DegenerateCone("generators span the whole space; no facets")

    uniq = []
    for row in rows:
        if not any(np.allclose(row, u, atol=1e-9) for u in uniq):
            uniq.append(row)
    facets = np.array(uniq)
    facets[np.abs(facets) < 1e-15] = 0.0
    return ConeDescription(generators=G, facets=facets)

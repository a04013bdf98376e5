"""Pure numpy fallback for :mod:`qgefem._kernels`."""
import numpy as np


def assemble_quadratic(qsym, cell_map, pos, psi, data, res):
    ne, nl = cell_map.shape
    live = cell_map >= 0
    pe = np.where(live, psi[np.where(live, cell_map, 0)], 0.0)
    je = np.matmul(qsym.reshape(ne, nl * nl, nl), pe[:, :, None]).reshape(ne, nl, nl)
    keep = pos >= 0
    data += np.bincount(pos[keep], weights=je[keep], minlength=len(data))
    ne_res = 0.5 * np.einsum("eij,ej->ei", je, pe)
    res += np.bincount(cell_map[live], weights=ne_res[live], minlength=len(res))

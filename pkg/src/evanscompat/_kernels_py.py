"""Pure numpy/scipy version of the orbit kernel (same contract as the
compiled ``_kernels`` module)."""
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


def orbit_representatives(radices, perms, adm):
    radices = np.asarray(radices, np.int64)
    perms = np.asarray(perms, np.int64)
    adm = np.asarray(adm, np.int64)
    n_cols = int(np.prod(radices))
    stride = np.ones(len(radices), np.int64)
    for k in range(len(radices) - 2, -1, -1):
        stride[k] = stride[k + 1] * radices[k + 1]
    cols = np.arange(n_cols, dtype=np.int64)
    digits = (cols[:, None] // stride[None, :]) % radices[None, :]
    src, dst = [], []
    for g in range(perms.shape[0]):
        mask = np.ones(n_cols, bool)
        for a, b in adm[g]:
            mask &= digits[:, a] == digits[:, b]
        img = digits[mask] @ stride[perms[g]]
        src.append(cols[mask])
        dst.append(img)
    if src:
        src = np.concatenate(src)
        dst = np.concatenate(dst)
    else:
        src = dst = np.zeros(0, np.int64)
    graph = coo_matrix((np.ones(len(src), np.int8), (src, dst)), shape=(n_cols, n_cols))
    _, labels = connected_components(graph, directed=False)
    rep_of_label = np.full(labels.max() + 1 if n_cols else 0, n_cols, np.int64)
    np.minimum.at(rep_of_label, labels, cols)
    return rep_of_label[labels]

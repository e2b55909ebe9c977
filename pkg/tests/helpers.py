import numpy as np

from proxyval.metrics import MetricTable


def table(values, ids=None, names=None) -> MetricTable:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    K, m = values.shape
    ids = ids or [f"a{k}" for k in range(K)]
    names = names or [f"m{i}" for i in range(m)]
    return MetricTable(list(ids), list(names), values)


# criterion number -> (passed, detail); printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

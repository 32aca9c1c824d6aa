import numpy as np


def numeric_grad(f, arrays, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. each array, perturbed in place."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + h
            fp = f()
            a[idx] = orig - h
            fm = f()
            a[idx] = orig
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def rel_error(analytic, numeric):
    num = np.max(np.abs(analytic - numeric))
    den = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    return num / den


def naive_conv1d(x, w, b, stride):
    c_out, c_in, k = w.shape
    length = x.shape[1]
    out = []
    j = 0
    while j * stride + k <= length:
        s = j * stride
        out.append([b[c] + np.sum(w[c] * x[:, s : s + k]) for c in range(c_out)])
        j += 1
    return np.array(out).T


def toy_domains(n_domains=2, n=24, l=72, seed=0, shift=0.0, n_classes=2):
    """Small labeled 3-channel 'spectra': one bump whose position encodes
    the class, moved by ``shift * domain`` bins."""
    from seismda.sigprep import Dataset

    rng = np.random.default_rng(seed)
    grid = np.arange(l)
    out = []
    for d in range(n_domains):
        y = np.arange(n) % n_classes
        centre = l * (0.25 + 0.5 * y / max(n_classes - 1, 1)) + shift * d
        bump = np.exp(-0.5 * ((grid[None] - centre[:, None]) / 3.0) ** 2)
        X = np.stack([bump, 0.5 * bump, np.full_like(bump, 0.2)], axis=1)
        X = X + 0.05 * rng.random(X.shape)
        out.append(Dataset(X, y, f"dom{d}"))
    return out

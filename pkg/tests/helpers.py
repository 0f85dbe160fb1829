"""Independent oracles shared by the test modules."""

from __future__ import annotations

import numpy as np

from vceclip import tensor as T

# Below these magnitudes a central difference is float64 round-off; an entry
# with both values under them is a structurally zero gradient.
ZERO_ANALYTIC = 1e-12
ZERO_NUMERIC = 1e-9


def rel_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(numeric), 1e-8)


def central_difference(f, arr: np.ndarray, index, h: float) -> float:
    old = arr[index]
    arr[index] = old + h
    plus = f()
    arr[index] = old - h
    minus = f()
    arr[index] = old
    return (plus - minus) / (2 * h)


def gradcheck(loss_fn, params, h=1e-6, max_entries=None, rng=None):
    """Largest relative error between tape gradients and central differences.

    ``loss_fn`` builds a scalar Tensor from the current values of ``params``.
    With ``max_entries`` only that many randomly chosen entries per tensor
    are differenced.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.grad = None
    with T.Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    def value():
        return loss_fn().item()

    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        n = flat.size
        idx = range(n) if max_entries is None or n <= max_entries else rng.choice(n, max_entries, replace=False)
        for i in idx:
            num = central_difference(value, flat, int(i), h)
            a = gflat[int(i)]
            if abs(a) < ZERO_ANALYTIC and abs(num) < ZERO_NUMERIC:
                continue
            worst = max(worst, rel_error(a, num))
    for p in params:
        p.grad = None
    return worst


def randomize(model, rng, scale=0.3):
    """Perturb every parameter so gradients are generic (not near init symmetry)."""
    for p in model.parameters():
        if p.ndim:
            p.data += rng.normal(0.0, scale, size=p.shape)


def full_model_gradcheck(seed: int, class_names, max_entries: int = 12, h: float = 1e-4) -> float:
    """Worst relative error over every parameter tensor of a toy model on a 2-image batch."""
    from vceclip.config import ModelConfig
    from vceclip.model import ClipModel

    config = ModelConfig.toy(num_classes=len(class_names), init_seed=seed)
    model = ClipModel.initialize(config, class_names)
    rng = np.random.default_rng(seed)
    randomize(model, rng)
    images = rng.random((2, 32, 32, 3)) * 2 - 1
    labels = rng.integers(0, len(class_names), size=2)

    def loss():
        return T.cross_entropy(model.logits(images), labels)

    return gradcheck(loss, model.parameters(), h=h, max_entries=max_entries, rng=rng)


def brute_force_prf1(true, pred, num_classes):
    """Per-class (precision, recall, f1) by recounting TP/FP/FN sample by sample; None when undefined."""
    out = []
    for c in range(num_classes):
        tp = sum(1 for t, p in zip(true, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(true, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(true, pred) if t == c and p != c)
        precision = tp / (tp + fp) if tp + fp else None
        recall = tp / (tp + fn) if tp + fn else None
        p, r = precision or 0.0, recall or 0.0
        if p + r:
            f1 = 2 * p * r / (p + r)
        else:
            f1 = None if precision is None and recall is None else 0.0
        out.append((precision, recall, f1))
    return out


def brute_force_auc(is_positive, scores):
    """(wins + ties/2) / (P * N) over every positive-negative pair."""
    pos = [s for s, y in zip(scores, is_positive) if y]
    neg = [s for s, y in zip(scores, is_positive) if not y]
    if not pos or not neg:
        return None
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def random_metrics_instance(rng):
    """Labels, predictions and row-stochastic scores with ties, N <= 50, C <= 10."""
    c = int(rng.integers(2, 11))
    n = int(rng.integers(1, 51))
    true = rng.integers(0, c, size=n)
    pred = rng.integers(0, c, size=n)
    raw = rng.integers(0, 5, size=(n, c)).astype(float) + 1.0  # coarse values force ties
    return true, pred, raw / raw.sum(axis=1, keepdims=True), c


def write_toy_config(path, data_root, output_dir, class_names, max_epochs=30, val="validation.csv",
                     augment=True, learning_rate=1e-4, batch_size=8, patience=3):
    """YAML run config for a 1-layer, d=16, 32x32 model on a synthetic dataset."""
    import yaml

    cfg = {
        "seed": 0,
        "data_root": str(data_root),
        "train_manifest": str(data_root / "train.csv"),
        "val_manifest": str(data_root / val),
        "output_dir": str(output_dir),
        "class_names": list(class_names),
        "model": {
            "image_size": 32, "patch_size": 16, "vision_embed_dim": 16, "vision_layers": 1,
            "vision_heads": 2, "text_embed_dim": 16, "text_layers": 1, "text_heads": 2,
            "vocab_size": 50, "max_text_len": 32, "shared_dim": 16,
        },
        "train": {"batch_size": batch_size, "max_epochs": max_epochs, "learning_rate": learning_rate,
                  "patience": patience},
    }
    if not augment:
        cfg["augment"] = {"rotations": [0], "horizontal_flip": 0.0, "vertical_flip": 0.0, "crop_fraction": 1.0}
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return path

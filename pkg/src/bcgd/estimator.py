"""Scikit-learn style classifier trained with blended coarse gradient descent."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._random import stream
from .activations import ALPHA_FLOOR
from .exceptions import DivergedError
from .io import RunMetrics
from .network import QuantNet, _softmax
from .optim import STEPS, BlendedState

METHODS = tuple(STEPS)


def init_alphas(net, X):
    """Set each resolution to ``max(x_j) / (2**bits - 1)`` on the batch ``X``, layer by layer."""
    a = X
    last = len(net.layers) - 1
    for j, layer in enumerate(net.layers[:last]):
        x = a @ layer.weight.T
        if layer.bias is not None:
            x = x + layer.bias
        q = net.act_quantizers[j]
        if q is not None:
            net.set_alpha(j, max(float(x.max()) / q.top_level, ALPHA_FLOOR))
            a = net.act_quantizers[j].quantize(x)
        else:
            a = x
    return net.alphas


class QuantizedMLPClassifier(ClassifierMixin, BaseEstimator):
    """MLP with ``bits_w``-bit weights and ``bits_a``-bit activations.

    ``method`` is ``"bcgd"`` (blending factor ``rho``), ``"bc"`` (``rho = 0``)
    or ``"pgd"`` (``rho = 1``). After ``fit``, ``metrics_`` holds one record
    per epoch, ``net_`` the trained network and ``state_`` the optimizer state
    with the float shadow weights.
    """

    def __init__(
        self,
        hidden_layer_sizes=(16,),
        bits_w=1,
        bits_a=4,
        variant="three",
        method="bcgd",
        rho=1e-5,
        lr=0.01,
        rate_factor=0.01,
        momentum=0.9,
        weight_decay=1e-4,
        milestones=(),
        decay=0.1,
        epochs=50,
        batch_size=32,
        keep_ends_float=True,
        weight_scheme="layer",
        alpha_floor=ALPHA_FLOOR,
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.bits_w = bits_w
        self.bits_a = bits_a
        self.variant = variant
        self.method = method
        self.rho = rho
        self.lr = lr
        self.rate_factor = rate_factor
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.milestones = milestones
        self.decay = decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.keep_ends_float = keep_ends_float
        self.weight_scheme = weight_scheme
        self.alpha_floor = alpha_floor
        self.random_state = random_state

    def _check_params(self):
        if self.method not in STEPS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ValueError("epochs must be a non-negative integer")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")

    def _encode(self, y):
        return np.searchsorted(self.classes_, y)

    def _evaluate(self, X, codes):
        out, _ = self.net_.forward(X)
        loss, _ = self.net_.loss(out, codes)
        return loss, float(np.mean(out.argmax(axis=1) == codes))

    def fit(self, X, y, X_val=None, y_val=None):
        self._check_params()
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes to fit a classifier")
        self.n_features_in_ = X.shape[1]
        codes = self._encode(y)
        val = None
        if X_val is not None:
            Xv, yv = check_X_y(X_val, y_val, dtype=np.float64)
            val = (Xv, self._encode(yv))

        seed = int(self.random_state)
        sizes = [X.shape[1], *self.hidden_layer_sizes, self.classes_.size]
        net = QuantNet.mlp(sizes, self.bits_a, 1.0, self.variant, rng=stream(seed, "init"))
        init_rng = stream(seed, "init", 1)
        batch = init_rng.choice(X.shape[0], size=min(self.batch_size, X.shape[0]), replace=False)
        init_alphas(net, X[np.sort(batch)])

        state = BlendedState.from_net(
            net,
            self.bits_w,
            keep_ends_float=self.keep_ends_float,
            rho=self.rho,
            lr=self.lr,
            rate_factor=self.rate_factor,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            milestones=tuple(self.milestones),
            decay=self.decay,
            scheme=self.weight_scheme,
            alpha_floor=self.alpha_floor,
        )
        self.net_, self.state_ = net, state
        n_alpha = len(net.act_quantizers)
        self.metrics_ = RunMetrics(n_alpha, len(net.layers))
        step = STEPS[self.method]
        n = X.shape[0]
        for epoch in range(int(self.epochs)):
            state.set_epoch(epoch)
            order = stream(seed, "shuffle", epoch).permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                out, cache = net.forward(X[idx])
                grads = net.coarse_backward(cache, codes[idx])
                step(state, net, grads)
            self._record(epoch, X, codes, val, grads)
        self.n_iter_ = state.step_count
        return self

    def _record(self, epoch, X, codes, val, grads):
        loss, acc = self._evaluate(X, codes)
        if not np.isfinite(loss):
            raise DivergedError(f"training loss is {loss} after epoch {epoch}", step=self.state_.step_count)
        val_acc = self._evaluate(*val)[1] if val is not None else float("nan")
        rec = {
            "epoch": epoch + 1,
            "iteration": self.state_.step_count,
            "train_loss": loss,
            "train_acc": acc,
            "val_acc": val_acc,
            "grad_norm_w": float(np.sqrt(sum(np.sum(g * g) for g in grads.weights))),
            "grad_norm_alpha": float(np.sqrt(sum(a * a for a in grads.alphas if a is not None))),
        }
        for i, a in enumerate(self.net_.alphas):
            rec[f"alpha_{i}"] = float("nan") if a is None else a
        for j, gap in enumerate(self.state_.quantization_gaps()):
            rec[f"gap_{j}"] = gap
        self.metrics_.append(rec)

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.net_.predict_scores(X)

    def predict_proba(self, X):
        return _softmax(self.decision_function(X))

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]

    @property
    def final_train_loss(self):
        check_is_fitted(self, "metrics_")
        return self.metrics_.records[-1]["train_loss"] if self.metrics_.records else float("nan")

"""scikit-learn compatible wrappers around the recurrent classifiers."""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import HSICube, extract_patches
from .models import SPATIAL_VARIANTS, ModelSpec, build, canonical_variant, predict_logits
from .tensor import softmax
from .training import TrainConfig, fit_batches


class RecurrentHSIClassifier(ClassifierMixin, BaseEstimator):
    """Recurrent spectral(-spatial) classifier.

    ``X`` holds spectra of shape ``(n_samples, n_bands)`` for the spectral-only
    variants and patches of shape ``(n_samples, P, P, n_bands)`` for
    ``st_ss_gru`` / ``st_ss_pgru``. Labels may be any hashable values.

    Parameters
    ----------
    variant : {"rnn", "lstm", "gru", "st_gru", "st_ss_gru", "st_ss_pgru"}
    hidden_size, n_filters, n_shorten_filters, n_timesteps, n_units :
        H, N, M, T and K of the architecture.
    lr, batch_size, epochs, optimizer :
        Training schedule.
    random_state : int
        Seeds both the initialization and the batch order.
    """

    def __init__(self, variant="st_ss_pgru", hidden_size=128, n_filters=16,
                 n_shorten_filters=16, n_timesteps=5, n_units=2, lr=1e-3,
                 batch_size=64, epochs=100, optimizer="adam", random_state=0):
        self.variant = variant
        self.hidden_size = hidden_size
        self.n_filters = n_filters
        self.n_shorten_filters = n_shorten_filters
        self.n_timesteps = n_timesteps
        self.n_units = n_units
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.optimizer = optimizer
        self.random_state = random_state

    def _spatial(self):
        return canonical_variant(self.variant) in SPATIAL_VARIANTS

    def _check_X(self, X, reset):
        allow_nd = self._spatial()
        X = check_array(X, allow_nd=allow_nd, dtype=np.float64)
        if allow_nd and (X.ndim != 4 or X.shape[1] != X.shape[2] or X.shape[1] % 2 == 0):
            raise ValueError(f"expected patches of shape (n, P, P, D) with odd P, got {X.shape}")
        if reset:
            self.n_features_in_ = X.shape[-1]
        elif X.shape[-1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[-1]} bands, estimator was fit with "
                             f"{self.n_features_in_}")
        return X

    def fit(self, X, y):
        X, y = check_X_y(X, y, allow_nd=self._spatial(), dtype=np.float64)
        check_classification_targets(y)
        X = self._check_X(X, reset=True)
        self.classes_, targets = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        spec = ModelSpec(
            variant=self.variant, D=X.shape[-1], C=len(self.classes_), H=self.hidden_size,
            P=X.shape[1] if self._spatial() else None, N=self.n_filters,
            M=self.n_shorten_filters, T=self.n_timesteps, K=self.n_units,
            seed=self.random_state or 0)
        cfg = TrainConfig(lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
                          optimizer=self.optimizer, seed=self.random_state or 0)
        self.model_ = build(spec)
        self.loss_history_ = fit_batches(self.model_, len(X),
                                         lambda idx: (X[idx], targets[idx]), cfg)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return predict_logits(self.model_, self._check_X(X, reset=False))

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.classes_[self.decision_function(X).argmax(axis=1)]


class PatchExtractor(TransformerMixin, BaseEstimator):
    """Turn ``(row, col)`` pixel coordinates into model inputs from a cube.

    With ``patch_size=1`` the output is the bare spectra ``(n, D)``; otherwise
    mirror-padded ``(n, P, P, D)`` windows.
    """

    def __init__(self, cube, patch_size=5):
        self.cube = cube
        self.patch_size = patch_size

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        X = check_array(X, dtype=np.int64)
        if X.shape[1] != 2:
            raise ValueError(f"expected (n, 2) pixel coordinates, got {X.shape}")
        cube = self.cube if isinstance(self.cube, HSICube) else HSICube(np.asarray(self.cube))
        if self.patch_size == 1:
            return cube.values[X[:, 0], X[:, 1]]
        return extract_patches(cube, X[:, 0], X[:, 1], self.patch_size)

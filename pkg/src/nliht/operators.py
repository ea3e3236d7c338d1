"""Measurement models ``y = Phi(x) + e``.

Two families are provided. A *linear* model applies a fixed gain matrix
``G``. A *composed* model passes each signal entry through a mild sensor
nonlinearity first::

    Phi(x) = G (x + h(x)),        h applied entrywise, h(0) = 0

whose Jacobian at a linearization point ``p`` is ``G (I + diag(h'(p)))``.
The sensor nonlinearities all carry an explicit bound ``|h'| <= M < 1``.

Noise is never added here; :func:`nliht.harness.generate_problem` does that,
which keeps :func:`forward` deterministic for finite-difference checks.
"""
import numpy as np

from ._util import as_signal
from .errors import DomainViolation, InvalidInput

__all__ = [
    "Identity",
    "ScaledSine",
    "ScaledTanh",
    "Cubic",
    "MeasurementModel",
    "make_nonlinearity",
    "forward",
    "jacobian_apply",
    "jacobian_adjoint_apply",
    "linearization_residual",
    "fd_jacobian_check",
]


class Identity:
    """``h = 0``; a composed model with this nonlinearity is linear."""

    kind = "identity"
    scale = 0.0
    bound = 0.0

    def value(self, x):
        return np.zeros_like(x)

    def derivative(self, x):
        return np.zeros_like(x)

    def check_domain(self, x):
        pass

    def __repr__(self):
        return "Identity()"


class _Scaled:
    kind = ""

    def __init__(self, scale):
        scale = float(scale)
        if not abs(scale) < 1:
            raise InvalidInput(f"{self.kind} nonlinearity needs |scale| < 1, got {scale}")
        self.scale = scale
        self.bound = abs(scale)

    def check_domain(self, x):
        pass

    def __repr__(self):
        return f"{type(self).__name__}({self.scale!r})"


class ScaledSine(_Scaled):
    """``h(x) = s sin(x)``."""

    kind = "sine"

    def value(self, x):
        return self.scale * np.sin(x)

    def derivative(self, x):
        return self.scale * np.cos(x)


class ScaledTanh(_Scaled):
    """``h(x) = s tanh(x)``."""

    kind = "tanh"

    def value(self, x):
        return self.scale * np.tanh(x)

    def derivative(self, x):
        return self.scale / np.cosh(x) ** 2


class Cubic:
    """``h(x) = s x^3`` restricted to the box ``[-radius, radius]^n``.

    The derivative is unbounded on the real line, so evaluations outside the
    box raise :class:`~nliht.errors.DomainViolation`.
    """

    kind = "cubic"

    def __init__(self, scale, radius):
        self.scale = float(scale)
        self.radius = float(radius)
        if self.radius <= 0:
            raise InvalidInput(f"cubic radius must be positive, got {radius}")
        self.bound = 3 * abs(self.scale) * self.radius**2
        if not self.bound < 1:
            raise InvalidInput(
                f"cubic nonlinearity needs 3|s|r^2 < 1, got {self.bound:.6g}"
            )

    def check_domain(self, x):
        if np.any(np.abs(x) > self.radius):
            raise DomainViolation(
                f"point leaves the cubic domain box [-{self.radius}, {self.radius}]"
            )

    def value(self, x):
        return self.scale * x**3

    def derivative(self, x):
        return 3 * self.scale * x**2

    def __repr__(self):
        return f"Cubic({self.scale!r}, radius={self.radius!r})"


def make_nonlinearity(kind, scale=0.0, radius=None):
    """Build a nonlinearity from its catalogue name."""
    kind = kind.lower()
    if kind in ("identity", "none"):
        return Identity()
    if kind == "sine":
        return ScaledSine(scale)
    if kind == "tanh":
        return ScaledTanh(scale)
    if kind == "cubic":
        if radius is None:
            raise InvalidInput("cubic nonlinearity requires a domain radius")
        return Cubic(scale, radius)
    raise InvalidInput(f"unknown nonlinearity {kind!r}")


class MeasurementModel:
    """Forward map ``R^n -> R^m`` with Jacobian and adjoint-Jacobian actions.

    Parameters
    ----------
    matrix : array_like, shape (m, n)
        Linear gains ``G``.
    nonlinearity : object, optional
        One of the catalogue nonlinearities. ``None`` gives the linear model
        ``Phi(x) = G x``; anything else gives ``Phi(x) = G (x + h(x))``.
    noise_sigma : float
        Standard deviation of the additive observation noise. Stored for the
        experiment harness; :meth:`forward` is always noiseless.
    """

    def __init__(self, matrix, nonlinearity=None, noise_sigma=0.0):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or 0 in matrix.shape:
            raise InvalidInput(f"gain matrix must be 2-D and non-empty, got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise InvalidInput("gain matrix has non-finite entries")
        if not np.isfinite(noise_sigma) or noise_sigma < 0:
            raise InvalidInput(f"noise_sigma must be >= 0, got {noise_sigma}")
        if nonlinearity is not None and not nonlinearity.bound < 1:
            raise InvalidInput("composed models need a derivative bound M < 1")
        matrix.setflags(write=False)
        self.matrix = matrix
        self.nonlinearity = nonlinearity
        self.noise_sigma = float(noise_sigma)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def is_linear(self):
        return self.nonlinearity is None

    @property
    def derivative_bound(self):
        """``M_h = sup |h'|``; zero for linear models."""
        return 0.0 if self.nonlinearity is None else self.nonlinearity.bound

    @property
    def h_kind(self):
        return "linear" if self.nonlinearity is None else self.nonlinearity.kind

    @property
    def h_scale(self):
        return 0.0 if self.nonlinearity is None else self.nonlinearity.scale

    def operator_norm_sq(self):
        """Largest squared singular value of the gain matrix."""
        return float(np.linalg.norm(self.matrix, 2) ** 2)

    def _x(self, x, name="x"):
        x = as_signal(x, name, self.shape[1])
        if self.nonlinearity is not None:
            self.nonlinearity.check_domain(x)
        return x

    def forward(self, x):
        x = self._x(x)
        if self.nonlinearity is None:
            return self.matrix @ x
        return self.matrix @ (x + self.nonlinearity.value(x))

    def _gain(self, point):
        # diagonal of I + H'(point)
        return 1.0 + self.nonlinearity.derivative(self._x(point, "point"))

    def jacobian_apply(self, point, v):
        v = as_signal(v, "v", self.shape[1])
        if self.nonlinearity is None:
            return self.matrix @ v
        return self.matrix @ (self._gain(point) * v)

    def jacobian_adjoint_apply(self, point, r):
        r = as_signal(r, "r", self.shape[0])
        if self.nonlinearity is None:
            return self.matrix.T @ r
        return self._gain(point) * (self.matrix.T @ r)

    def jacobian_matrix(self, point):
        if self.nonlinearity is None:
            return self.matrix.copy()
        return self.matrix * self._gain(point)[None, :]

    def jacobian_apply_rows(self, points, V):
        """Row-wise Jacobian actions: row ``i`` is ``J(points[i]) V[i]``."""
        V = np.asarray(V, dtype=float)
        if self.nonlinearity is None:
            return V @ self.matrix.T
        points = np.asarray(points, dtype=float)
        self.nonlinearity.check_domain(points)
        return ((1.0 + self.nonlinearity.derivative(points)) * V) @ self.matrix.T

    def __repr__(self):
        m, n = self.shape
        return f"MeasurementModel({m}x{n}, nonlinearity={self.nonlinearity!r})"


def forward(model, x):
    """Noiseless observation ``Phi(x)``."""
    return model.forward(x)


def jacobian_apply(model, point, v):
    """``Phi_point v = G (I + H'(point)) v``."""
    return model.jacobian_apply(point, v)


def jacobian_adjoint_apply(model, point, r):
    """``Phi_point^T r = (I + H'(point)) G^T r``."""
    return model.jacobian_adjoint_apply(point, r)


def linearization_residual(model, x1, x2):
    """``||Phi(x1) - Phi(x2) - Phi_{x1}(x1 - x2)||``.

    Zero for linear models; measures how far the first-order model taken at
    ``x1`` misses the true observation of ``x2``.
    """
    x1 = as_signal(x1, "x1", model.shape[1])
    x2 = as_signal(x2, "x2", model.shape[1])
    if model.is_linear:
        return 0.0
    r = model.forward(x1) - model.forward(x2) - model.jacobian_apply(x1, x1 - x2)
    return float(np.linalg.norm(r))


def fd_jacobian_check(model, point, step=1e-6, jacobian=None):
    """Largest forward-difference deviation from the analytic Jacobian.

    Returns ``max_j ||(Phi(p + step e_j) - Phi(p)) / step - J(p) e_j||_inf``.

    Parameters
    ----------
    jacobian : callable, optional
        ``jacobian(point, v)`` replacing ``model.jacobian_apply``; lets a test
        feed a deliberately wrong Jacobian through the same check.
    """
    if not 1e-8 <= step <= 1e-3:
        raise InvalidInput(f"finite-difference step must lie in [1e-8, 1e-3], got {step}")
    point = as_signal(point, "point", model.shape[1])
    jac = model.jacobian_apply if jacobian is None else jacobian
    base = model.forward(point)
    worst = 0.0
    for j in range(model.shape[1]):
        e = np.zeros_like(point)
        e[j] = 1.0
        fd = (model.forward(point + step * e) - base) / step
        worst = max(worst, float(np.max(np.abs(fd - jac(point, e)))))
    return worst

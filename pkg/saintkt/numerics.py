"""
Dense tensor arithmetic with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a :class:`numpy.ndarray` and records the operation
which produced it, so that :meth:`Tensor.backward` can walk the graph in
reverse topological order and populate the gradient of every tensor which
requires one.
"""

from __future__ import absolute_import
import hashlib
import logging
import math
import numpy as np
from .exceptions import NumericalError, ShapeError, StateError, ValidationError

# Configure local logger
logger = logging.getLogger(__name__)

#: Name of the bit generator behind :class:`RngStream`.
RNG_ALGORITHM = "PCG64"

_UINT64_MASK = 0xFFFFFFFFFFFFFFFF


def _key_to_int(key):
    """
    Convert a child stream key into a nonnegative integer.

    :param key: Integer or string key.
    :rtype: int
    """
    if isinstance(key, (int, np.integer)):
        return int(key) & _UINT64_MASK
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream(object):
    """
    Seeded random stream. Draws come from numpy's PCG64 bit generator, so the
    same seed yields the same sequence on every platform.
    """

    def __init__(self, seed):
        """
        Constructor parameters:

        :param int seed: 64-bit seed of the stream.
        """
        self._seed = int(seed) & _UINT64_MASK
        self._generator = np.random.Generator(np.random.PCG64(self._seed))

    @property
    def seed(self):
        """
        Seed of the stream

        :rtype: int
        """
        return self._seed

    @property
    def algorithm(self):
        """
        Name of the underlying bit generator

        :rtype: str
        """
        return RNG_ALGORITHM

    @property
    def generator(self):
        """
        The numpy generator drawing values for this stream

        :rtype: numpy.random.Generator
        """
        return self._generator

    def child(self, *keys):
        """
        Derive an independent stream from this stream's seed and the supplied
        keys. The derived stream does not depend on how many values have been
        drawn from this stream.

        :param keys: Integer or string keys naming the child stream.
        :return: The child stream.
        :rtype: RngStream
        """
        entropy = [self._seed] + [_key_to_int(key) for key in keys]
        state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
        return RngStream(int(state[0]))


class Tensor(object):
    """
    Node of a reverse-mode differentiation graph holding a dense value.

    The gradient is materialized lazily: :attr:`grad` stays `None` until a
    backward pass reaches the tensor.
    """

    # Make numpy defer mixed ndarray / Tensor arithmetic to this class
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None, _parents=(),
                 _backward=None, _op=None):
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = tuple(_parents)
        self._backward_rule = _backward
        self._op = _op
        self._backward_done = False

    def __repr__(self):
        return "Tensor(shape={}, dtype={}, requires_grad={}{})".format(
            self.shape, self.dtype, self.requires_grad,
            ", name='{}'".format(self.name) if self.name else "")

    @property
    def shape(self):
        """
        Dimensions of the value

        :rtype: tuple
        """
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def op(self):
        """
        Name of the operation which produced this tensor (`None` for leaves)

        :rtype: str
        """
        return self._op

    def item(self):
        """
        Return the value of a single-element tensor as a Python float.

        :rtype: float
        """
        if self.data.size != 1:
            raise ShapeError(
                "Expected a single-element tensor, got shape {}".format(
                    self.shape))
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        """
        Return a copy of the value.

        :rtype: numpy.ndarray
        """
        return np.array(self.data, copy=True)

    def zero_grad(self):
        """
        Drop the gradient of this tensor and allow another backward pass to be
        started from it.
        """
        self.grad = None
        self._backward_done = False

    def detach(self):
        """
        Return a tensor sharing this value but not participating in the graph.

        :rtype: Tensor
        """
        return Tensor(self.data, requires_grad=False, name=self.name)

    def _topological_order(self):
        """
        Collect every tensor requiring a gradient which this tensor depends
        on, parents before children.

        :rtype: list
        """
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self):
        """
        Populate :attr:`grad` for every tensor requiring a gradient which this
        scalar tensor depends on. Gradients accumulate into tensors which
        already hold one.

        :raises ShapeError: If this tensor is not a scalar.
        :raises StateError: If backward was already run from this tensor
            without an intervening :meth:`zero_grad`.
        """
        if self.data.size != 1:
            raise ShapeError(
                "Backward pass must start from a scalar, got shape {}".format(
                    self.shape))
        if self._backward_done:
            raise StateError(
                "Backward pass already run from this tensor; call zero_grad() "
                "before running it again")
        self._backward_done = True
        if not self.requires_grad:
            return

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            node.grad = grad if node.grad is None else node.grad + grad
            if node._backward_rule is None:
                continue
            parent_grads = node._backward_rule(grad)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads \
                    else grads[key] + parent_grad

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("Division is only supported by scalars")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(value):
    """
    Wrap a value in a constant tensor unless it already is a tensor.

    :param value: Tensor, array or scalar.
    :rtype: Tensor
    """
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad, shape):
    """
    Sum a gradient over the dimensions which broadcasting added or stretched
    so that it matches the shape of the original operand.
    """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result(data, parents, backward_rule, op, check_finite=True):
    """
    Create the output tensor of an operation.

    :param numpy.ndarray data: Value of the output.
    :param tuple parents: Input tensors.
    :param backward_rule: Callable mapping the output gradient to a tuple of
        input gradients, in the order of `parents`.
    :param str op: Name of the operation.
    :param bool check_finite: Whether to reject NaN / infinite values.
    :rtype: Tensor
    """
    if check_finite and not np.all(np.isfinite(data)):
        raise NumericalError(
            "Non-finite value produced by '{}' (shape {})".format(
                op, np.shape(data)))
    requires_grad = any(parent.requires_grad for parent in parents)
    if not requires_grad:
        return Tensor(data, _op=op)
    return Tensor(data, requires_grad=True, _parents=parents,
                  _backward=backward_rule, _op=op)


def add(a, b):
    """
    Elementwise sum with numpy broadcasting.

    :rtype: Tensor
    """
    a, b = as_tensor(a), as_tensor(b)

    def backward_rule(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)
    return _result(a.data + b.data, (a, b), backward_rule, "add")


def subtract(a, b):
    """
    Elementwise difference with numpy broadcasting.

    :rtype: Tensor
    """
    a, b = as_tensor(a), as_tensor(b)

    def backward_rule(grad):
        return _unbroadcast(grad, a.shape), -_unbroadcast(grad, b.shape)
    return _result(a.data - b.data, (a, b), backward_rule, "subtract")


def multiply(a, b):
    """
    Elementwise product with numpy broadcasting.

    :rtype: Tensor
    """
    a, b = as_tensor(a), as_tensor(b)

    def backward_rule(grad):
        return (_unbroadcast(grad * b.data, a.shape),
                _unbroadcast(grad * a.data, b.shape))
    return _result(a.data * b.data, (a, b), backward_rule, "multiply")


def scale(x, factor):
    """
    Multiply by a constant scalar.

    :param Tensor x: Input.
    :param float factor: Scale factor.
    :rtype: Tensor
    """
    x = as_tensor(x)
    factor = float(factor)

    def backward_rule(grad):
        return (grad * factor,)
    return _result(x.data * factor, (x,), backward_rule, "scale")


def matmul(a, b):
    """
    Matrix product of the trailing two dimensions, broadcasting over any
    leading dimensions.

    :param Tensor a: Left operand, shape ``[..., m, k]``.
    :param Tensor b: Right operand, shape ``[..., k, n]``.
    :return: The product, shape ``[..., m, n]``.
    :rtype: Tensor
    :raises ShapeError: If the inner dimensions do not match.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            "Cannot multiply matrices of shapes {} and {}".format(
                a.shape, b.shape))

    def backward_rule(grad):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)
    return _result(np.matmul(a.data, b.data), (a, b), backward_rule, "matmul")


def transpose(x, axes=None):
    """
    Permute dimensions.

    :param Tensor x: Input.
    :param tuple axes: Permutation; reverses the dimensions if `None`.
    :rtype: Tensor
    """
    x = as_tensor(x)
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward_rule(grad):
        return (np.transpose(grad, inverse),)
    return _result(np.transpose(x.data, axes), (x,), backward_rule,
                   "transpose", check_finite=False)


def reshape(x, shape):
    """
    Reshape without changing the data order.

    :rtype: Tensor
    """
    x = as_tensor(x)

    def backward_rule(grad):
        return (np.reshape(grad, x.shape),)
    return _result(np.reshape(x.data, shape), (x,), backward_rule, "reshape",
                   check_finite=False)


def index(x, key):
    """
    Select part of a tensor with numpy indexing.

    :param Tensor x: Input.
    :param key: Any numpy index (integers, slices, integer arrays).
    :rtype: Tensor
    """
    x = as_tensor(x)

    def backward_rule(grad):
        full = np.zeros_like(x.data)
        np.add.at(full, key, grad)
        return (full,)
    return _result(x.data[key], (x,), backward_rule, "index",
                   check_finite=False)


def take(table, indices):
    """
    Gather rows of a two-dimensional table (embedding lookup).

    :param Tensor table: Table of shape ``[rows, width]``.
    :param indices: Integer array of any shape with values in ``[0, rows)``.
    :return: Tensor of shape ``indices.shape + (width,)``.
    :rtype: Tensor
    :raises ValidationError: If an index is out of range.
    """
    table = as_tensor(table)
    indices = np.asarray(indices)
    if not np.issubdtype(indices.dtype, np.integer):
        raise ValidationError("Lookup indices must be integers")
    if indices.size and (indices.min() < 0 or
                         indices.max() >= table.shape[0]):
        raise ValidationError(
            "Lookup index out of range [0, {}) for table '{}'".format(
                table.shape[0], table.name))

    def backward_rule(grad):
        full = np.zeros_like(table.data)
        np.add.at(full, indices, grad)
        return (full,)
    return _result(table.data[indices], (table,), backward_rule, "take",
                   check_finite=False)


def reduce_sum(x, axis=None, keepdims=False):
    """
    Sum over the supplied axes (all axes if `None`).

    :rtype: Tensor
    """
    x = as_tensor(x)

    def backward_rule(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, x.shape),)
    return _result(np.sum(x.data, axis=axis, keepdims=keepdims), (x,),
                   backward_rule, "sum")


def reduce_mean(x, axis=None, keepdims=False):
    """
    Mean over the supplied axes (all axes if `None`).

    :rtype: Tensor
    """
    x = as_tensor(x)
    axes = range(x.ndim) if axis is None else \
        (axis if isinstance(axis, (tuple, list)) else (axis,))
    count = int(np.prod([x.shape[a] for a in axes]))
    return scale(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def relu(x):
    """
    Rectified linear unit, ``max(0, x)``.

    :rtype: Tensor
    """
    x = as_tensor(x)
    positive = x.data > 0

    def backward_rule(grad):
        return (grad * positive,)
    return _result(np.where(positive, x.data, 0.0).astype(x.dtype), (x,),
                   backward_rule, "relu")


def sigmoid(x):
    """
    Logistic function, evaluated without overflow for large magnitudes.

    :rtype: Tensor
    """
    x = as_tensor(x)
    exp_neg_abs = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + exp_neg_abs),
                   exp_neg_abs / (1.0 + exp_neg_abs)).astype(x.dtype)

    def backward_rule(grad):
        return (grad * out * (1.0 - out),)
    return _result(out, (x,), backward_rule, "sigmoid")


def log(x):
    """
    Natural logarithm.

    :rtype: Tensor
    :raises NumericalError: If any input is not strictly positive.
    """
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise NumericalError("Logarithm of a non-positive value")

    def backward_rule(grad):
        return (grad / x.data,)
    return _result(np.log(x.data), (x,), backward_rule, "log")


def clip(x, low, high):
    """
    Clamp values into ``[low, high]``. The gradient is zero where clamping
    took effect.

    :rtype: Tensor
    """
    x = as_tensor(x)
    inside = (x.data >= low) & (x.data <= high)

    def backward_rule(grad):
        return (grad * inside,)
    return _result(np.clip(x.data, low, high), (x,), backward_rule, "clip")


def masked_fill(x, mask, value):
    """
    Replace the entries where `mask` is true by `value` (which may be
    ``-inf``). Replaced entries receive no gradient.

    :param Tensor x: Input.
    :param numpy.ndarray mask: Boolean array broadcastable to ``x.shape``.
    :param float value: Fill value.
    :rtype: Tensor
    """
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    keep = np.logical_not(mask)

    def backward_rule(grad):
        return (_unbroadcast(grad * keep, x.shape),)
    data = np.where(mask, value, x.data).astype(x.dtype)
    return _result(data, (x,), backward_rule, "masked_fill",
                   check_finite=False)


def where(condition, a, b):
    """
    Select from `a` where `condition` is true and from `b` elsewhere, with
    broadcasting.

    :rtype: Tensor
    """
    a, b = as_tensor(a), as_tensor(b)
    condition = np.asarray(condition, dtype=bool)
    otherwise = np.logical_not(condition)

    def backward_rule(grad):
        return (_unbroadcast(grad * condition, a.shape),
                _unbroadcast(grad * otherwise, b.shape))
    return _result(np.where(condition, a.data, b.data), (a, b), backward_rule,
                   "where", check_finite=False)


def softmax(x, axis=-1):
    """
    Softmax along an axis, stabilized by subtracting the slice maximum.

    Entries equal to ``-inf`` receive weight exactly zero. A slice made only
    of ``-inf`` entries yields all zeros rather than NaN.

    :param Tensor x: Input scores.
    :param int axis: Axis to normalize over.
    :rtype: Tensor
    :raises ValidationError: If the axis is not valid for the input.
    :raises NumericalError: On NaN or ``+inf`` input.
    """
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ValidationError(
            "Axis {} is invalid for shape {}".format(axis, x.shape))
    if np.any(np.isnan(x.data)) or np.any(np.isposinf(x.data)):
        raise NumericalError("Softmax input contains NaN or +inf")

    peak = np.max(x.data, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    exps = np.exp(x.data - peak)
    total = np.sum(exps, axis=axis, keepdims=True)
    out = np.divide(exps, total, out=np.zeros_like(exps),
                    where=np.broadcast_to(total > 0, exps.shape))

    def backward_rule(grad):
        inner = np.sum(grad * out, axis=axis, keepdims=True)
        return (out * (grad - inner),)
    return _result(out, (x,), backward_rule, "softmax")


def layer_norm(x, gamma, beta, eps=1e-5):
    """
    Normalize each vector along the last dimension to zero mean and unit
    variance, then apply the affine transform ``gamma * x_hat + beta``.

    :param Tensor x: Input of shape ``[..., width]``.
    :param Tensor gamma: Scale of shape ``[width]``.
    :param Tensor beta: Shift of shape ``[width]``.
    :param float eps: Added to the variance in the denominator.
    :rtype: Tensor
    :raises ShapeError: If gamma / beta do not match the last dimension.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise ShapeError(
            "Layer norm parameters of shapes {} and {} do not match input "
            "shape {}".format(gamma.shape, beta.shape, x.shape))

    centered = x.data - np.mean(x.data, axis=-1, keepdims=True)
    variance = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(variance + eps)
    x_hat = centered * inv_std

    def backward_rule(grad):
        grad_x_hat = grad * gamma.data
        grad_x = (inv_std / width) * (
            width * grad_x_hat
            - np.sum(grad_x_hat, axis=-1, keepdims=True)
            - x_hat * np.sum(grad_x_hat * x_hat, axis=-1, keepdims=True))
        flat_grad = grad.reshape(-1, width)
        grad_gamma = np.sum(flat_grad * x_hat.reshape(-1, width), axis=0)
        grad_beta = np.sum(flat_grad, axis=0)
        return grad_x, grad_gamma, grad_beta
    return _result(x_hat * gamma.data + beta.data, (x, gamma, beta),
                   backward_rule, "layer_norm")


def dropout(x, rate, rng=None, train=False):
    """
    Inverted dropout. In training mode each entry is zeroed with probability
    `rate` and survivors are scaled by ``1 / (1 - rate)``; otherwise the input
    is returned unchanged.

    :param Tensor x: Input.
    :param float rate: Drop probability in ``[0, 1)``.
    :param RngStream rng: Stream to draw the keep mask from (training only).
    :param bool train: Whether training mode is active.
    :rtype: Tensor
    :raises ValidationError: If the rate is outside ``[0, 1)``.
    :raises StateError: If training with a nonzero rate and no stream.
    """
    if not 0.0 <= rate < 1.0:
        raise ValidationError(
            "Dropout rate must be in [0, 1), got {}".format(rate))
    x = as_tensor(x)
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise StateError("Dropout in training mode requires a random stream")
    factor = 1.0 / (1.0 - rate)
    keep = (rng.generator.random(x.shape) >= rate) * factor

    def backward_rule(grad):
        return (grad * keep,)
    return _result((x.data * keep).astype(x.dtype), (x,), backward_rule,
                   "dropout")


_ELEMENTWISE_OPS = {
    "relu": relu,
    "sigmoid": sigmoid,
    "add": add,
    "scale": scale,
    "dropout": dropout,
}


def elementwise(op, x, *args, **kwargs):
    """
    Dispatch one of the elementwise operations by name: ``relu``,
    ``sigmoid``, ``add``, ``scale`` or ``dropout``.

    Example:

    .. code-block:: python

        y = elementwise("dropout", x, 0.1, rng=stream, train=True)

    :param str op: Operation name.
    :param Tensor x: First operand.
    :rtype: Tensor
    :raises ValidationError: If the operation is unknown.
    """
    try:
        function = _ELEMENTWISE_OPS[op]
    except KeyError:
        raise ValidationError("Unknown elementwise operation: '{}'".format(op))
    return function(x, *args, **kwargs)


def xavier_uniform(fan_in, fan_out, rng, dtype=np.float64, name=None):
    """
    Draw a ``[fan_in x fan_out]`` weight matrix i.i.d. uniform on
    ``[-b, b]`` with ``b = sqrt(6 / (fan_in + fan_out))``.

    :param int fan_in: Number of input units.
    :param int fan_out: Number of output units.
    :param RngStream rng: Stream to draw from.
    :param dtype: Floating point type of the result.
    :param str name: Optional parameter name.
    :return: A tensor requiring a gradient.
    :rtype: Tensor
    """
    if fan_in <= 0 or fan_out <= 0:
        raise ValidationError(
            "Fans must be positive, got {} and {}".format(fan_in, fan_out))
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    data = rng.generator.uniform(-bound, bound, size=(fan_in, fan_out))
    return Tensor(data.astype(dtype), requires_grad=True, name=name)


def zeros(shape, dtype=np.float64, name=None):
    """
    Create a zero-valued parameter tensor.

    :rtype: Tensor
    """
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, name=name)


def ones(shape, dtype=np.float64, name=None):
    """
    Create a one-valued parameter tensor.

    :rtype: Tensor
    """
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True, name=name)


def finite_difference_gradient(function, tensor, h=1e-5):
    """
    Estimate the gradient of a scalar function with respect to one tensor by
    central differences. The tensor value is perturbed in place and restored.

    :param function: Callable without arguments returning a scalar tensor or
        float.
    :param Tensor tensor: Tensor to differentiate with respect to.
    :param float h: Step size.
    :rtype: numpy.ndarray
    """
    return _finite_difference(function, tensor, h, range(tensor.size))


def _finite_difference(function, tensor, h, entries):
    estimate = np.zeros(tensor.size, dtype=np.float64)
    for entry in entries:
        position = np.unravel_index(entry, tensor.shape)
        original = tensor.data[position]
        tensor.data[position] = original + h
        upper = _as_float(function())
        tensor.data[position] = original - h
        lower = _as_float(function())
        tensor.data[position] = original
        estimate[entry] = (upper - lower) / (2.0 * h)
    return estimate.reshape(tensor.shape)


def _as_float(value):
    return value.item() if isinstance(value, Tensor) else float(value)


def check_gradient(function, tensors, h=1e-5, max_entries=None, rng=None):
    """
    Compare the gradients computed by a backward pass against central finite
    differences.

    :param function: Callable without arguments building a fresh scalar
        tensor from `tensors`.
    :param list tensors: Tensors requiring a gradient.
    :param float h: Finite difference step.
    :param int max_entries: If set, compare only this many randomly chosen
        entries of each tensor.
    :param RngStream rng: Stream choosing the entries (required with
        `max_entries`).
    :return: The largest relative error ``|g - n| / max(|g| + |n|, 1e-12)``
        over the tensors, measured in the Euclidean norm of the compared
        entries.
    :rtype: float
    """
    for tensor in tensors:
        tensor.zero_grad()
    root = function()
    root.backward()
    worst = 0.0
    for tensor in tensors:
        if max_entries is not None and tensor.size > max_entries:
            entries = np.sort(rng.generator.choice(
                tensor.size, size=max_entries, replace=False))
        else:
            entries = np.arange(tensor.size)
        analytic = np.zeros(tensor.size) if tensor.grad is None \
            else np.asarray(tensor.grad, dtype=np.float64).reshape(-1)
        numeric = _finite_difference(function, tensor, h, entries).reshape(-1)
        difference = np.linalg.norm(analytic[entries] - numeric[entries])
        magnitude = np.linalg.norm(analytic[entries]) + \
            np.linalg.norm(numeric[entries])
        error = difference / max(magnitude, 1e-12)
        logger.debug("Gradient check for '%s': relative error %.3e",
                     tensor.name, error)
        worst = max(worst, error)
    return worst

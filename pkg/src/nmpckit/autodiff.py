"""Forward-mode automatic differentiation on scalars carrying tangent vectors."""

import math

import numpy as np


class Tangent:
    """Scalar value paired with a vector of directional derivatives.

    Arithmetic propagates every seeded direction at once, so evaluating a
    model function on seeded inputs yields the value and the full Jacobian
    in a single pass.  The tangent vector length is fixed by the seeding and
    must be identical for all operands of a binary operation.
    """

    __slots__ = ("val", "dot")

    def __init__(self, val, dot):
        self.val = val
        self.dot = dot

    def __add__(self, other):
        if isinstance(other, Tangent):
            return Tangent(self.val + other.val, self.dot + other.dot)
        return Tangent(self.val + other, self.dot)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tangent):
            return Tangent(self.val - other.val, self.dot - other.dot)
        return Tangent(self.val - other, self.dot)

    def __rsub__(self, other):
        return Tangent(other - self.val, -self.dot)

    def __mul__(self, other):
        if isinstance(other, Tangent):
            return Tangent(self.val * other.val,
                           self.val * other.dot + other.val * self.dot)
        return Tangent(self.val * other, other * self.dot)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tangent):
            q = self.val / other.val
            return Tangent(q, (self.dot - q * other.dot) / other.val)
        return Tangent(self.val / other, self.dot / other)

    def __rtruediv__(self, other):
        q = other / self.val
        return Tangent(q, (-q / self.val) * self.dot)

    def __pow__(self, other):
        if isinstance(other, Tangent):
            v = self.val ** other.val
            return Tangent(v, v * (other.dot * math.log(self.val)
                                   + other.val / self.val * self.dot))
        v = self.val ** other
        return Tangent(v, (other * self.val ** (other - 1)) * self.dot)

    def __rpow__(self, other):
        v = other ** self.val
        return Tangent(v, (v * math.log(other)) * self.dot)

    def __neg__(self):
        return Tangent(-self.val, -self.dot)

    def __pos__(self):
        return self

    def __abs__(self):
        # Kink at 0: the subgradient convention sign(0) = 0 is used.
        s = math.copysign(1.0, self.val) if self.val != 0.0 else 0.0
        return Tangent(abs(self.val), s * self.dot)

    # Comparisons act on the value; branches in model code therefore follow
    # the primal evaluation path.
    def __lt__(self, other):
        return self.val < _value(other)

    def __le__(self, other):
        return self.val <= _value(other)

    def __gt__(self, other):
        return self.val > _value(other)

    def __ge__(self, other):
        return self.val >= _value(other)

    def __float__(self):
        return float(self.val)

    def __repr__(self):
        return f"Tangent({self.val!r}, {self.dot!r})"


def _value(s):
    return s.val if isinstance(s, Tangent) else s


def value(s):
    """Primal value of a scalar that may or may not carry tangents."""
    return s.val if isinstance(s, Tangent) else float(s)


def sin(s):
    if isinstance(s, Tangent):
        return Tangent(math.sin(s.val), math.cos(s.val) * s.dot)
    return math.sin(s)


def cos(s):
    if isinstance(s, Tangent):
        return Tangent(math.cos(s.val), -math.sin(s.val) * s.dot)
    return math.cos(s)


def tan(s):
    if isinstance(s, Tangent):
        t = math.tan(s.val)
        return Tangent(t, (1.0 + t * t) * s.dot)
    return math.tan(s)


def exp(s):
    if isinstance(s, Tangent):
        e = math.exp(s.val)
        return Tangent(e, e * s.dot)
    return math.exp(s)


def log(s):
    if isinstance(s, Tangent):
        return Tangent(math.log(s.val), s.dot / s.val)
    return math.log(s)


def sqrt(s):
    if isinstance(s, Tangent):
        r = math.sqrt(s.val)
        return Tangent(r, (0.5 / r) * s.dot)
    return math.sqrt(s)


def atan(s):
    if isinstance(s, Tangent):
        return Tangent(math.atan(s.val), s.dot / (1.0 + s.val * s.val))
    return math.atan(s)


def tanh(s):
    if isinstance(s, Tangent):
        t = math.tanh(s.val)
        return Tangent(t, (1.0 - t * t) * s.dot)
    return math.tanh(s)


def seed(values, offset, total):
    """Wrap a vector of plain numbers so entry i carries unit direction offset+i.

    ``total`` is the combined number of seed directions across all inputs of
    the expression being differentiated.
    """
    out = []
    for i, v in enumerate(values):
        dot = np.zeros(total)
        dot[offset + i] = 1.0
        out.append(Tangent(float(v), dot))
    return out


def collect(outputs, total):
    """Split a list of scalars into a value vector and a Jacobian.

    Outputs that carry no tangent (constants in the expression graph) get a
    zero Jacobian row.
    """
    n = len(outputs)
    vals = np.empty(n)
    jac = np.zeros((n, total))
    for i, s in enumerate(outputs):
        if isinstance(s, Tangent):
            vals[i] = s.val
            jac[i] = s.dot
        else:
            vals[i] = float(s)
    return vals, jac


def value_and_jacobian(fun, seeded_args, plain_args=()):
    """Evaluate ``fun`` and differentiate it w.r.t. the seeded arguments.

    Parameters
    ----------
    fun : callable
        Takes the seeded vectors followed by the plain ones, returns a list
        of scalars.
    seeded_args : sequence of 1-D arrays
        Inputs to differentiate with respect to, in order.
    plain_args : sequence of 1-D arrays
        Inputs held constant.

    Returns
    -------
    vals : ndarray
        Function value.
    jacs : list of ndarray
        One Jacobian block per seeded argument, with matching column counts.
    """
    sizes = [len(a) for a in seeded_args]
    total = sum(sizes)
    wrapped = []
    offset = 0
    for a, n in zip(seeded_args, sizes):
        wrapped.append(seed(a, offset, total))
        offset += n
    consts = [[float(v) for v in a] for a in plain_args]
    out = fun(*wrapped, *consts)
    vals, jac = collect(out, total)
    jacs = []
    offset = 0
    for n in sizes:
        jacs.append(jac[:, offset:offset + n])
        offset += n
    return vals, jacs

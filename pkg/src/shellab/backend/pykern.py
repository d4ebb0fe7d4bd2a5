"""NumPy fallback for the shell-interaction kernels.

All kernels operate on batches: state arrays have shape ``(batch, m)`` with
complex128 entries, shell index 1 stored at column 0.  ``kk`` holds the
wavenumbers ``k_0 .. k_{m+1}`` so that neighbour couplings at both ends can be
read without branching; components outside ``1..m`` are zero by convention,
which the two-column zero padding enforces.
"""

import numpy as np

GOY = 0
SABRA = 1


def _pad2(x):
    batch, m = x.shape
    out = np.zeros((batch, m + 4), dtype=np.complex128)
    out[:, 2 : m + 2] = x
    return out


def bilinear(variant, a, b, kk, u, v):
    """Evaluate B(u, v) componentwise for a batch of state pairs.

    ``kk[i]`` must equal the wavenumber of shell ``i`` for ``i = 0..m+1``.
    Returns a new ``(batch, m)`` complex array.
    """
    batch, m = u.shape
    up, vp = _pad2(u), _pad2(v)
    knm1 = kk[0:m]
    kn = kk[1 : m + 1]
    knp1 = kk[2 : m + 2]
    # shifted views: column s+2 : s+2+m holds component n+s for n = 1..m
    um1, um2 = up[:, 1 : 1 + m], up[:, 0:m]
    up1 = up[:, 3 : 3 + m]
    vm1, vm2 = vp[:, 1 : 1 + m], vp[:, 0:m]
    vp1, vp2 = vp[:, 3 : 3 + m], vp[:, 4 : 4 + m]
    if variant == GOY:
        s = (
            a * knp1 * np.conj(up1) * np.conj(vp2)
            + b * kn * np.conj(um1) * np.conj(vp1)
            - a * knm1 * np.conj(um1) * np.conj(vm2)
            - b * knm1 * np.conj(um2) * np.conj(vm1)
        )
    else:
        s = (
            a * knp1 * np.conj(up1) * vp2
            + b * kn * np.conj(um1) * vp1
            + a * knm1 * um1 * vm2
            + b * knm1 * um2 * vm1
        )
    return -1j * s


def bilinear_first_adjoint(variant, a, b, kk, u, w):
    """Transpose of ``v -> B(v, u)`` in the real inner product Re(x . y*).

    Returns g with (B(v, u), w) = (v, g) for every v; derived term by term
    from the quadratic interaction formulas, so it is exact to roundoff.
    """
    batch, m = u.shape
    up, wp = _pad2(u), _pad2(w)
    kp = kk[1 : m + 1]
    kp1 = kk[2 : m + 2]
    um1, up1, up2 = up[:, 1 : 1 + m], up[:, 3 : 3 + m], up[:, 4 : 4 + m]
    wm1, wp1, wp2 = wp[:, 1 : 1 + m], wp[:, 3 : 3 + m], wp[:, 4 : 4 + m]
    if variant == GOY:
        s = (
            a * kp * np.conj(up1) * np.conj(wm1)
            + b * kp1 * np.conj(up2) * np.conj(wp1)
            - a * kp * np.conj(um1) * np.conj(wp1)
            - b * kp1 * np.conj(up1) * np.conj(wp2)
        )
    else:
        s = (
            a * kp * up1 * np.conj(wm1)
            + b * kp1 * up2 * np.conj(wp1)
            - a * kp * np.conj(um1) * wp1
            - b * kp1 * np.conj(up1) * wp2
        )
    return -1j * s

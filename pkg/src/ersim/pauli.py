"""Phase-free single-qubit Pauli codes.

Codes are ``I=0, X=1, Y=2, Z=3`` so that sorting codes gives the I < X < Y < Z
child order used by the execution tree. Products drop the global phase, which
never affects computational-basis probabilities.
"""

import numpy as np

I, X, Y, Z = 0, 1, 2, 3
LABELS = "IXYZ"

# code -> (x bit | z bit << 1); the mapping happens to be its own inverse
_CODE_TO_XZ = np.array([0, 1, 3, 2], dtype=np.uint8)
_XZ_TO_CODE = np.array([0, 1, 3, 2], dtype=np.uint8)

PRODUCT = np.array(
    [[_XZ_TO_CODE[_CODE_TO_XZ[a] ^ _CODE_TO_XZ[b]] for b in range(4)] for a in range(4)],
    dtype=np.uint8,
)


def multiply(a: int, b: int) -> int:
    """Pauli product with the phase discarded."""
    return int(PRODUCT[a, b])


def to_xz(codes):
    """Split codes into boolean (x, z) symplectic bits."""
    xz = _CODE_TO_XZ[np.asarray(codes, dtype=np.uint8)]
    return (xz & 1).astype(bool), (xz >> 1).astype(bool)


def from_xz(x, z):
    """Inverse of :func:`to_xz`."""
    xz = np.asarray(x, dtype=np.uint8) | (np.asarray(z, dtype=np.uint8) << 1)
    return _XZ_TO_CODE[xz]


def parse(label: str) -> int:
    try:
        return LABELS.index(label.upper())
    except ValueError:
        raise ValueError(f"not a Pauli label: {label!r}") from None

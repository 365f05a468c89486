"""Fixed filter bank and mirror-padded 2-D correlation.

Every filtering step in the package goes through :func:`convolve` (forward)
and :func:`convolve_adjoint` (its exact transpose). Kernels are applied
unflipped (correlation) and borders are mirror-padded without repeating the
edge sample, i.e. ``d c b | a b c d | c b a``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# name, divisor, 25 integer numerators (row-major 5x5)
_SRM_TABLE = """\
SRM01  1   0   0   0   0   0   0   0   0   0   0   0   0  -1   1   0   0   0   0   0   0   0   0   0   0   0
SRM02  1   0   0   0   0   0   0   0   0   0   0   0   0  -1   0   0   0   0   0   1   0   0   0   0   0   0
SRM03  1   0   0   0   0   0   0   0   0   0   0   0   0  -1   0   0   0   0   1   0   0   0   0   0   0   0
SRM04  1   0   0   0   0   0   0   0   0   0   0   0   0  -1   0   0   0   1   0   0   0   0   0   0   0   0
SRM05  1   0   0   0   0   0   0   0   0   0   0   0   1  -1   0   0   0   0   0   0   0   0   0   0   0   0
SRM06  1   0   0   0   0   0   0   1   0   0   0   0   0  -1   0   0   0   0   0   0   0   0   0   0   0   0
SRM07  1   0   0   0   0   0   0   0   1   0   0   0   0  -1   0   0   0   0   0   0   0   0   0   0   0   0
SRM08  1   0   0   0   0   0   0   0   0   1   0   0   0  -1   0   0   0   0   0   0   0   0   0   0   0   0
SRM09  2   0   0   0   0   0   0   0   0   0   0   0   1  -2   1   0   0   0   0   0   0   0   0   0   0   0
SRM10  2   0   0   0   0   0   0   1   0   0   0   0   0  -2   0   0   0   0   0   1   0   0   0   0   0   0
SRM11  2   0   0   0   0   0   0   0   1   0   0   0   0  -2   0   0   0   0   1   0   0   0   0   0   0   0
SRM12  2   0   0   0   0   0   0   0   0   1   0   0   0  -2   0   0   0   1   0   0   0   0   0   0   0   0
SRM13  3   0   0   0   0   0   0   0   0   0   0   0   1  -3   3  -1   0   0   0   0   0   0   0   0   0   0
SRM14  3   0   0   0   0   0   0   1   0   0   0   0   0  -3   0   0   0   0   0   3   0   0   0   0   0  -1
SRM15  3   0   0   0   0   0   0   0   1   0   0   0   0  -3   0   0   0   0   3   0   0   0   0  -1   0   0
SRM16  3   0   0   0   0   0   0   0   0   1   0   0   0  -3   0   0   0   3   0   0   0  -1   0   0   0   0
SRM17  3   0   0   0   0   0   0   0   0   0   0  -1   3  -3   1   0   0   0   0   0   0   0   0   0   0   0
SRM18  3  -1   0   0   0   0   0   3   0   0   0   0   0  -3   0   0   0   0   0   1   0   0   0   0   0   0
SRM19  3   0   0  -1   0   0   0   0   3   0   0   0   0  -3   0   0   0   0   1   0   0   0   0   0   0   0
SRM20  3   0   0   0   0  -1   0   0   0   3   0   0   0  -3   0   0   0   1   0   0   0   0   0   0   0   0
SRM21  4   0   0   0   0   0   0  -1   2  -1   0   0   2  -4   2   0   0  -1   2  -1   0   0   0   0   0   0
SRM22 12  -1   2  -2   2  -1   2  -6   8  -6   2  -2   8 -12   8  -2   2  -6   8  -6   2  -1   2  -2   2  -1
SRM23  4   0   0   0   0   0   0  -1   2  -1   0   0   2  -4   2   0   0   0   0   0   0   0   0   0   0   0
SRM24  4   0   0   0   0   0   0   0   2  -1   0   0   0  -4   2   0   0   0   2  -1   0   0   0   0   0   0
SRM25  4   0   0   0   0   0   0   0   0   0   0   0   2  -4   2   0   0  -1   2  -1   0   0   0   0   0   0
SRM26  4   0   0   0   0   0   0  -1   2   0   0   0   2  -4   0   0   0  -1   2   0   0   0   0   0   0   0
SRM27 12  -1   2  -2   2  -1   2  -6   8  -6   2  -2   8 -12   8  -2   0   0   0   0   0   0   0   0   0   0
SRM28 12   0   0  -2   2  -1   0   0   8  -6   2   0   0 -12   8  -2   0   0   8  -6   2   0   0  -2   2  -1
SRM29 12   0   0   0   0   0   0   0   0   0   0  -2   8 -12   8  -2   2  -6   8  -6   2  -1   2  -2   2  -1
SRM30 12  -1   2  -2   0   0   2  -6   8   0   0  -2   8 -12   0   0   2  -6   8   0   0  -1   2  -2   0   0
"""
_SRM_SHA256 = "7ca0cc2c712159200770f31c49af7cbef3ec2f9589b3dc468dcd582f57c3d109"

ALLOWED_SIZES = (3, 5, 7, 11, 15)


class KernelError(ValueError):
    pass


class ConvolutionError(ValueError):
    pass


@dataclass(frozen=True)
class Kernel:
    """A square, odd-sized filter applied in correlation orientation.

    ``separable`` holds a (column, row) factor pair when the kernel is rank
    one; :func:`convolve` then runs two 1-D passes instead of the full
    2-D sum.
    """

    name: str
    coefficients: np.ndarray
    separable: tuple[np.ndarray, np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        c = np.array(self.coefficients, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2 == 0:
            raise KernelError(f"kernel {self.name}: must be square with odd side")
        if c.shape[0] not in ALLOWED_SIZES:
            raise KernelError(f"kernel {self.name}: unsupported size {c.shape[0]}")
        if self.separable is not None:
            col, row = self.separable
            if not np.allclose(np.outer(col, row), c, rtol=0, atol=1e-15):
                raise KernelError(f"kernel {self.name}: separable factors do not match")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def size(self) -> int:
        return self.coefficients.shape[0]

    @property
    def radius(self) -> int:
        return self.size // 2

    @property
    def is_high_pass(self) -> bool:
        return not self.name.startswith("MEAN")

    def taps(self) -> list[tuple[int, int, float]]:
        """Nonzero coefficients as ``(row, col, value)`` in raster order."""
        rows, cols = np.nonzero(self.coefficients)
        return [(int(a), int(b), float(self.coefficients[a, b])) for a, b in zip(rows, cols)]


def mean_kernel(size: int) -> Kernel:
    coeffs = np.full((size, size), 1.0 / (size * size))
    line = np.full(size, 1.0 / size)
    return Kernel(f"MEAN{size}", coeffs, separable=(line, line))


@dataclass(frozen=True)
class KernelBank:
    h1: tuple[Kernel, ...]
    l1: tuple[Kernel, ...]
    l2: tuple[Kernel, ...]
    h2: tuple[Kernel, ...]
    mean15: Kernel

    def __post_init__(self) -> None:
        if len(self.h2) != 30:
            raise KernelError(f"h2 must hold 30 kernels, got {len(self.h2)}")

    def all_kernels(self) -> list[Kernel]:
        return [*self.h1, *self.l1, *self.l2, *self.h2, self.mean15]

    def by_name(self, name: str) -> Kernel:
        for k in self.all_kernels():
            if k.name == name:
                return k
        raise KeyError(name)


def _parse_srm_table(text: str, expected_sha: str) -> tuple[Kernel, ...]:
    if hashlib.sha256(text.encode("ascii")).hexdigest() != expected_sha:
        raise KernelError("SRM kernel table corrupt (checksum mismatch)")
    kernels = []
    for line in text.strip().splitlines():
        parts = line.split()
        name, divisor = parts[0], int(parts[1])
        numer = np.array([int(v) for v in parts[2:]], dtype=np.float64).reshape(5, 5)
        kernels.append(Kernel(name, numer / divisor))
    return tuple(kernels)


KB3 = Kernel("KB3", np.array([[-1, 2, -1], [2, -4, 2], [-1, 2, -1]]) / 4.0,
             separable=(np.array([1.0, -2.0, 1.0]) / 2.0, np.array([-1.0, 2.0, -1.0]) / 2.0))
KV5 = Kernel(
    "KV5",
    np.array(
        [
            [-1, 2, -2, 2, -1],
            [2, -6, 8, -6, 2],
            [-2, 8, -12, 8, -2],
            [2, -6, 8, -6, 2],
            [-1, 2, -2, 2, -1],
        ]
    )
    / 12.0,
)


def kernel_bank_load(table: str = _SRM_TABLE, checksum: str = _SRM_SHA256) -> KernelBank:
    """Build the fixed bank: H1 = (KB3, KV5), L1 = MEAN3, L2 = (MEAN11, MEAN7), H2 = SRM01..SRM30."""
    return KernelBank(
        h1=(KB3, KV5),
        l1=(mean_kernel(3),),
        l2=(mean_kernel(11), mean_kernel(7)),
        h2=_parse_srm_table(table, checksum),
        mean15=mean_kernel(15),
    )


_DEFAULT_BANK: KernelBank | None = None


def default_bank() -> KernelBank:
    global _DEFAULT_BANK
    if _DEFAULT_BANK is None:
        _DEFAULT_BANK = kernel_bank_load()
    return _DEFAULT_BANK


def image_to_realmap(img: np.ndarray) -> np.ndarray:
    return np.asarray(img).astype(np.float64)


# --- padding ---------------------------------------------------------------


def _check_input(values: np.ndarray, radius: int) -> np.ndarray:
    u = np.asarray(values, dtype=np.float64)
    if u.ndim != 2:
        raise ConvolutionError("expected a 2-D map")
    # reflect padding needs at least radius + 1 samples per axis
    if min(u.shape) <= radius:
        raise ConvolutionError("image too small")
    if not np.all(np.isfinite(u)):
        raise ConvolutionError("non-finite values")
    return u


def mirror_pad(u: np.ndarray, radius: int) -> np.ndarray:
    return np.pad(u, radius, mode="reflect")


def _fold_axis(g: np.ndarray, radius: int, axis: int) -> np.ndarray:
    g = np.moveaxis(g, axis, 0)
    n = g.shape[0] - 2 * radius
    out = g[radius:radius + n].copy()
    if radius:
        out[1:radius + 1] += g[:radius][::-1]
        out[n - radius - 1:n - 1] += g[n + radius:][::-1]
    return np.moveaxis(out, 0, axis)


def mirror_pad_adjoint(g: np.ndarray, radius: int) -> np.ndarray:
    """Transpose of :func:`mirror_pad`: fold the padded border back onto the interior."""
    return _fold_axis(_fold_axis(g, radius, 0), radius, 1)


# --- correlation -----------------------------------------------------------


def _correlate_valid(padded: np.ndarray, kernel: Kernel) -> np.ndarray:
    r = kernel.radius
    h, w = padded.shape[0] - 2 * r, padded.shape[1] - 2 * r
    if kernel.separable is not None:
        col, row = kernel.separable
        tmp = np.zeros((padded.shape[0], w))
        for b, c in enumerate(row):
            tmp += c * padded[:, b:b + w]
        out = np.zeros((h, w))
        for a, c in enumerate(col):
            out += c * tmp[a:a + h, :]
        return out
    out = np.zeros((h, w))
    for a, b, c in kernel.taps():
        out += c * padded[a:a + h, b:b + w]
    return out


def _correlate_valid_adjoint(g: np.ndarray, kernel: Kernel, out: np.ndarray | None = None) -> np.ndarray:
    r = kernel.radius
    h, w = g.shape
    if out is None:
        out = np.zeros((h + 2 * r, w + 2 * r))
    if kernel.separable is not None:
        col, row = kernel.separable
        tmp = np.zeros((h + 2 * r, w))
        for a, c in enumerate(col):
            tmp[a:a + h, :] += c * g
        for b, c in enumerate(row):
            out[:, b:b + w] += c * tmp
        return out
    for a, b, c in kernel.taps():
        out[a:a + h, b:b + w] += c * g
    return out


def convolve(values: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Same-size correlation of ``values`` with ``kernel`` under mirror padding."""
    u = _check_input(values, kernel.radius)
    return _correlate_valid(mirror_pad(u, kernel.radius), kernel)


def convolve_adjoint(grad: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Exact transpose of ``convolve(., kernel)``: <K u, v> == <u, K^T v>."""
    g = _check_input(grad, kernel.radius)
    return mirror_pad_adjoint(_correlate_valid_adjoint(g, kernel), kernel.radius)


def _common_radius(kernels: Sequence[Kernel]) -> int:
    radii = {k.radius for k in kernels}
    if len(radii) != 1:
        raise ConvolutionError("kernels in a batch must share one size")
    return radii.pop()


def convolve_many(values: np.ndarray, kernels: Sequence[Kernel]) -> np.ndarray:
    """Stack of ``convolve(values, k)`` for same-sized kernels, padding once."""
    r = _common_radius(kernels)
    padded = mirror_pad(_check_input(values, r), r)
    return np.stack([_correlate_valid(padded, k) for k in kernels])


def convolve_many_adjoint(grads: Iterable[np.ndarray], kernels: Sequence[Kernel]) -> np.ndarray:
    """Sum over k of ``convolve_adjoint(grads[k], kernels[k])``, folding the border once."""
    r = _common_radius(kernels)
    acc = None
    for g, k in zip(grads, kernels):
        acc = _correlate_valid_adjoint(np.asarray(g, dtype=np.float64), k, acc)
    return mirror_pad_adjoint(acc, r)


def dump_bank(bank: KernelBank) -> str:
    """Plain-text listing: one block per kernel, name header, rows at 12 significant digits."""
    blocks = []
    for k in bank.all_kernels():
        rows = [" ".join(f"{v:.12g}" for v in row) for row in k.coefficients]
        blocks.append("\n".join([f"# {k.name} {k.size}x{k.size}", *rows]))
    return "\n\n".join(blocks) + "\n"

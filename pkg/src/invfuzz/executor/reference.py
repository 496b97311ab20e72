"""Built-in reference targets: mock tensor APIs with an executable validity
predicate, authored ground-truth constraints, seeded defects, and labeled
branch counters.

Each target separates three concerns:

* `validate(args, br)` is the clean oracle used for ground truth, seeds,
  and validity accounting; it never crashes.
* `run_target(...)` models the implementation under test: seeded crash
  defects fire before input validation (that is what makes them bugs), and
  backend-dependent value defects (NaN on gpu, skew, overflow) perturb
  outputs after computation.
* ground truth rules live in the shipped ruleset assets and are
  cross-checked against the validity predicate exhaustively at small bounds.
"""

from __future__ import annotations

import itertools
import signal as _signal
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Iterator, Optional

import numpy as np

from ..dsl import TypedRule, parse_ruleset, type_check
from ..values import (
    ApiInput,
    ApiParam,
    ApiSignature,
    ConcreteValue,
    DEFAULT_DTYPES,
    FloatV,
    IntV,
    NONE,
    TensorV,
    tensor_from_elements,
)

FLOAT32, FLOAT64, INT32, INT64, BOOL_DT, COMPLEX64 = range(6)


class SimulatedCrash(Exception):
    """Raised by a seeded defect. In-process executors catch it; subprocess
    workers convert it into real process death."""

    def __init__(self, signum: int, detail: str):
        self.signum = signum
        self.detail = detail
        super().__init__(detail)


class TargetError(Exception):
    """A rejected input: maps to protocol status Error."""

    def __init__(self, message: str, branch: str):
        self.message = message
        self.branch = branch
        super().__init__(message)


class UnknownApi(Exception):
    pass


@dataclass
class Defect:
    """Seeded bug: a trigger predicate over the concrete input plus an
    effect id in {crash, nan-on-gpu, overflow, value-skew}."""

    effect: str
    description: str


@dataclass
class ReferenceTarget:
    name: str
    signature: ApiSignature
    doc: str
    error_vocab: tuple[str, ...]
    defects: tuple[Defect, ...]
    branch_ids: tuple[str, ...]
    gt_params: tuple[tuple[str, tuple[str, ...]], ...]  # (rule name, param tuple)
    validate: Callable  # (args, br) -> None or raise TargetError
    compute: Callable  # (args, backend, br) -> list[ConcreteValue]
    crash_check: Optional[Callable] = None  # (args) -> None or raise SimulatedCrash
    seed_fn: Callable = None  # (rng, i) -> ApiInput
    probe_fn: Callable = None  # () -> Iterator[ApiInput]


def _broadcastable(s1: tuple[int, ...], s2: tuple[int, ...]) -> bool:
    """Right-aligned pairwise test: sizes equal, 1, or missing."""
    a, b = s1[::-1], s2[::-1]
    for i in range(max(len(a), len(b))):
        x = a[i] if i < len(a) else None
        y = b[i] if i < len(b) else None
        if x is None or y is None:
            continue
        if x != y and x != 1 and y != 1:
            return False
    return True


def _broadcast_shape(s1: tuple[int, ...], s2: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(int(d) for d in np.broadcast_shapes(s1, s2))


def _tensor(args: dict, name: str) -> TensorV:
    v = args.get(name)
    if not isinstance(v, TensorV):
        raise TargetError(f"parameter {name!r} must be a tensor", f"arg.{name}")
    return v


def _int(args: dict, name: str) -> int:
    v = args.get(name)
    if not isinstance(v, IntV):
        raise TargetError(f"parameter {name!r} must be an int", f"arg.{name}")
    return v.value


def _np(t: TensorV) -> Optional[np.ndarray]:
    if t.elements is None:
        return None
    return t.elements.reshape(t.shape)


def _out_tensor(arr: np.ndarray, dtype: int) -> TensorV:
    return tensor_from_elements(arr.shape, dtype, arr.reshape(-1))


def _range_only(shape: tuple[int, ...], dtype: int, lo: float, hi: float) -> TensorV:
    return TensorV(shape, dtype, min(lo, hi), max(lo, hi))


# ---------------------------------------------------------------------------
# add_broadcast


_ADD_SIG = ApiSignature(
    "ref.add_broadcast",
    (
        ApiParam("input", "tensor"),
        ApiParam("other", "tensor"),
        ApiParam("alpha", "float", required=False),
    ),
)


def _add_validate(args: dict, br) -> None:
    a, b = _tensor(args, "input"), _tensor(args, "other")
    if a.dtype != b.dtype:
        br("add_broadcast.b_err_dtype")
        raise TargetError(
            "dtype of input must match dtype of other", "add_broadcast.b_err_dtype"
        )
    if a.ndim == b.ndim:
        br("add_broadcast.b_nd_eq")
    elif a.ndim > b.ndim:
        br("add_broadcast.b_left_longer")
    else:
        br("add_broadcast.b_right_longer")
    if not _broadcastable(a.shape, b.shape):
        br("add_broadcast.b_err_shape")
        raise TargetError(
            "sizes must be equal or 1 at each trailing dimension "
            f"(got {list(a.shape)} vs {list(b.shape)})",
            "add_broadcast.b_err_shape",
        )


def _add_compute(args: dict, backend: str, br) -> list[ConcreteValue]:
    a, b = _tensor(args, "input"), _tensor(args, "other")
    alpha_v = args.get("alpha", NONE)
    if isinstance(alpha_v, FloatV):
        alpha = alpha_v.value
    else:
        br("add_broadcast.b_alpha_default")
        alpha = 1.0
    out_shape = _broadcast_shape(a.shape, b.shape)
    na, nb = _np(a), _np(b)
    if na is None or nb is None:
        corners = [
            a.lo + alpha * b.lo, a.lo + alpha * b.hi,
            a.hi + alpha * b.lo, a.hi + alpha * b.hi,
        ]
        return [_range_only(out_shape, a.dtype, min(corners), max(corners))]
    out = na + alpha * nb
    if backend == "gpu":
        # seeded defect: negative results collapse to NaN on the gpu variant
        out = out.copy()
        out[out < 0] = np.nan
    br("add_broadcast.b_ok")
    return [_out_tensor(out, a.dtype)]


def _add_seed(rng: np.random.Generator, i: int) -> ApiInput:
    dtype = int(rng.choice([FLOAT32, FLOAT64, INT32]))
    nd = int(rng.integers(0, 4))
    shape = tuple(int(rng.integers(1, 5)) for _ in range(nd))
    # other: drop leading dims and/or squash random dims to 1
    keep = int(rng.integers(0, nd + 1))
    other_shape = tuple(
        1 if rng.random() < 0.4 else d for d in shape[nd - keep :]
    )
    lo = float(rng.choice([-2.0, -1.0, 0.0]))
    hi = float(lo + rng.choice([1.0, 2.0, 4.0]))
    args: list[tuple[str, ConcreteValue]] = [
        ("input", _rand_tensor(rng, shape, dtype, lo, hi)),
        ("other", _rand_tensor(rng, other_shape, dtype, lo, hi)),
    ]
    if rng.random() < 0.7:
        args.append(("alpha", FloatV(float(rng.uniform(-2, 2)))))
    return ApiInput("ref.add_broadcast", tuple(args))


def _add_probes() -> Iterator[ApiInput]:
    shapes = _probe_shapes(max_nd=3, dims=(1, 2, 3), include_scalar=True)
    for s1, s2 in itertools.product(shapes, repeat=2):
        for d1, d2 in ((FLOAT32, FLOAT32), (FLOAT32, FLOAT64)):
            yield ApiInput(
                "ref.add_broadcast",
                (
                    ("input", TensorV(s1, d1, 0.0, 1.0)),
                    ("other", TensorV(s2, d2, 0.0, 1.0)),
                    ("alpha", FloatV(1.0)),
                ),
            )


# ---------------------------------------------------------------------------
# narrow


_NARROW_SIG = ApiSignature(
    "ref.narrow",
    (
        ApiParam("input", "tensor"),
        ApiParam("dim", "int"),
        ApiParam("start", "int"),
        ApiParam("length", "int"),
    ),
)


def _narrow_validate(args: dict, br) -> None:
    t = _tensor(args, "input")
    dim = _int(args, "dim")
    start = _int(args, "start")
    length = _int(args, "length")
    if dim < 0:
        br("narrow.b_dim_neg")
    resolved = dim + t.ndim if dim < 0 else dim
    if not 0 <= resolved < t.ndim:
        br("narrow.b_err_dim")
        raise TargetError(
            f"dim {dim} out of range for a {t.ndim}-dimensional tensor", "narrow.b_err_dim"
        )
    if start < 0:
        br("narrow.b_err_start")
        raise TargetError("start must be non-negative", "narrow.b_err_start")
    if start + length > t.shape[resolved]:
        br("narrow.b_err_fit")
        raise TargetError(
            f"start + length exceeds dimension size {t.shape[resolved]}", "narrow.b_err_fit"
        )


def _narrow_compute(args: dict, backend: str, br) -> list[ConcreteValue]:
    t = _tensor(args, "input")
    dim = _int(args, "dim")
    start = _int(args, "start")
    length = _int(args, "length")
    resolved = dim + t.ndim if dim < 0 else dim
    eff_len = max(length, 0)
    if length <= 0:
        br("narrow.b_empty")
    out_shape = tuple(
        eff_len if i == resolved else d for i, d in enumerate(t.shape)
    )
    arr = _np(t)
    if arr is None:
        return [_range_only(out_shape, t.dtype, t.lo, t.hi)]
    sl = [slice(None)] * t.ndim
    sl[resolved] = slice(start, start + eff_len)
    out = arr[tuple(sl)].astype(np.float64)
    if backend == "gpu":
        # seeded benign skew: stays far below the differential tolerance
        out = out + 1e-6
    br("narrow.b_ok")
    return [_out_tensor(out, t.dtype)]


def _narrow_seed(rng: np.random.Generator, i: int) -> ApiInput:
    # first few seeds are authored edges that candidate pruning relies on
    if i == 0:  # negative dim
        t = _rand_tensor(rng, (3, 4), FLOAT32, -1.0, 1.0)
        return _mk_narrow(t, -1, 0, 2)
    if i == 1:  # start greater than ndim (prunes shape(v, start)-style rules)
        t = _rand_tensor(rng, (2, 6), FLOAT32, 0.0, 1.0)
        return _mk_narrow(t, 1, 5, 1)
    if i == 2:  # negative length is allowed when the window stays inside
        t = _rand_tensor(rng, (4,), FLOAT64, -2.0, 0.0)
        return _mk_narrow(t, 0, 3, -1)
    if i == 3:  # zero-size dimension
        t = _rand_tensor(rng, (0, 2), FLOAT32, 0.0, 1.0)
        return _mk_narrow(t, 1, 0, 1)
    nd = int(rng.integers(1, 4))
    shape = tuple(int(rng.integers(1, 7)) for _ in range(nd))
    dtype = int(rng.choice([FLOAT32, FLOAT64, INT64]))
    lo = float(rng.choice([-8.0, -2.0, 0.0]))
    t = _rand_tensor(rng, shape, dtype, lo, lo + float(rng.choice([2.0, 4.0, 16.0])))
    dim = int(rng.integers(-nd, nd))
    size = shape[dim + nd if dim < 0 else dim]
    start = int(rng.integers(0, size + 1))
    length = int(rng.integers(0, size - start + 1))
    return _mk_narrow(t, dim, start, length)


def _mk_narrow(t: TensorV, dim: int, start: int, length: int) -> ApiInput:
    return ApiInput(
        "ref.narrow",
        (("input", t), ("dim", IntV(dim)), ("start", IntV(start)), ("length", IntV(length))),
    )


def _narrow_probes() -> Iterator[ApiInput]:
    shapes = _probe_shapes(max_nd=2, dims=(1, 2, 3), include_scalar=True)
    for shape in shapes:
        for dim in range(-3, 3):
            for start in (-1, 0, 1, 2):
                for length in (-1, 0, 1, 3):
                    yield _mk_narrow(TensorV(shape, FLOAT32, 0.0, 1.0), dim, start, length)


# ---------------------------------------------------------------------------
# argmax


_ARGMAX_SIG = ApiSignature(
    "ref.argmax", (ApiParam("input", "tensor"), ApiParam("dim", "int"))
)


def _argmax_validate(args: dict, br) -> None:
    t = _tensor(args, "input")
    dim = _int(args, "dim")
    if dim < 0:
        br("argmax.b_dim_neg")
    resolved = dim + t.ndim if dim < 0 else dim
    if not 0 <= resolved < t.ndim:
        br("argmax.b_err_dim")
        raise TargetError(
            f"dim {dim} out of range for a {t.ndim}-dimensional tensor", "argmax.b_err_dim"
        )


def _argmax_compute(args: dict, backend: str, br) -> list[ConcreteValue]:
    t = _tensor(args, "input")
    dim = _int(args, "dim")
    resolved = dim + t.ndim if dim < 0 else dim
    out_shape = tuple(d for i, d in enumerate(t.shape) if i != resolved)
    arr = _np(t)
    if arr is None or t.numel == 0:
        if t.shape[resolved] == 0:
            br("argmax.b_empty")
        hi = max(0, t.shape[resolved] - 1)
        return [_range_only(out_shape, INT64, 0.0, float(hi))]
    out = np.argmax(arr, axis=resolved).astype(np.float64)
    br("argmax.b_ok")
    return [_out_tensor(out, INT64)]


def _argmax_seed(rng: np.random.Generator, i: int) -> ApiInput:
    nd = int(rng.integers(1, 5))
    shape = tuple(int(rng.integers(1, 5)) for _ in range(nd))
    dtype = int(rng.choice([FLOAT32, FLOAT64, INT32]))
    lo = float(rng.choice([-10.0, -3.0, 0.0]))
    t = _rand_tensor(rng, shape, dtype, lo, lo + float(rng.choice([2.0, 6.0, 16.0])))
    dim = int(rng.integers(-nd, nd))
    return ApiInput("ref.argmax", (("input", t), ("dim", IntV(dim))))


def _argmax_probes() -> Iterator[ApiInput]:
    shapes = _probe_shapes(max_nd=3, dims=(1, 2, 3), include_scalar=True)
    for shape in shapes:
        for dim in range(-4, 4):
            yield ApiInput(
                "ref.argmax", (("input", TensorV(shape, FLOAT32, 0.0, 1.0)), ("dim", IntV(dim)))
            )


# ---------------------------------------------------------------------------
# channel_shuffle


_CS_SIG = ApiSignature(
    "ref.channel_shuffle", (ApiParam("input", "tensor"), ApiParam("groups", "int"))
)


def _cs_crash_check(args: dict) -> None:
    t = args.get("input")
    g = args.get("groups")
    if not isinstance(t, TensorV) or not isinstance(g, IntV):
        return
    # Seeded defect: the kernel divides by the group count before the
    # validator runs, so groups larger than the channel dimension of an
    # otherwise plausible input crash the process.
    if t.ndim >= 2 and g.value >= 1 and g.value > t.shape[1]:
        raise SimulatedCrash(
            int(_signal.SIGFPE),
            f"floating point exception: groups={g.value} exceeds channel dim {t.shape[1]}",
        )


def _cs_validate(args: dict, br) -> None:
    t = _tensor(args, "input")
    g = _int(args, "groups")
    if g < 1:
        br("channel_shuffle.b_err_groups")
        raise TargetError("groups must be a positive integer", "channel_shuffle.b_err_groups")
    if t.ndim < 3:
        br("channel_shuffle.b_err_rank")
        raise TargetError(
            "channel_shuffle expects input with > 2 dims", "channel_shuffle.b_err_rank"
        )
    if t.shape[1] % g != 0:
        br("channel_shuffle.b_err_div")
        raise TargetError(
            f"number of channels {t.shape[1]} must be divisible by groups {g}",
            "channel_shuffle.b_err_div",
        )


def _cs_compute(args: dict, backend: str, br) -> list[ConcreteValue]:
    t = _tensor(args, "input")
    g = _int(args, "groups")
    arr = _np(t)
    if arr is None or t.numel == 0:
        return [_range_only(t.shape, t.dtype, t.lo, t.hi)]
    n, c = t.shape[0], t.shape[1]
    rest = t.shape[2:]
    out = (
        arr.reshape(n, g, c // g, *rest)
        .swapaxes(1, 2)
        .reshape(t.shape)
        .astype(np.float64)
    )
    br("channel_shuffle.b_ok")
    return [_out_tensor(out, t.dtype)]


def _cs_seed(rng: np.random.Generator, i: int) -> ApiInput:
    nd = int(rng.integers(3, 6))
    g = int(rng.choice([1, 2, 3, 4, 6, 8, 12]))
    channels = g * int(rng.integers(1, 4))
    shape = (int(rng.integers(1, 3)), channels) + tuple(
        int(rng.integers(1, 4)) for _ in range(nd - 2)
    )
    dtype = int(rng.choice([FLOAT32, FLOAT64]))
    lo = float(rng.choice([-4.0, -1.0, 0.0]))
    t = _rand_tensor(rng, shape, dtype, lo, lo + float(rng.choice([2.0, 8.0])))
    return ApiInput("ref.channel_shuffle", (("input", t), ("groups", IntV(g))))


def _cs_probes() -> Iterator[ApiInput]:
    for nd in (2, 3, 4):
        for dims in itertools.product((0, 1, 2, 3, 4), repeat=nd):
            for g in (0, 1, 2, 3, 4, 5, 7):
                yield ApiInput(
                    "ref.channel_shuffle",
                    (("input", TensorV(dims, FLOAT32, 0.0, 1.0)), ("groups", IntV(g))),
                )


# ---------------------------------------------------------------------------
# matmul2d


_MM_SIG = ApiSignature("ref.matmul2d", (ApiParam("a", "tensor"), ApiParam("b", "tensor")))


def _mm_validate(args: dict, br) -> None:
    a, b = _tensor(args, "a"), _tensor(args, "b")
    if a.ndim != 2:
        br("matmul2d.b_err_rank_a")
        raise TargetError("a must be a 2D tensor", "matmul2d.b_err_rank_a")
    if b.ndim != 2:
        br("matmul2d.b_err_rank_b")
        raise TargetError("b must be a 2D tensor", "matmul2d.b_err_rank_b")
    if a.shape[1] != b.shape[0]:
        br("matmul2d.b_err_inner")
        raise TargetError(
            f"inner dimensions must agree, got {a.shape[1]} and {b.shape[0]}",
            "matmul2d.b_err_inner",
        )
    if a.dtype != b.dtype:
        br("matmul2d.b_err_dtype")
        raise TargetError("dtype of a must match dtype of b", "matmul2d.b_err_dtype")


def _mm_compute(args: dict, backend: str, br) -> list[ConcreteValue]:
    a, b = _tensor(args, "a"), _tensor(args, "b")
    na, nb = _np(a), _np(b)
    out_shape = (a.shape[0], b.shape[1])
    if na is None or nb is None:
        k = a.shape[1]
        bound = k * max(abs(a.lo), abs(a.hi)) * max(abs(b.lo), abs(b.hi))
        return [_range_only(out_shape, a.dtype, -bound, bound)]
    out = (na @ nb).astype(np.float64)
    if backend == "gpu" and a.shape[0] >= 2:
        # seeded defect: constant skew well above the differential tolerance
        out = out + 0.5
    br("matmul2d.b_ok")
    return [_out_tensor(out, a.dtype)]


def _mm_seed(rng: np.random.Generator, i: int) -> ApiInput:
    m, k, n = (int(rng.integers(1, 6)) for _ in range(3))
    dtype = int(rng.choice([FLOAT32, FLOAT64]))
    lo = float(rng.choice([-4.0, -1.0, 0.0]))
    hi = float(lo + rng.choice([1.0, 2.0, 8.0]))
    a = _rand_tensor(rng, (m, k), dtype, lo, hi)
    b = _rand_tensor(rng, (k, n), dtype, lo, hi)
    return ApiInput("ref.matmul2d", (("a", a), ("b", b)))


def _mm_probes() -> Iterator[ApiInput]:
    shapes = _probe_shapes(max_nd=3, dims=(1, 2, 3), include_scalar=False)
    for s1, s2 in itertools.product(shapes, repeat=2):
        for d1, d2 in ((FLOAT32, FLOAT32), (FLOAT32, FLOAT64)):
            yield ApiInput(
                "ref.matmul2d",
                (("a", TensorV(s1, d1, 0.0, 1.0)), ("b", TensorV(s2, d2, 0.0, 1.0))),
            )


# ---------------------------------------------------------------------------
# lcm


_LCM_SIG = ApiSignature("ref.lcm", (ApiParam("a", "tensor"), ApiParam("b", "tensor")))


def _lcm_validate(args: dict, br) -> None:
    a, b = _tensor(args, "a"), _tensor(args, "b")
    for name, t in (("a", a), ("b", b)):
        if DEFAULT_DTYPES.by_code(t.dtype).kind != "int":
            br("lcm.b_err_kind")
            raise TargetError(f"lcm expects integer tensors, {name} is not", "lcm.b_err_kind")
    if a.dtype != b.dtype:
        br("lcm.b_err_dtype")
        raise TargetError("dtype of a must match dtype of b", "lcm.b_err_dtype")
    if not _broadcastable(a.shape, b.shape):
        br("lcm.b_err_shape")
        raise TargetError(
            "sizes must be equal or 1 at each trailing dimension "
            f"(got {list(a.shape)} vs {list(b.shape)})",
            "lcm.b_err_shape",
        )


def _lcm_compute(args: dict, backend: str, br) -> list[ConcreteValue]:
    a, b = _tensor(args, "a"), _tensor(args, "b")
    out_shape = _broadcast_shape(a.shape, b.shape)
    na, nb = _np(a), _np(b)
    if na is None or nb is None:
        bound = max(abs(a.lo), abs(a.hi)) * max(abs(b.lo), abs(b.hi))
        return [_range_only(out_shape, a.dtype, 0.0, bound)]
    ia = np.rint(na).astype(np.int64)
    ib = np.rint(nb).astype(np.int64)
    out = np.asarray(np.lcm(ia, ib), dtype=np.float64)
    if backend == "gpu":
        # seeded defect: large operands overflow to infinity on the gpu variant
        big = np.broadcast_to(np.abs(ia) > 1000, out.shape) | np.broadcast_to(
            np.abs(ib) > 1000, out.shape
        )
        if big.any():
            out = out.copy()
            out[big] = np.inf
    br("lcm.b_ok")
    return [_out_tensor(out, a.dtype)]


def _lcm_seed(rng: np.random.Generator, i: int) -> ApiInput:
    dtype = int(rng.choice([INT32, INT64]))
    nd = int(rng.integers(0, 3))
    shape = tuple(int(rng.integers(1, 5)) for _ in range(nd))
    # vary the relative rank: drop leading dims and squash some to 1
    keep = int(rng.integers(0, nd + 1))
    other = tuple(1 if rng.random() < 0.4 else d for d in shape[nd - keep :])
    if rng.random() < 0.5:
        shape, other = other, shape
    lo = float(rng.choice([-8.0, 0.0, 1.0]))
    a = _rand_tensor(rng, shape, dtype, lo, lo + 12.0)
    b = _rand_tensor(rng, other, dtype, lo, lo + 12.0)
    return ApiInput("ref.lcm", (("a", a), ("b", b)))


def _lcm_probes() -> Iterator[ApiInput]:
    shapes = _probe_shapes(max_nd=2, dims=(1, 2), include_scalar=True)
    dtype_pairs = ((INT32, INT32), (INT32, INT64), (INT64, INT64), (FLOAT32, INT32))
    for s1, s2 in itertools.product(shapes, repeat=2):
        for d1, d2 in dtype_pairs:
            yield ApiInput(
                "ref.lcm",
                (("a", TensorV(s1, d1, 0.0, 8.0)), ("b", TensorV(s2, d2, 0.0, 8.0))),
            )


# ---------------------------------------------------------------------------
# shared helpers


def _rand_tensor(
    rng: np.random.Generator, shape: tuple[int, ...], dtype: int, lo: float, hi: float
) -> TensorV:
    numel = int(np.prod(shape)) if shape else 1
    kind = DEFAULT_DTYPES.by_code(dtype).kind
    if kind == "int":
        lo_i, hi_i = int(np.ceil(lo)), int(np.floor(hi))
        elements = rng.integers(lo_i, hi_i + 1, size=numel).astype(np.float64)
        return TensorV(shape, dtype, float(lo_i), float(hi_i), elements)
    elements = rng.uniform(lo, hi, size=numel)
    return TensorV(shape, dtype, lo, hi, elements)


def _probe_shapes(
    max_nd: int, dims: tuple[int, ...], include_scalar: bool
) -> list[tuple[int, ...]]:
    shapes: list[tuple[int, ...]] = [()] if include_scalar else []
    for nd in range(1, max_nd + 1):
        shapes.extend(itertools.product(dims, repeat=nd))
    return shapes


# ---------------------------------------------------------------------------
# registry


def _target(name, sig, doc, vocab, defects, branches, gt, validate, compute,
            seed_fn, probe_fn, crash_check=None) -> ReferenceTarget:
    return ReferenceTarget(
        name=name, signature=sig, doc=doc, error_vocab=vocab, defects=defects,
        branch_ids=branches, gt_params=gt, validate=validate, compute=compute,
        crash_check=crash_check, seed_fn=seed_fn, probe_fn=probe_fn,
    )


_TARGETS: dict[str, ReferenceTarget] = {}


def _register() -> None:
    _TARGETS["ref.add_broadcast"] = _target(
        "ref.add_broadcast", _ADD_SIG,
        "Adds other, scaled by alpha, to input. The tensors input and other "
        "must share a dtype and be broadcastable to a common shape; alpha is "
        "an optional real multiplier.",
        (
            "dtype of input must match dtype of other",
            "sizes must be equal or 1 at each trailing dimension",
        ),
        (Defect("nan-on-gpu", "negative sums become NaN on the gpu backend"),),
        (
            "add_broadcast.b_nd_eq", "add_broadcast.b_left_longer",
            "add_broadcast.b_right_longer", "add_broadcast.b_alpha_default",
            "add_broadcast.b_err_dtype", "add_broadcast.b_err_shape",
            "add_broadcast.b_ok",
        ),
        (("gt_broadcastable", ("input", "other")), ("gt_same_dtype", ("input", "other"))),
        _add_validate, _add_compute, _add_seed, _add_probes,
    )
    _TARGETS["ref.narrow"] = _target(
        "ref.narrow", _NARROW_SIG,
        "Returns a slice of input along dim starting at start with the given "
        "length. dim may be negative; start is non-negative and the window "
        "start + length must stay within the selected dimension.",
        (
            "out of range for a", "start must be non-negative",
            "start + length exceeds dimension size",
        ),
        (Defect("value-skew", "gpu outputs carry a 1e-6 skew, below tolerance"),),
        (
            "narrow.b_dim_neg", "narrow.b_err_dim", "narrow.b_err_start",
            "narrow.b_err_fit", "narrow.b_empty", "narrow.b_ok",
        ),
        (
            ("gt_dim_valid", ("input", "dim")),
            ("gt_start_nonneg", ("start",)),
            ("gt_slice_fits", ("input", "dim", "start", "length")),
        ),
        _narrow_validate, _narrow_compute, _narrow_seed, _narrow_probes,
    )
    _TARGETS["ref.argmax"] = _target(
        "ref.argmax", _ARGMAX_SIG,
        "Returns the indices of the maximum values of input along dim. "
        "dim may be negative, counting from the last dimension.",
        ("out of range for a",),
        (),
        ("argmax.b_dim_neg", "argmax.b_err_dim", "argmax.b_empty", "argmax.b_ok"),
        (("gt_dim_valid", ("input", "dim")),),
        _argmax_validate, _argmax_compute, _argmax_seed, _argmax_probes,
    )
    _TARGETS["ref.channel_shuffle"] = _target(
        "ref.channel_shuffle", _CS_SIG,
        "Divides the channel dimension (dim 1) of input into groups and "
        "interleaves them. input needs at least 3 dims and its channel count "
        "must be divisible by groups.",
        (
            "groups must be a positive integer",
            "channel_shuffle expects input with > 2 dims",
            "must be divisible by groups",
        ),
        (Defect("crash", "groups larger than the channel dim crash the kernel"),),
        (
            "channel_shuffle.b_err_groups", "channel_shuffle.b_err_rank",
            "channel_shuffle.b_err_div", "channel_shuffle.b_ok",
        ),
        (
            ("gt_min_rank", ("input",)),
            ("gt_groups_positive", ("groups",)),
            ("gt_channels_divisible", ("input", "groups")),
        ),
        _cs_validate, _cs_compute, _cs_seed, _cs_probes,
        crash_check=_cs_crash_check,
    )
    _TARGETS["ref.matmul2d"] = _target(
        "ref.matmul2d", _MM_SIG,
        "Matrix product of two 2D tensors a and b with matching inner "
        "dimensions and equal dtypes.",
        ("must be a 2D tensor", "inner dimensions must agree", "dtype of a must match"),
        (Defect("value-skew", "gpu outputs skewed by 0.5 when a has 2+ rows"),),
        (
            "matmul2d.b_err_rank_a", "matmul2d.b_err_rank_b", "matmul2d.b_err_inner",
            "matmul2d.b_err_dtype", "matmul2d.b_ok",
        ),
        (
            ("gt_rank2", ("a",)), ("gt_rank2", ("b",)),
            ("gt_inner_match", ("a", "b")), ("gt_same_dtype", ("a", "b")),
        ),
        _mm_validate, _mm_compute, _mm_seed, _mm_probes,
    )
    _TARGETS["ref.lcm"] = _target(
        "ref.lcm", _LCM_SIG,
        "Elementwise least common multiple of integer tensors a and b, "
        "broadcast to a common shape, with equal integer dtypes.",
        ("lcm expects integer tensors", "dtype of a must match", "sizes must be equal or 1"),
        (Defect("overflow", "operands above 1000 overflow to inf on gpu"),),
        ("lcm.b_err_kind", "lcm.b_err_dtype", "lcm.b_err_shape", "lcm.b_ok"),
        (
            ("gt_int_dtype", ("a",)), ("gt_int_dtype", ("b",)),
            ("gt_same_dtype", ("a", "b")), ("gt_broadcastable", ("a", "b")),
        ),
        _lcm_validate, _lcm_compute, _lcm_seed, _lcm_probes,
    )


_register()


def get_target(api: str) -> ReferenceTarget:
    try:
        return _TARGETS[api]
    except KeyError:
        raise UnknownApi(f"unknown API {api!r}")


def list_reference_targets() -> list[ReferenceTarget]:
    """Stable catalog of the built-in targets, sorted by name."""
    return [_TARGETS[k] for k in sorted(_TARGETS)]


def short_name(api: str) -> str:
    return api.split(".", 1)[1] if "." in api else api


# ---------------------------------------------------------------------------
# ground truth and seeds


_RULESET_CACHE: dict[str, dict[str, TypedRule]] = {}


def load_target_ruleset(api: str) -> dict[str, TypedRule]:
    """All shipped candidate rules for a target, keyed by rule name."""
    name = short_name(api)
    if name in _RULESET_CACHE:
        return _RULESET_CACHE[name]
    text = (
        resources.files("invfuzz.assets.rulesets").joinpath(f"{name}.rules").read_text("utf-8")
    )
    rules, errors = parse_ruleset(text, f"{name}.rules")
    if errors:
        raise RuntimeError(f"shipped ruleset {name}.rules is broken: {errors}")
    typed = {r.name: type_check(r) for r in rules}
    _RULESET_CACHE[name] = typed
    return typed


def ground_truth(api: str) -> list[tuple[TypedRule, tuple[str, ...]]]:
    """Authored ground-truth constraint set: (rule, parameter tuple) pairs.
    Used by acceptance checks to score recall and precision."""
    target = get_target(api)
    ruleset = load_target_ruleset(api)
    return [(ruleset[name], params) for name, params in target.gt_params]


def validity_predicate(api: str, inp: ApiInput) -> bool:
    """The clean validity oracle (never crashes, never defect-affected)."""
    target = get_target(api)
    try:
        target.validate(inp.as_dict(), lambda _b: None)
    except TargetError:
        return False
    return True


def probe_inputs(api: str) -> Iterator[ApiInput]:
    return get_target(api).probe_fn()


def seed_inputs(api: str, count: int, rng: np.random.Generator) -> list[ApiInput]:
    """Valid, diverse seed inputs: every seed passes the validity predicate
    and avoids seeded crash regions; at least 3 distinct ndims and 2 dtypes
    where the target permits."""
    target = get_target(api)
    out: list[ApiInput] = []
    attempts = 0
    i = 0
    while len(out) < count and attempts < count * 50:
        attempts += 1
        inp = target.seed_fn(rng, i)
        i += 1
        try:
            if target.crash_check is not None:
                target.crash_check(inp.as_dict())
            target.validate(inp.as_dict(), lambda _b: None)
        except (TargetError, SimulatedCrash):
            continue
        out.append(inp)
    if len(out) < count:
        raise RuntimeError(f"could not generate {count} valid seeds for {api}")
    return out
